from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

from chainforge.agent.transcript import Label
from chainforge.dataset.store import load_manifest, prompt_counts, transcript_path
from chainforge.errors import DatasetIntegrityError
from chainforge.manifest import sha256_file

logger = logging.getLogger(__name__)

PAIR_COLUMNS = [
    "pair_id", "prompt_key", "task", "i_t", "i_n", "i_p", "n_max", "j", "k",
    "chosen_path", "rejected_path", "chosen_sha256", "rejected_sha256",
]


def _hashes(dataset_dir: Path, prompt_key: str, label: Label, total: int) -> list[str]:
    hashes = []
    for ordinal in range(total):
        path = dataset_dir / transcript_path(prompt_key, label, ordinal)
        if not path.exists():
            raise DatasetIntegrityError(path, "transcript needed for pairing is missing")
        hashes.append(sha256_file(path))
    return hashes


def augment(dataset_dir: Path) -> pd.DataFrame:
    """Cross every right completion of a prompt with every wrong one of the same prompt.

    Pairs reference transcripts by path and content hash; ``export`` reads
    the content back. A prompt without right or without wrong chains adds
    no pairs.
    """
    dataset_dir = Path(dataset_dir)
    counts = prompt_counts(load_manifest(dataset_dir))

    frames = []
    for prompt in tqdm(list(counts.itertuples(index=False)), desc="Crossing completions"):
        # 1. Hash both sides, even when the product is empty, so missing files surface
        right = _hashes(dataset_dir, prompt.prompt_key, Label.RIGHT, prompt.n_right)
        wrong = _hashes(dataset_dir, prompt.prompt_key, Label.WRONG, prompt.n_wrong)
        if not right or not wrong:
            logger.debug("%s contributes no pairs (%d right, %d wrong)", prompt.prompt_key, len(right), len(wrong))
            continue

        # 2. Full product, j major
        j = np.repeat(np.arange(len(right)), len(wrong))
        k = np.tile(np.arange(len(wrong)), len(right))
        frames.append(pd.DataFrame({
            "prompt_key": prompt.prompt_key,
            "task": prompt.task,
            "i_t": prompt.i_t,
            "i_n": prompt.i_n,
            "i_p": prompt.i_p,
            "n_max": prompt.n_max,
            "j": j,
            "k": k,
            "chosen_path": [transcript_path(prompt.prompt_key, Label.RIGHT, x) for x in j],
            "rejected_path": [transcript_path(prompt.prompt_key, Label.WRONG, x) for x in k],
            "chosen_sha256": np.asarray(right, dtype=object)[j],
            "rejected_sha256": np.asarray(wrong, dtype=object)[k],
        }))

    if not frames:
        logger.warning("No prompt has both right and wrong completions; D^a is empty")
        return pd.DataFrame(columns=PAIR_COLUMNS)

    pairs = pd.concat(frames, ignore_index=True)
    pairs.insert(0, "pair_id", np.arange(len(pairs), dtype="int64"))
    return pairs[PAIR_COLUMNS]


def expected_pair_count(counts: pd.DataFrame) -> int:
    return int((counts["n_right"] * counts["n_wrong"]).sum())
