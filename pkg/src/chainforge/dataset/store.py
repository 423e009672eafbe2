"""Read side of the on-disk dataset D* written by ``agent.engine.generate_dataset``."""

from __future__ import annotations

import logging
from pathlib import Path

import pandas as pd
from tqdm import tqdm

from chainforge.agent.transcript import Label, check_alternation, read_transcript
from chainforge.agent.verifier import classify_chain
from chainforge.errors import DatasetIntegrityError, TranscriptStructureError
from chainforge.manifest import MANIFEST, read_json, sha256_file

logger = logging.getLogger(__name__)

PROMPT_COLUMNS = ["prompt_key", "task", "i_t", "i_n", "i_p", "n_max", "n_right", "n_wrong"]


def load_manifest(dataset_dir: Path) -> dict:
    path = Path(dataset_dir) / MANIFEST
    if not path.exists():
        raise DatasetIntegrityError(path, "dataset manifest is missing")
    manifest = read_json(path)
    if "prompts" not in manifest or "n_c" not in manifest:
        raise DatasetIntegrityError(path, "manifest has no prompt table")
    incomplete = [key for key, entry in manifest["prompts"].items() if not entry.get("complete")]
    if incomplete:
        raise DatasetIntegrityError(path, f"generation did not finish for {incomplete}")
    return manifest


def prompt_counts(manifest: dict) -> pd.DataFrame:
    """One row per prompt with its right/wrong counts, ordered by (i_t, i_n, i_p)."""
    rows = [{"prompt_key": key, **entry} for key, entry in manifest["prompts"].items()]
    df = pd.DataFrame(rows, columns=PROMPT_COLUMNS + ["attempts", "aborted", "complete"])
    df = df[PROMPT_COLUMNS].sort_values(["i_t", "i_n", "i_p"]).reset_index(drop=True)
    return df.astype({c: "int64" for c in ["i_t", "i_n", "i_p", "n_max", "n_right", "n_wrong"]})


def transcript_path(prompt_key: str, label: Label, ordinal: int) -> str:
    return f"{prompt_key}/{label.value}/{ordinal}.jsonl"


def read_prompt(dataset_dir: Path, prompt_key: str) -> str:
    path = Path(dataset_dir) / prompt_key / "prompt.txt"
    if not path.exists():
        raise DatasetIntegrityError(path, "prompt file is missing")
    return path.read_text(encoding="utf-8")


def scan_dataset(dataset_dir: Path) -> pd.DataFrame:
    """Index every stored transcript: prompt identity, label, ordinal, relative path and hash."""
    dataset_dir = Path(dataset_dir)
    counts = prompt_counts(load_manifest(dataset_dir))

    rows = []
    for prompt in counts.itertuples(index=False):
        for label, total in ((Label.RIGHT, prompt.n_right), (Label.WRONG, prompt.n_wrong)):
            for ordinal in range(total):
                relative = transcript_path(prompt.prompt_key, label, ordinal)
                path = dataset_dir / relative
                if not path.exists():
                    raise DatasetIntegrityError(path, "transcript listed in the manifest is missing")
                rows.append({
                    "prompt_key": prompt.prompt_key,
                    "task": prompt.task,
                    "i_t": prompt.i_t,
                    "i_n": prompt.i_n,
                    "i_p": prompt.i_p,
                    "n_max": prompt.n_max,
                    "label": label.value,
                    "ordinal": ordinal,
                    "path": relative,
                    "sha256": sha256_file(path),
                })
    return pd.DataFrame(rows, columns=[
        "prompt_key", "task", "i_t", "i_n", "i_p", "n_max", "label", "ordinal", "path", "sha256",
    ])


def verify_dataset(dataset_dir: Path) -> pd.DataFrame:
    """Re-read every transcript, check its structure and recompute its label.

    Returns the per-prompt counts; any disagreement with the stored layout is
    a ``DatasetIntegrityError`` naming the file.
    """
    dataset_dir = Path(dataset_dir)
    manifest = load_manifest(dataset_dir)
    counts = prompt_counts(manifest)

    for prompt in tqdm(list(counts.itertuples(index=False)), desc="Verifying transcripts"):
        if prompt.n_right + prompt.n_wrong != manifest["n_c"]:
            raise DatasetIntegrityError(
                dataset_dir / prompt.prompt_key,
                f"{prompt.n_right} right + {prompt.n_wrong} wrong != n_c={manifest['n_c']}",
            )
        for label, total in ((Label.RIGHT, prompt.n_right), (Label.WRONG, prompt.n_wrong)):
            for ordinal in range(total):
                path = dataset_dir / transcript_path(prompt.prompt_key, label, ordinal)
                turns = read_transcript(path)
                try:
                    check_alternation(turns)
                    recomputed = classify_chain(turns, prompt.n_max)
                except TranscriptStructureError as exc:
                    raise DatasetIntegrityError(path, str(exc)) from exc
                if recomputed.label is not label:
                    raise DatasetIntegrityError(
                        path, f"stored as {label.value} but classifies as {recomputed.label.value}"
                    )
    logger.info("Verified %d transcripts in %d prompts", int((counts.n_right + counts.n_wrong).sum()), len(counts))
    return counts
