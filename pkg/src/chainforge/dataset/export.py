from __future__ import annotations

import hashlib
import json
import logging
from functools import lru_cache
from pathlib import Path
from typing import Iterator

import pandas as pd
from tqdm import tqdm

from chainforge.agent.transcript import ChatMessage, read_transcript
from chainforge.dataset.store import read_prompt
from chainforge.errors import DatasetIntegrityError

logger = logging.getLogger(__name__)

FORMATS = ("dpo-jsonl",)


def dpo_record(prompt: str, chosen, rejected) -> dict:
    return {
        "prompt": prompt,
        "chosen": [m.to_dict() for m in chosen],
        "rejected": [m.to_dict() for m in rejected],
    }


def record_line(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False) + "\n"


def export_dpo(pairs: pd.DataFrame, dataset_dir: Path, path: Path) -> int:
    """Materialize pairs as DPO JSONL, one record per pair in the given row order."""
    dataset_dir = Path(dataset_dir)

    @lru_cache(maxsize=None)
    def prompt_for(prompt_key: str) -> str:
        return read_prompt(dataset_dir, prompt_key)

    @lru_cache(maxsize=4096)
    def turns_for(relative: str, sha256: str) -> tuple[ChatMessage, ...]:
        file = dataset_dir / relative
        if not file.exists():
            raise DatasetIntegrityError(file, "transcript referenced by a pair is missing")
        if hashlib.sha256(file.read_bytes()).hexdigest() != sha256:
            raise DatasetIntegrityError(file, "content hash differs from the one recorded at augmentation")
        return tuple(read_transcript(file))

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8", newline="\n") as out:
        for pair in tqdm(pairs.itertuples(index=False), total=len(pairs), desc=f"Exporting {path.name}"):
            record = dpo_record(
                prompt_for(pair.prompt_key),
                turns_for(pair.chosen_path, pair.chosen_sha256),
                turns_for(pair.rejected_path, pair.rejected_sha256),
            )
            out.write(record_line(record))
    tmp.replace(path)
    logger.debug("Wrote %d records to %s", len(pairs), path)
    return len(pairs)


def read_dpo(path: Path) -> Iterator[dict]:
    """Parse an exported file back into records of ``ChatMessage`` tuples."""
    path = Path(path)
    with path.open(encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                yield {
                    "prompt": raw["prompt"],
                    "chosen": tuple(ChatMessage(m["role"], m["content"]) for m in raw["chosen"]),
                    "rejected": tuple(ChatMessage(m["role"], m["content"]) for m in raw["rejected"]),
                }
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetIntegrityError(path, f"line {number} is not a DPO record ({exc})") from exc
