"""Stage runners wired by the CLI. Each stage reads its inputs under
``output_root``, writes its artifacts plus a manifest, and logs its steps."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict
from pathlib import Path

import pandas as pd

from chainforge.agent.backend import ChatCompletionClient, HttpBackend, MockBackend, MockPolicy
from chainforge.agent.engine import generate_dataset
from chainforge.agent.functions import FactStore
from chainforge.agent.problems import load_problem_pack
from chainforge.config import RunConfig
from chainforge.dataset.augment import augment, expected_pair_count
from chainforge.dataset.export import export_dpo, read_dpo
from chainforge.dataset.sampling import SamplePlan, sample_pairs
from chainforge.dataset.split import count_per_problem, count_totals, counts_to_json, render_counts, split
from chainforge.dataset.store import load_manifest, prompt_counts
from chainforge.errors import ChainforgeError, DatasetIntegrityError, StageDependencyError
from chainforge.evaluation.metrics import score_dataset
from chainforge.evaluation.report import combine_scores, render_report, wilcoxon_table
from chainforge.manifest import MANIFEST, sha256_file, write_json, write_manifest
from chainforge.modeling.dpo import load_logp_table, score_pairs
from chainforge.modeling.gradcheck import run_checks

logger = logging.getLogger(__name__)

STAGES = ("generate", "augment", "sample", "split", "export", "eval", "report", "dpo-check")


def _require(stage: str, prerequisite: str, path: Path):
    if not Path(path).exists():
        raise StageDependencyError(stage, prerequisite, str(path))


def _to_parquet(df: pd.DataFrame, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_parquet(path, index=False, engine="pyarrow", compression="snappy")


def _write_text(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


def _hashes(*paths: Path) -> dict:
    return {p.name: sha256_file(p) for p in paths}


def build_backend(cfg: RunConfig, problems):
    if cfg.backend.kind == "http":
        return HttpBackend(ChatCompletionClient(cfg.backend.http))
    policy = MockPolicy.from_problems(
        problems,
        seed=cfg.seeds.generate,
        error_rate=cfg.backend.mock.error_rate,
        premature_stop_rate=cfg.backend.mock.premature_stop_rate,
    )
    return MockBackend(policy)


def backend_settings(cfg: RunConfig) -> dict:
    """Backend parameters that shape the generated chains."""
    if cfg.backend.kind == "http":
        http = cfg.backend.http
        return {"kind": "http", "endpoint": http.endpoint, "model": http.model, "temperature": http.temperature}
    return {"kind": "mock", **asdict(cfg.backend.mock)}


# -----------------------
# Stages
# -----------------------
def run_generate(cfg: RunConfig) -> dict:
    logger.info("↓ Loading problem pack and fact store...")
    problems = load_problem_pack(cfg.problems)
    facts = FactStore.load(cfg.facts)
    backend = build_backend(cfg, problems)

    logger.info(
        "☼ Step 1/1: Generating %d chains per prompt for %d problems x n_max %s (%s backend)...",
        cfg.generation.n_c, len(problems), list(cfg.generation.n_max), cfg.backend.kind,
    )
    header = {"stage": "generate", "config_hash": cfg.hash, "backend": cfg.backend.kind}
    manifest = generate_dataset(
        problems,
        backend,
        facts,
        n_c=cfg.generation.n_c,
        n_max_values=cfg.generation.n_max,
        seed=cfg.seeds.generate,
        out_dir=cfg.dataset_dir,
        workers=cfg.generation.workers,
        max_attempts_factor=cfg.generation.max_attempts_factor,
        header=header,
        backend_settings=backend_settings(cfg),
    )
    counts = prompt_counts(manifest)
    logger.info("✓ Generation completed: %d right / %d wrong chains stored in: %s",
                counts.n_right.sum(), counts.n_wrong.sum(), cfg.dataset_dir)
    return manifest


def run_augment(cfg: RunConfig) -> pd.DataFrame:
    _require("augment", "generate", cfg.dataset_dir / MANIFEST)
    out = cfg.stage_dir("augment")

    logger.info("☼ Step 1/1: Crossing right and wrong completions per prompt...")
    pairs = augment(cfg.dataset_dir)
    expected = expected_pair_count(prompt_counts(load_manifest(cfg.dataset_dir)))
    if len(pairs) != expected:
        raise DatasetIntegrityError(cfg.dataset_dir, f"augmentation produced {len(pairs)} pairs, expected {expected}")

    logger.info("↑ Saving %d pairs...", len(pairs))
    _to_parquet(pairs, out / "pairs.parquet")
    write_manifest(out, "augment", cfg.hash, None, pairs=len(pairs), outputs=_hashes(out / "pairs.parquet"))
    logger.info("✓ Augmentation completed successfully. Pairs stored in: %s", out)
    return pairs


def run_sample(cfg: RunConfig) -> pd.DataFrame:
    source = cfg.stage_dir("augment") / "pairs.parquet"
    _require("sample", "augment", source)
    out = cfg.stage_dir("sample")

    logger.info("↓ Loading augmented pairs...")
    pairs = pd.read_parquet(source, engine="pyarrow")
    plan = SamplePlan(cfg.sampling.n_s, cfg.seeds.sample, cfg.sampling.replacement)
    logger.info("☼ Step 1/1: Drawing %d pairs...", plan.n_s)
    sampled = sample_pairs(pairs, plan)

    logger.info("↑ Saving sample...")
    _to_parquet(sampled, out / "pairs.parquet")
    write_manifest(out, "sample", cfg.hash, plan.seed, n_s=plan.n_s, population=len(pairs),
                   replacement=plan.replacement, outputs=_hashes(out / "pairs.parquet"))
    logger.info("✓ Sampling completed successfully. Sample stored in: %s", out)
    return sampled


def run_split(cfg: RunConfig) -> tuple[pd.DataFrame, pd.DataFrame]:
    source = cfg.stage_dir("sample") / "pairs.parquet"
    _require("split", "sample", source)
    out = cfg.stage_dir("split")
    spec = cfg.split.spec()

    logger.info("↓ Loading sampled pairs...")
    pairs = pd.read_parquet(source, engine="pyarrow")
    logger.info("☼ Step 1/2: Splitting by problem identity...")
    train, test = split(pairs, spec)
    logger.info("☼ Step 2/2: Counting samples per task and problem...")
    totals, per_problem = count_totals(train, test), count_per_problem(train, test, spec)

    logger.info("↑ Saving train/test sets and count tables...")
    _to_parquet(train, out / "train.parquet")
    _to_parquet(test, out / "test.parquet")
    _write_text(out / "counts.txt", render_counts(totals, per_problem))
    write_json(out / "counts.json", counts_to_json(totals, per_problem))
    write_manifest(
        out, "split", cfg.hash, None,
        train_fol=list(cfg.split.train_fol), train_gsm8k=list(cfg.split.train_gsm8k),
        train=len(train), test=len(test),
        outputs=_hashes(out / "train.parquet", out / "test.parquet", out / "counts.json"),
    )
    logger.info("✓ Split completed successfully: %d train / %d test pairs in: %s", len(train), len(test), out)
    return train, test


def run_export(cfg: RunConfig) -> dict:
    source = cfg.stage_dir("split")
    for name in ("train", "test"):
        _require("export", "split", source / f"{name}.parquet")
    out = cfg.stage_dir("export")

    written = {}
    for step, name in enumerate(("train", "test"), start=1):
        logger.info("☼ Step %d/2: Exporting %s pairs as DPO JSONL...", step, name)
        pairs = pd.read_parquet(source / f"{name}.parquet", engine="pyarrow")
        written[name] = export_dpo(pairs, cfg.dataset_dir, out / f"{name}.jsonl")

    write_manifest(out, "export", cfg.hash, None, format="dpo-jsonl", records=written,
                   outputs=_hashes(out / "train.jsonl", out / "test.jsonl"))
    logger.info("✓ Export completed successfully. DPO files stored in: %s", out)
    return written


def run_eval(cfg: RunConfig) -> pd.DataFrame:
    dataset_a, dataset_b = cfg.evaluation_dirs()
    for path in (dataset_a, dataset_b):
        _require("eval", "generate", path / MANIFEST)
    out = cfg.stage_dir("eval")
    spec = cfg.split.spec()

    logger.info("↓ Loading datasets %s and %s...", dataset_a, dataset_b)
    logger.info("☼ Step 1/2: Scoring every problem...")
    scores = combine_scores(score_dataset(dataset_a, spec), score_dataset(dataset_b, spec))
    logger.info("☼ Step 2/2: Wilcoxon signed-rank tests...")
    table = wilcoxon_table(scores, cfg.evaluation.alpha)

    logger.info("↑ Saving scores...")
    _to_parquet(scores.reset_index(drop=True), out / "scores.parquet")
    write_json(out / "wilcoxon.json", table)
    write_manifest(out, "eval", cfg.hash, None, dataset_a=str(dataset_a), dataset_b=str(dataset_b),
                   alpha=cfg.evaluation.alpha, outputs=_hashes(out / "scores.parquet", out / "wilcoxon.json"))
    logger.info("✓ Evaluation completed successfully. Scores stored in: %s", out)
    return scores


def run_report(cfg: RunConfig) -> str:
    source = cfg.stage_dir("eval") / "scores.parquet"
    _require("report", "eval", source)
    out = cfg.stage_dir("report")

    logger.info("↓ Loading scores...")
    scores = pd.read_parquet(source, engine="pyarrow")
    logger.info("☼ Step 1/1: Rendering accuracy and Wilcoxon tables...")
    text, data = render_report(scores, cfg.evaluation.alpha)

    logger.info("↑ Saving report...")
    _write_text(out / "report.txt", text)
    write_json(out / "report.json", data)
    write_manifest(out, "report", cfg.hash, None, outputs=_hashes(out / "report.txt", out / "report.json"))
    logger.info("✓ Report completed successfully. Tables stored in: %s", out)
    print(text, end="")
    return text


def run_dpo_check(cfg: RunConfig) -> dict:
    out = cfg.stage_dir("dpo")
    report, history = run_checks(cfg.seeds.dpo, cfg.dpo.core(), cfg.dpo.toy_prompts, cfg.dpo.toy_completions)

    logger.info("↑ Saving check report and toy training history...")
    write_json(out / "check.json", report)
    _to_parquet(history, out / "toy_history.parquet")
    write_manifest(out, "dpo-check", cfg.hash, cfg.seeds.dpo,
                   outputs=_hashes(out / "check.json", out / "toy_history.parquet"))

    for suite in ("identity", "gradient", "training"):
        print(f"{suite:<10} {'PASS' if report[suite]['passed'] else 'FAIL'}  {json.dumps(report[suite])}")
    if report["passed"]:
        logger.info("✓ DPO checks passed. Report stored in: %s", out)
    else:
        logger.error("DPO checks failed; see %s", out / "check.json")
    return report


def run_dpo_loss(pairs_path: Path, table_path: Path, beta: float) -> float:
    logger.info("↓ Loading exported pairs and log-prob table...")
    table = load_logp_table(table_path)
    loss = score_pairs(read_dpo(pairs_path), table, beta, source=Path(table_path))
    print(f"dpo_loss={loss:.12g}")
    return loss


RUNNERS = {
    "generate": run_generate,
    "augment": run_augment,
    "sample": run_sample,
    "split": run_split,
    "export": run_export,
    "eval": run_eval,
    "report": run_report,
    "dpo-check": run_dpo_check,
}


def run_stage(stage: str, cfg: RunConfig) -> int:
    """Run one stage; returns its exit status (0 ok, 2 when dpo-check fails)."""
    if stage not in RUNNERS:
        raise ChainforgeError(f"unknown stage {stage!r}; expected one of {STAGES}")
    result = RUNNERS[stage](cfg)
    if stage == "dpo-check" and not result["passed"]:
        return 2
    return 0
