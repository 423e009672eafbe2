"""Agent loop: prompt -> assistant command -> function output, until Stop() or the cap."""

from __future__ import annotations

import logging
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from tqdm import tqdm

from chainforge.agent.backend import Backend
from chainforge.agent.command_lang import SyntaxFault, parse_call, render_error
from chainforge.agent.functions import Effect, FactStore, dispatch, render_prompt, specs_for
from chainforge.agent.problems import ProblemSpec
from chainforge.agent.state import ChainState
from chainforge.agent.transcript import ChainTranscript, ChatMessage, Label, write_transcript
from chainforge.agent.verifier import classify_chain
from chainforge.errors import BackendError, ChainAborted, GenerationExhaustedError
from chainforge.manifest import MANIFEST, config_hash, read_json, write_json

logger = logging.getLogger(__name__)


def run_chain(
    problem: ProblemSpec,
    backend: Backend,
    n_max: int,
    facts: FactStore,
    rng: Optional[np.random.Generator] = None,
    prompt: Optional[str] = None,
) -> ChainTranscript:
    prompt = prompt if prompt is not None else render_prompt(problem, specs_for(problem))
    rng = rng if rng is not None else np.random.default_rng(0)
    state = ChainState()
    turns: list[ChatMessage] = []

    while len(turns) // 2 < n_max:
        messages = [ChatMessage("user", prompt), *turns]
        try:
            content = backend.next_turn(messages, problem, rng)
        except BackendError as exc:
            raise ChainAborted(problem.problem_id, len(turns) // 2, exc) from exc

        outcome = parse_call(content)
        if isinstance(outcome, SyntaxFault):
            reply, effect = render_error(outcome), Effect.NONE
        else:
            result = dispatch(outcome, problem, state, facts)
            reply, effect = result.content, result.effect

        turns += [ChatMessage("assistant", content), ChatMessage("user", reply)]
        if effect is Effect.STOP:
            break

    transcript = ChainTranscript(prompt, tuple(turns))
    return replace(transcript, label=classify_chain(transcript, n_max))


# -----------------------
# Dataset generation
# -----------------------
@dataclass(frozen=True)
class PromptJob:
    problem: ProblemSpec
    n_max: int
    i_n: int

    @property
    def key(self) -> str:
        return f"{self.problem.task.value}/nmax_{self.n_max}/problem_{self.problem.i_p}"


def chain_rng(seed: int, job: PromptJob, attempt: int) -> np.random.Generator:
    return np.random.default_rng([seed, job.problem.task.index, job.i_n, job.problem.i_p, attempt])


def _attempt(job, backend, facts, prompt, seed, attempt) -> Optional[ChainTranscript]:
    try:
        return run_chain(job.problem, backend, job.n_max, facts, chain_rng(seed, job, attempt), prompt)
    except ChainAborted as exc:
        logger.warning("Aborted chain %s (attempt %d): %s", job.key, attempt, exc.cause)
        return None


def _generate_prompt(job, backend, facts, n_c, seed, directory: Path, workers, max_attempts) -> dict:
    prompt = render_prompt(job.problem, specs_for(job.problem))
    if directory.exists():
        shutil.rmtree(directory)
    directory.mkdir(parents=True)
    (directory / "prompt.txt").write_text(prompt, encoding="utf-8")

    n_right = n_wrong = aborted = 0
    attempt = 0
    with ThreadPoolExecutor(max_workers=workers) as pool:
        while n_right + n_wrong < n_c:
            if attempt >= max_attempts:
                raise GenerationExhaustedError(
                    f"{job.key}: only {n_right + n_wrong}/{n_c} chains completed after {attempt} attempts"
                )
            batch = range(attempt, min(attempt + n_c - n_right - n_wrong, max_attempts))
            results = pool.map(lambda a: _attempt(job, backend, facts, prompt, seed, a), batch)
            for transcript in results:
                if transcript is None:
                    aborted += 1
                elif transcript.label.label is Label.RIGHT:
                    write_transcript(directory / "right" / f"{n_right}.jsonl", transcript.turns)
                    n_right += 1
                else:
                    write_transcript(directory / "wrong" / f"{n_wrong}.jsonl", transcript.turns)
                    n_wrong += 1
            attempt = batch.stop

    return {
        "task": job.problem.task.value,
        "i_t": job.problem.task.index,
        "i_n": job.i_n,
        "i_p": job.problem.i_p,
        "n_max": job.n_max,
        "n_right": n_right,
        "n_wrong": n_wrong,
        "aborted": aborted,
        "attempts": attempt,
        "complete": True,
    }


def generation_hash(
    problems: Sequence[ProblemSpec],
    facts: FactStore,
    n_c: int,
    n_max_values: Sequence[int],
    seed: int,
    max_attempts_factor: int,
    backend_settings: dict,
) -> str:
    return config_hash({
        "problems": [repr(problem) for problem in problems],
        "facts": {
            "actors": sorted(facts.actors),
            "movies": sorted(facts.movies),
            "acted_in": sorted(facts.acted_in),
        },
        "n_c": n_c,
        "n_max": sorted(set(n_max_values)),
        "seed": seed,
        "max_attempts_factor": max_attempts_factor,
        "backend": backend_settings,
    })


def generate_dataset(
    problems: Sequence[ProblemSpec],
    backend: Backend,
    facts: FactStore,
    n_c: int,
    n_max_values: Sequence[int],
    seed: int,
    out_dir: Path,
    workers: int = 1,
    max_attempts_factor: int = 3,
    header: Optional[dict] = None,
    backend_settings: Optional[dict] = None,
) -> dict:
    """Write D* under ``out_dir`` and return its manifest.

    Prompts already marked complete are kept only when the existing manifest
    carries the same ``generation_hash``: seed, ``n_c``, caps, attempt budget,
    problem pack, fact store and ``backend_settings``. Any other manifest is
    discarded together with the prompt directories it lists.
    """
    if n_c < 1:
        raise ValueError("n_c must be >= 1")
    out_dir = Path(out_dir)
    ordered_caps = sorted(set(n_max_values))
    jobs = [
        PromptJob(problem, n_max, i_n)
        for i_n, n_max in enumerate(ordered_caps)
        for problem in problems
    ]

    fingerprint = generation_hash(
        problems, facts, n_c, ordered_caps, seed, max_attempts_factor, backend_settings or {}
    )
    manifest = {
        **(header or {}), "seed": seed, "n_c": n_c, "n_max": ordered_caps,
        "generation_hash": fingerprint, "prompts": {},
    }
    previous = out_dir / MANIFEST
    if previous.exists():
        old = read_json(previous)
        stale = old.get("prompts", {})
        if old.get("generation_hash") == fingerprint:
            manifest["prompts"] = {k: v for k, v in stale.items() if v.get("complete")}
        else:
            logger.info("Existing dataset in %s was generated with other settings, regenerating", out_dir)
            for key in stale:
                shutil.rmtree(out_dir / key, ignore_errors=True)
            previous.unlink()

    for job in tqdm(jobs, desc="Generating chains"):
        if job.key in manifest["prompts"]:
            logger.info("Skipping %s (already complete)", job.key)
            continue
        entry = _generate_prompt(
            job, backend, facts, n_c, seed, out_dir / job.key, workers, max_attempts_factor * n_c
        )
        manifest["prompts"][job.key] = entry
        write_json(previous, manifest)
        logger.debug("%s: %d right / %d wrong", job.key, entry["n_right"], entry["n_wrong"])

    # job order, whatever order the prompts were completed in
    manifest["prompts"] = {job.key: manifest["prompts"][job.key] for job in jobs}
    write_json(previous, manifest)
    return manifest
