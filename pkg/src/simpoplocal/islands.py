"""Hub-and-spoke island model around a central SMS-EMOA archive.

Islands are short SMS-EMOA runs seeded from the central archive.  Their
survivors are merged back one at a time, and every ``reevaluation_period``-th
evaluation call (counted over the whole orchestration) re-measures an archive
member instead of a new genome.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import os
import time
from collections import deque
from concurrent.futures import FIRST_COMPLETED, Executor, wait
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .emoa import Archive, EmoaConfig, Individual, random_individual, sms_emoa_run
from .errors import CheckpointError
from .model import Landscape, ParameterSet
from .objectives import EvaluationConfig, ObjectiveVector, evaluate
from .seeding import derive_seed, make_rng

CHECKPOINT_FORMAT = "simpoplocal-checkpoint"
CHECKPOINT_VERSION = 1

# stream keys under the master seed
_INIT_STREAM, _ORCHESTRATOR_STREAM, _JOB_STREAM, _INIT_EVAL_STREAM = 0, 1, 2, 3


@dataclass(frozen=True)
class OrchestratorConfig:
    central_capacity: int = 200
    island_population: int = 50
    concurrent_islands: int = 1
    total_islands: int = 10
    island_budget: int = 30
    reevaluation_period: int = 100
    checkpoint_every: int = 1
    average_reevaluations: bool = False
    max_retries: int = 3

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, int) and not isinstance(value, bool) and value < 1:
                raise ValueError(f"{f.name} must be >= 1, got {value}")

    @classmethod
    def from_dict(cls, data: dict) -> "OrchestratorConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(sorted(unknown)[0])
        return cls(**data)


@dataclass(eq=False)
class IslandJob:
    job_id: int
    seed_individuals: list[Individual]
    evaluation_budget: int
    rng_seed: int
    # global index of this job's first evaluation call
    eval_offset: int

    def __post_init__(self):
        if self.evaluation_budget < 1:
            raise ValueError("evaluation_budget must be >= 1")
        if not self.seed_individuals or any(not s.evaluated for s in self.seed_individuals):
            raise ValueError("seed individuals must be non-empty and evaluated")

    def to_record(self) -> dict:
        return {
            "job_id": self.job_id,
            "seed_individuals": [s.to_record() for s in self.seed_individuals],
            "evaluation_budget": self.evaluation_budget,
            "rng_seed": self.rng_seed,
            "eval_offset": self.eval_offset,
        }

    @classmethod
    def from_record(cls, record: dict) -> "IslandJob":
        return cls(
            job_id=int(record["job_id"]),
            seed_individuals=[Individual.from_record(r) for r in record["seed_individuals"]],
            evaluation_budget=int(record["evaluation_budget"]),
            rng_seed=int(record["rng_seed"]),
            eval_offset=int(record["eval_offset"]),
        )


@dataclass(frozen=True)
class HypervolumeTracePoint:
    islands_completed: int
    hypervolume: float
    wall_clock: float
    job_id: int = 0


@dataclass(frozen=True)
class Reevaluation:
    """One re-measurement made inside an island."""

    call: int
    individual_id: int
    measured: ObjectiveVector


@dataclass
class IslandResult:
    job_id: int
    individuals: list[Individual]
    reevaluations: list[Reevaluation]


@dataclass(frozen=True)
class SimpopEvaluator:
    """Picklable ``(genome, seed) -> ObjectiveVector`` over a fixed landscape."""

    landscape: Landscape
    config: EvaluationConfig = field(default_factory=EvaluationConfig)

    def __call__(self, genome: ParameterSet, seed: int) -> ObjectiveVector:
        return evaluate(genome, self.landscape, self.config, seed)


def apply_measurement(ind: Individual, measured: ObjectiveVector, average: bool) -> None:
    """Replace (or running-average) the stored fitness with a new measurement."""
    if average and ind.fitness is not None and ind.evaluations_seen > 0:
        n = ind.evaluations_seen
        ind.fitness = ObjectiveVector.from_sequence((ind.fitness.as_array() * n + measured.as_array()) / (n + 1))
    else:
        ind.fitness = measured
    ind.evaluations_seen += 1


class ReevaluatingEvaluator:
    """Evaluation function that diverts every ``period``-th call to a re-evaluation.

    On a diverted call a uniformly chosen member of ``archive`` is measured
    again with the call's seed, its fitness replaced, and the archive
    re-filtered; ``None`` is returned so the caller offers its genome again.
    Calls are numbered from ``offset`` so that the period runs across islands.
    """

    def __init__(self, eval_function, archive: Archive, period: int, rng: np.random.Generator, offset: int = 0, average: bool = False):
        if period < 1:
            raise ValueError("period must be >= 1")
        self.eval_function = eval_function
        self.archive = archive
        self.period = period
        self.rng = rng
        self.offset = offset
        self.average = average
        self.calls = 0
        self.log: list[Reevaluation] = []

    def __call__(self, genome: ParameterSet, seed: int) -> ObjectiveVector | None:
        index = self.offset + self.calls
        self.calls += 1
        if (index + 1) % self.period == 0 and len(self.archive) > 0:
            member = self.archive.members[int(self.rng.integers(len(self.archive)))]
            measured = self.eval_function(member.genome, seed)
            apply_measurement(member, measured, self.average)
            self.log.append(Reevaluation(index, member.id, measured))
            self.archive.refilter()
            return None
        return self.eval_function(genome, seed)


def reevaluation_wrapper(eval_function, archive: Archive, period: int, rng: np.random.Generator, offset: int = 0, average: bool = False) -> ReevaluatingEvaluator:
    return ReevaluatingEvaluator(eval_function, archive, period, rng, offset, average)


def run_island(
    job: IslandJob,
    eval_function: Callable,
    emoa_config: EmoaConfig,
    capacity: int,
    reevaluation_period: int,
    average: bool = False,
) -> IslandResult:
    """Run one island; survivors come back ordered by contribution, largest first."""
    archive = Archive(capacity, emoa_config, [s.copy() for s in job.seed_individuals])
    wrapped = reevaluation_wrapper(
        eval_function, archive, reevaluation_period, make_rng(job.rng_seed, 1), job.eval_offset, average
    )
    sms_emoa_run(
        archive,
        job.evaluation_budget,
        wrapped,
        emoa_config,
        make_rng(job.rng_seed, 0),
        id_source=itertools.count(job.job_id << 32),
    )
    contrib = archive.contributions()
    order = sorted(range(len(archive)), key=lambda k: (-contrib[k], archive.members[k].id))
    return IslandResult(job.job_id, [archive.members[k] for k in order], wrapped.log)


def _island_task(args) -> IslandResult:
    return run_island(*args)


@dataclass
class OrchestrationState:
    master_seed: int
    archive: Archive
    trace: list[HypervolumeTracePoint]
    pending: deque
    rng: np.random.Generator
    completed: int = 0
    next_job_id: int = 1
    reevaluations: int = 0
    elapsed: float = 0.0


@dataclass
class OrchestrationResult:
    archive: Archive
    trace: list[HypervolumeTracePoint]
    completed: int
    reevaluations: int


def _initial_state(config, eval_function, master_seed, emoa_config, executor, initial_members) -> OrchestrationState:
    rng = make_rng(master_seed, _INIT_STREAM)
    population = [random_individual(rng, emoa_config, id=i) for i in range(config.central_capacity)]
    seeds = [derive_seed(master_seed, _INIT_EVAL_STREAM, i) for i in range(len(population))]
    genomes = [p.genome for p in population]
    if executor is None:
        values = [eval_function(g, s) for g, s in zip(genomes, seeds)]
    else:
        values = list(executor.map(eval_function, genomes, seeds))
    for ind, value in zip(population, values):
        ind.fitness = value
        ind.evaluations_seen = 1
    archive = Archive(config.central_capacity, emoa_config, population)
    for m in initial_members or ():
        archive.insert(m.copy())
    return OrchestrationState(master_seed, archive, [], deque(), make_rng(master_seed, _ORCHESTRATOR_STREAM))


def _new_job(state: OrchestrationState, config: OrchestratorConfig) -> IslandJob:
    members = state.archive.members
    k = min(config.island_population, len(members))
    picks = state.rng.choice(len(members), size=k, replace=False)
    job_id = state.next_job_id
    state.next_job_id += 1
    return IslandJob(
        job_id=job_id,
        seed_individuals=[members[int(i)].copy() for i in sorted(picks)],
        evaluation_budget=config.island_budget,
        rng_seed=derive_seed(state.master_seed, _JOB_STREAM, job_id),
        eval_offset=(job_id - 1) * config.island_budget,
    )


def merge_island(archive: Archive, result: IslandResult, average: bool = False) -> None:
    """Fold an island's re-measurements, then its survivors, into ``archive``."""
    if result.reevaluations:
        for r in result.reevaluations:
            member = archive.get(r.individual_id)
            if member is not None:
                apply_measurement(member, r.measured, average)
        archive.refilter()
    for ind in result.individuals:
        if ind.id in archive:
            continue
        archive.insert(ind.copy())


def _run_with_retries(job, eval_function, emoa_config, config) -> IslandResult:
    args = (job, eval_function, emoa_config, config.island_population, config.reevaluation_period, config.average_reevaluations)
    last = None
    for _ in range(config.max_retries + 1):
        try:
            return run_island(*args)
        except Exception as exc:  # noqa: BLE001 - a failed island is resubmitted unchanged
            last = exc
    raise RuntimeError(f"island job {job.job_id} failed {config.max_retries + 1} times") from last


def orchestrate(
    config: OrchestratorConfig,
    eval_function: Callable,
    master_seed: int,
    emoa_config: EmoaConfig | None = None,
    executor: Executor | None = None,
    checkpoint_path: str | os.PathLike | None = None,
    resume: bool = False,
    halt_after: int | None = None,
    initial_members: list[Individual] | None = None,
    on_merge: Callable[[OrchestrationState], bool] | None = None,
) -> OrchestrationResult:
    """Run islands until ``config.total_islands`` have been merged.

    Without an executor the jobs run in a FIFO pipeline of
    ``concurrent_islands`` and the run is reproducible per ``master_seed``.
    ``halt_after`` stops after that many merges in this call (the state is
    checkpointed if a path is given); ``on_merge`` may stop the run early by
    returning True.
    """
    emoa_config = emoa_config or EmoaConfig(population_size=config.central_capacity)
    if resume and checkpoint_path is not None and Path(checkpoint_path).exists():
        state = load_checkpoint(checkpoint_path, emoa_config, config)
        if state.master_seed != master_seed:
            raise CheckpointError(f"checkpoint belongs to master seed {state.master_seed}, not {master_seed}")
    else:
        state = _initial_state(config, eval_function, master_seed, emoa_config, executor, initial_members)

    start = time.perf_counter() - state.elapsed
    merged_here = 0

    def fill():
        while len(state.pending) < config.concurrent_islands and state.next_job_id <= config.total_islands:
            state.pending.append(_new_job(state, config))

    def record(result: IslandResult) -> bool:
        nonlocal merged_here
        merge_island(state.archive, result, config.average_reevaluations)
        state.reevaluations += len(result.reevaluations)
        state.completed += 1
        merged_here += 1
        state.elapsed = time.perf_counter() - start
        state.trace.append(HypervolumeTracePoint(state.completed, state.archive.hypervolume(), state.elapsed, result.job_id))
        stop = bool(on_merge(state)) if on_merge is not None else False
        return stop or (halt_after is not None and merged_here >= halt_after)

    def checkpoint(force=False):
        if checkpoint_path is not None and (force or state.completed % config.checkpoint_every == 0):
            save_checkpoint(state, checkpoint_path, config)

    fill()
    if executor is None:
        while state.pending and state.completed < config.total_islands:
            job = state.pending[0]
            result = _run_with_retries(job, eval_function, emoa_config, config)
            state.pending.popleft()
            stop = record(result)
            fill()
            checkpoint(force=stop)
            if stop:
                break
    else:
        attempts: dict[int, int] = {}
        futures = {}

        def submit(job):
            args = (job, eval_function, emoa_config, config.island_population, config.reevaluation_period, config.average_reevaluations)
            futures[executor.submit(_island_task, args)] = job

        for job in state.pending:
            submit(job)
        stop = False
        while futures and not stop:
            done, _ = wait(futures, return_when=FIRST_COMPLETED)
            for fut in sorted(done, key=lambda f: futures[f].job_id):
                job = futures.pop(fut)
                try:
                    result = fut.result()
                except Exception as exc:  # noqa: BLE001 - resubmitted with the same seed
                    attempts[job.job_id] = attempts.get(job.job_id, 0) + 1
                    if attempts[job.job_id] > config.max_retries:
                        raise RuntimeError(f"island job {job.job_id} failed repeatedly") from exc
                    submit(job)
                    continue
                state.pending = deque(j for j in state.pending if j is not job)
                stop = record(result) or stop
                before = len(state.pending)
                fill()
                for new_job in list(state.pending)[before:]:
                    submit(new_job)
                checkpoint(force=stop)
                if stop:
                    break
        for fut in futures:
            fut.cancel()

    if checkpoint_path is not None:
        save_checkpoint(state, checkpoint_path, config)
    return OrchestrationResult(state.archive, list(state.trace), state.completed, state.reevaluations)


# -- checkpoints -------------------------------------------------------------
#
# JSON document {"format", "version", "sha256", "payload"}; the checksum covers
# the canonical (sorted-key, compact) encoding of the payload.  Floats survive
# the round trip exactly because json writes the shortest repr.


def _canonical(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()


def save_checkpoint(state: OrchestrationState, path, config: OrchestratorConfig) -> None:
    payload = {
        "master_seed": state.master_seed,
        "config": asdict(config),
        "archive": [m.to_record() for m in state.archive.members],
        "trace": [asdict(t) for t in state.trace],
        "pending": [j.to_record() for j in state.pending],
        "rng_state": state.rng.bit_generator.state,
        "completed": state.completed,
        "next_job_id": state.next_job_id,
        "reevaluations": state.reevaluations,
        "elapsed": state.elapsed,
    }
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "sha256": hashlib.sha256(_canonical(payload)).hexdigest(),
        "payload": payload,
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(doc, fh)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def load_checkpoint(path, emoa_config: EmoaConfig, config: OrchestratorConfig | None = None) -> OrchestrationState:
    """Load a checkpoint; any damage or mismatch raises :class:`CheckpointError`."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {doc.get('version')} is not supported (expected {CHECKPOINT_VERSION})")
    payload = doc.get("payload")
    if not isinstance(payload, dict) or hashlib.sha256(_canonical(payload)).hexdigest() != doc.get("sha256"):
        raise CheckpointError(f"checkpoint {path} failed its checksum")
    try:
        if config is not None and payload["config"] != asdict(config):
            raise CheckpointError("checkpoint was written with a different orchestrator configuration")
        saved = OrchestratorConfig(**payload["config"])
        archive = Archive(saved.central_capacity, emoa_config)
        # members were mutually consistent when saved; restore them verbatim
        archive.members = [Individual.from_record(r) for r in payload["archive"]]
        rng = np.random.default_rng()
        rng.bit_generator.state = payload["rng_state"]
        return OrchestrationState(
            master_seed=int(payload["master_seed"]),
            archive=archive,
            trace=[HypervolumeTracePoint(**t) for t in payload["trace"]],
            pending=deque(IslandJob.from_record(j) for j in payload["pending"]),
            rng=rng,
            completed=int(payload["completed"]),
            next_job_id=int(payload["next_job_id"]),
            reevaluations=int(payload["reevaluations"]),
            elapsed=float(payload["elapsed"]),
        )
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"checkpoint {path} is malformed: {exc}") from exc


def write_trace(trace: list[HypervolumeTracePoint], fh) -> None:
    fh.write("islands_completed,hypervolume,wall_clock,job_id\n")
    for t in trace:
        fh.write(f"{t.islands_completed},{t.hypervolume!r},{t.wall_clock:.6f},{t.job_id}\n")
