import io
import json
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from conftest import ToyFitness
from simpoplocal.emoa import Archive, EmoaConfig, Individual, random_individual
from simpoplocal.errors import CheckpointError
from simpoplocal.islands import (
    IslandJob,
    OrchestratorConfig,
    ReevaluatingEvaluator,
    _initial_state,
    _new_job,
    apply_measurement,
    load_checkpoint,
    merge_island,
    orchestrate,
    run_island,
    write_trace,
)
from simpoplocal.model import PUBLISHED_SETTING
from simpoplocal.objectives import ObjectiveVector

EMOA = EmoaConfig()
STEP = EMOA.initial_step_fraction * EMOA.widths
SMALL = OrchestratorConfig(total_islands=6, island_budget=30)


def snapshot(result):
    return (
        [m.to_record() for m in result.archive],
        [(t.islands_completed, t.hypervolume, t.job_id) for t in result.trace],
        result.completed,
        result.reevaluations,
    )


def evaluated_archive(n, seed=0, capacity=200):
    rng = np.random.default_rng(seed)
    f = ToyFitness()
    members = []
    for i in range(n):
        ind = random_individual(rng, EMOA, id=i)
        ind.fitness = f(ind.genome, 0)
        ind.evaluations_seen = 1
        members.append(ind)
    return Archive(capacity, EMOA, members)


class Recorder:
    def __init__(self):
        self.calls = []

    def __call__(self, genome, seed):
        self.calls.append(genome)
        return ObjectiveVector(1, 1.0, 1.0)


class FailOnce:
    """Raises on the n-th call only; deterministic otherwise."""

    def __init__(self, fail_at, times=1):
        self.inner = ToyFitness()
        self.fail_at = set(range(fail_at, fail_at + times))
        self.count = 0
        self.lock = threading.Lock()

    def __call__(self, genome, seed):
        with self.lock:
            self.count += 1
            n = self.count
        if n in self.fail_at:
            raise RuntimeError("worker lost")
        return self.inner(genome, seed)


def test_config_validation():
    with pytest.raises(ValueError):
        OrchestratorConfig(total_islands=0)
    with pytest.raises(ValueError):
        OrchestratorConfig(reevaluation_period=0)
    with pytest.raises(KeyError):
        OrchestratorConfig.from_dict({"islands": 3})
    assert OrchestratorConfig.from_dict({"total_islands": 3}).total_islands == 3


def test_job_validation_and_record_round_trip():
    archive = evaluated_archive(5)
    job = IslandJob(4, list(archive), 30, 99, 90)
    back = IslandJob.from_record(json.loads(json.dumps(job.to_record())))
    assert back.to_record() == job.to_record()
    with pytest.raises(ValueError):
        IslandJob(1, list(archive), 0, 1, 0)
    with pytest.raises(ValueError):
        IslandJob(1, [Individual(PUBLISHED_SETTING, STEP)], 5, 1, 0)


def test_period_one_reevaluates_every_call():
    archive = evaluated_archive(10)
    inner = Recorder()
    wrapped = ReevaluatingEvaluator(inner, archive, 1, np.random.default_rng(0))
    for _ in range(10):
        assert wrapped(PUBLISHED_SETTING, 5) is None
    assert len(wrapped.log) == 10
    assert PUBLISHED_SETTING not in inner.calls


def test_period_hundred_over_thousand_calls():
    archive = evaluated_archive(10)
    wrapped = ReevaluatingEvaluator(ToyFitness(), archive, 100, np.random.default_rng(0))
    results = [wrapped(PUBLISHED_SETTING, k) for k in range(1000)]
    assert sum(r is None for r in results) == 10
    assert [r.call for r in wrapped.log] == list(range(99, 1000, 100))


def test_period_continues_across_offset():
    archive = evaluated_archive(5)
    wrapped = ReevaluatingEvaluator(ToyFitness(), archive, 100, np.random.default_rng(0), offset=95)
    results = [wrapped(PUBLISHED_SETTING, k) for k in range(10)]
    assert [r is None for r in results] == [False] * 4 + [True] + [False] * 5


def test_empty_archive_passes_through():
    inner = Recorder()
    wrapped = ReevaluatingEvaluator(inner, Archive(5, EMOA), 1, np.random.default_rng(0))
    assert wrapped(PUBLISHED_SETTING, 0) == ObjectiveVector(1, 1.0, 1.0)
    assert inner.calls == [PUBLISHED_SETTING]


def test_reevaluation_replaces_fitness_and_refilters():
    good = Individual(PUBLISHED_SETTING, STEP, ObjectiveVector(0, 0.0, 0.0), 1, 1)
    archive = Archive(5, EMOA, [good])
    wrapped = ReevaluatingEvaluator(lambda g, s: ObjectiveVector(9, 900.0, 90.0), archive, 1, np.random.default_rng(0))
    wrapped(PUBLISHED_SETTING, 0)
    assert archive.get(1).fitness == ObjectiveVector(9, 900.0, 90.0)
    assert archive.get(1).evaluations_seen == 2


def test_averaging_flag():
    ind = Individual(PUBLISHED_SETTING, STEP, ObjectiveVector(2, 100.0, 10.0), 1, 1)
    apply_measurement(ind, ObjectiveVector(5, 400.0, 40.0), average=True)
    assert ind.fitness == ObjectiveVector(3.5, 250.0, 25.0)
    apply_measurement(ind, ObjectiveVector(0, 0.0, 0.0), average=False)
    assert ind.fitness == ObjectiveVector(0, 0.0, 0.0)
    assert ind.evaluations_seen == 3


def test_period_must_be_positive():
    with pytest.raises(ValueError):
        ReevaluatingEvaluator(ToyFitness(), Archive(1, EMOA), 0, np.random.default_rng(0))


def test_single_island_is_one_merge_into_initial_archive():
    config = OrchestratorConfig(total_islands=1, island_budget=30)
    result = orchestrate(config, ToyFitness(), master_seed=7)
    state = _initial_state(config, ToyFitness(), 7, EMOA, None, None)
    job = _new_job(state, config)
    island = run_island(job, ToyFitness(), EMOA, config.island_population, config.reevaluation_period)
    merge_island(state.archive, island)
    assert result.completed == 1 and len(result.trace) == 1
    assert [m.to_record() for m in result.archive] == [m.to_record() for m in state.archive]


def test_island_ids_and_order():
    config = OrchestratorConfig(total_islands=1, island_budget=40)
    state = _initial_state(config, ToyFitness(), 3, EMOA, None, None)
    job = _new_job(state, config)
    expected = min(50, len(state.archive))
    assert len(job.seed_individuals) == expected
    # sampled without replacement
    assert len({s.id for s in job.seed_individuals}) == expected
    island = run_island(job, ToyFitness(), EMOA, 50, 100)
    new_ids = [m.id for m in island.individuals if m.id >= 1 << 32]
    assert all(i >> 32 == job.job_id for i in new_ids)


def test_trace_and_elitism_on_deterministic_toy():
    sizes, consistent = [], []

    def check(state):
        sizes.append(len(state.archive))
        consistent.append(state.archive.is_consistent())
        return False

    result = orchestrate(SMALL, ToyFitness(), master_seed=1, on_merge=check)
    assert len(result.trace) == SMALL.total_islands == result.completed
    assert [t.islands_completed for t in result.trace] == list(range(1, 7))
    hv = [t.hypervolume for t in result.trace]
    assert np.all(np.diff(hv) >= 0)
    assert max(sizes) <= 200 and all(consistent)


def test_reevaluations_counted():
    config = OrchestratorConfig(total_islands=10, island_budget=30)
    result = orchestrate(config, ToyFitness(), master_seed=2)
    assert result.reevaluations == 3


def test_sequential_runs_are_bit_identical():
    a = orchestrate(SMALL, ToyFitness(noisy=True), master_seed=11)
    b = orchestrate(SMALL, ToyFitness(noisy=True), master_seed=11)
    c = orchestrate(SMALL, ToyFitness(noisy=True), master_seed=12)
    assert snapshot(a) == snapshot(b)
    assert snapshot(a) != snapshot(c)


@pytest.mark.parametrize("concurrent", [1, 3])
def test_resume_matches_uninterrupted(tmp_path, concurrent):
    config = OrchestratorConfig(total_islands=8, island_budget=30, concurrent_islands=concurrent, reevaluation_period=20)
    full = orchestrate(config, ToyFitness(noisy=True), master_seed=5)
    path = tmp_path / "ck.json"
    part = orchestrate(config, ToyFitness(noisy=True), master_seed=5, checkpoint_path=path, halt_after=3)
    assert part.completed == 3
    resumed = orchestrate(config, ToyFitness(noisy=True), master_seed=5, checkpoint_path=path, resume=True)
    assert snapshot(resumed) == snapshot(full)


def test_resume_twice_in_a_row(tmp_path):
    config = OrchestratorConfig(total_islands=6, island_budget=25, reevaluation_period=10)
    full = orchestrate(config, ToyFitness(noisy=True), master_seed=9)
    path = tmp_path / "ck.json"
    for _ in range(3):
        out = orchestrate(config, ToyFitness(noisy=True), master_seed=9, checkpoint_path=path, resume=True, halt_after=2)
    assert snapshot(out) == snapshot(full)


def test_checkpoint_round_trip(tmp_path):
    path = tmp_path / "ck.json"
    result = orchestrate(SMALL, ToyFitness(), master_seed=4, checkpoint_path=path)
    state = load_checkpoint(path, EMOA, SMALL)
    assert [m.to_record() for m in state.archive] == [m.to_record() for m in result.archive]
    assert state.completed == 6 and state.next_job_id == 7
    assert [t.hypervolume for t in state.trace] == [t.hypervolume for t in result.trace]


def _saved(tmp_path):
    path = tmp_path / "ck.json"
    orchestrate(OrchestratorConfig(total_islands=2, island_budget=10), ToyFitness(), master_seed=1, checkpoint_path=path)
    return path


def test_truncated_checkpoint_rejected(tmp_path):
    path = _saved(tmp_path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(path, EMOA)


def test_version_mismatch_rejected(tmp_path):
    path = _saved(tmp_path)
    doc = json.loads(path.read_text())
    doc["version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path, EMOA)


def test_tampered_checkpoint_rejected(tmp_path):
    path = _saved(tmp_path)
    doc = json.loads(path.read_text())
    doc["payload"]["completed"] = 1
    path.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(path, EMOA)


def test_foreign_file_rejected(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"hello": 1}')
    with pytest.raises(CheckpointError):
        load_checkpoint(path, EMOA)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.json", EMOA)


def test_resume_with_other_config_or_seed_rejected(tmp_path):
    path = _saved(tmp_path)
    with pytest.raises(CheckpointError):
        orchestrate(OrchestratorConfig(total_islands=3, island_budget=10), ToyFitness(), 1, checkpoint_path=path, resume=True)
    with pytest.raises(CheckpointError):
        orchestrate(OrchestratorConfig(total_islands=2, island_budget=10), ToyFitness(), 2, checkpoint_path=path, resume=True)


def test_failed_island_is_resubmitted_with_same_seed():
    config = OrchestratorConfig(total_islands=4, island_budget=30)
    clean = orchestrate(config, ToyFitness(), master_seed=3)
    # initial population takes 200 calls, so call 215 falls inside the first island
    flaky = orchestrate(config, FailOnce(215), master_seed=3)
    assert snapshot(flaky) == snapshot(clean)


def test_persistent_failure_surfaces():
    config = OrchestratorConfig(total_islands=2, island_budget=30, max_retries=2)
    with pytest.raises(RuntimeError, match="failed"):
        orchestrate(config, FailOnce(205, times=10_000), master_seed=3)


def test_executor_mode_completes_and_keeps_invariants():
    config = OrchestratorConfig(total_islands=8, island_budget=30, concurrent_islands=3)
    with ThreadPoolExecutor(3) as pool:
        result = orchestrate(config, FailOnce(260), master_seed=6, executor=pool)
    assert result.completed == 8 and len(result.trace) == 8
    assert sorted(t.job_id for t in result.trace) == list(range(1, 9))
    assert result.archive.is_consistent() and len(result.archive) <= 200


def test_evaluations_seen_never_decreases():
    seen = {}

    def check(state):
        for m in state.archive:
            assert m.evaluations_seen >= seen.get(m.id, 1)
            seen[m.id] = m.evaluations_seen
        return False

    config = OrchestratorConfig(total_islands=6, island_budget=30, reevaluation_period=7)
    orchestrate(config, ToyFitness(noisy=True), master_seed=8, on_merge=check)
    assert max(seen.values()) >= 2


def test_write_trace_format():
    result = orchestrate(OrchestratorConfig(total_islands=2, island_budget=10), ToyFitness(), master_seed=1)
    buf = io.StringIO()
    write_trace(result.trace, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "islands_completed,hypervolume,wall_clock,job_id"
    assert [int(line.split(",")[0]) for line in lines[1:]] == [1, 2]
    assert float(lines[2].split(",")[1]) == result.trace[1].hypervolume
