"""Post-processing of calibration results and simulation outputs."""

from __future__ import annotations

from concurrent.futures import Executor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .emoa import Individual, pareto_filter
from .errors import DomainError
from .model import Landscape, SimulationOutcome
from .islands import SimpopEvaluator
from .objectives import EvaluationConfig, ObjectiveVector, normalized_errors
from .seeding import derive_seed


def posthoc_reevaluate(
    members: Sequence[Individual],
    replications: int,
    landscape: Landscape | None,
    seed: int,
    config: EvaluationConfig | None = None,
    eval_function: Callable[[object, int], ObjectiveVector] | None = None,
    executor: Executor | None = None,
) -> list[Individual]:
    """Re-measure every member with ``replications`` runs and keep the Pareto set.

    Each member's seed is derived from ``seed`` and its id, so repeating the
    call on the output reproduces the same fitness values.  Dominance here is
    plain Pareto dominance without slack.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    config = replace(config or EvaluationConfig(), replications=replications)
    if eval_function is None:
        if landscape is None:
            raise ValueError("a landscape is required unless eval_function is given")
        eval_function = SimpopEvaluator(landscape, config)

    seeds = [derive_seed(seed, m.id) for m in members]
    genomes = [m.genome for m in members]
    if executor is None:
        values = [eval_function(g, s) for g, s in zip(genomes, seeds)]
    else:
        values = list(executor.map(eval_function, genomes, seeds))
    refreshed = []
    for m, v in zip(members, values):
        ind = m.copy()
        ind.fitness = v
        ind.evaluations_seen = m.evaluations_seen + 1
        refreshed.append(ind)
    if not refreshed:
        return []
    keep = pareto_filter(np.array([m.objectives() for m in refreshed]))
    return [m for m, k in zip(refreshed, keep) if k]


def member_errors(member: Individual, replications: int, config: EvaluationConfig | None = None) -> tuple[float, float, float]:
    return normalized_errors(member.fitness, replications, config)


def error_filter(
    members: Sequence[Individual], replications: int, threshold: float = 0.1, config: EvaluationConfig | None = None
) -> list[Individual]:
    """Members whose three normalized errors are all at most ``threshold``."""
    return [m for m in members if max(member_errors(m, replications, config)) <= threshold]


@dataclass(frozen=True)
class RankSize:
    ranks: np.ndarray
    sizes: np.ndarray
    slope: float

    def rows(self):
        return zip(self.ranks.tolist(), self.sizes.tolist())


def ranksize_slope(sizes) -> float:
    """Magnitude of the least-squares slope of log10(size) on log10(rank)."""
    return ranksize_report(sizes).slope


def ranksize_report(sizes) -> RankSize:
    if isinstance(sizes, SimulationOutcome):
        sizes = sizes.final_sizes
    s = np.sort(np.asarray(sizes, dtype=float))[::-1]
    if s.size < 2:
        raise DomainError("a rank-size slope needs at least 2 settlements")
    if np.any(~np.isfinite(s)) or np.any(s <= 0):
        raise DomainError("settlement sizes must be finite and > 0")
    ranks = np.arange(1, s.size + 1, dtype=float)
    x = np.log10(ranks)
    y = np.log10(s)
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    return RankSize(ranks.astype(int), s, abs(slope))


def ranksize_series(outcome: SimulationOutcome) -> list[tuple[int, float]]:
    """(step, slope) for every stored snapshot of a run (the first is step 0),
    then the final state."""
    series = []
    if outcome.snapshots is not None and outcome.snapshot_every:
        for i, snap in enumerate(outcome.snapshots):
            series.append((i * outcome.snapshot_every, ranksize_slope(snap)))
    if not series or series[-1][0] != outcome.duration_steps:
        series.append((outcome.duration_steps, ranksize_slope(outcome.final_sizes)))
    return series


def smooth_trace(values, window: int = 1000) -> np.ndarray:
    """Trailing moving average; the first points average what is available."""
    if window < 1:
        raise ValueError("window must be >= 1")
    v = np.asarray(values, dtype=float)
    if v.size == 0 or window == 1:
        return v.copy()
    csum = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, v.size + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)
