"""The three calibration objectives, evaluated over replicated runs.

The EMOA works on the raw vector (score in [0, 2*replications], deviations in
inhabitants and steps); :func:`normalized_errors` is the reporting view.
"""

from __future__ import annotations

import math
from concurrent.futures import Executor
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import DomainError
from .model import Landscape, ParameterSet, SimulationConfig, run
from .seeding import derive_seed, make_rng


@dataclass(frozen=True)
class ObjectiveVector:
    # a flag count; fractional only when re-evaluations are averaged
    distribution_score: float
    population_deviation: float
    duration_deviation: float

    def __post_init__(self):
        for value in self.as_tuple():
            if not math.isfinite(value) or value < 0:
                raise DomainError(f"objective values must be finite and >= 0, got {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.distribution_score, self.population_deviation, self.duration_deviation)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)

    @classmethod
    def from_sequence(cls, values) -> "ObjectiveVector":
        score, pop, dur = values
        score = float(score)
        return cls(int(score) if score.is_integer() else score, float(pop), float(dur))


@dataclass(frozen=True)
class EvaluationConfig:
    replications: int = 100
    ks_alpha_coefficient: float = 1.36
    p_threshold: float = 0.05
    target_population: float = 10000.0
    target_duration: float = 4000.0
    # fit the reference lognormal on natural-space mean/sd instead of log-space
    natural_space_moments: bool = False
    simulation: SimulationConfig = field(default_factory=SimulationConfig)

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "EvaluationConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(sorted(unknown)[0])
        if isinstance(data.get("simulation"), dict):
            data["simulation"] = SimulationConfig.from_dict(data["simulation"])
        return cls(**data)


def kolmogorov_sf(lam: float) -> float:
    """Survival function Q(lam) = P(K > lam) of the Kolmogorov distribution."""
    if lam <= 0:
        return 1.0
    if lam < 1.18:
        # theta-function form converges fast for small arguments
        s = 0.0
        for k in range(1, 20):
            s += math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8 * lam * lam))
        return min(1.0, max(0.0, 1.0 - math.sqrt(2 * math.pi) / lam * s))
    s = 0.0
    for k in range(1, 101):
        term = math.exp(-2.0 * k * k * lam * lam)
        s += term if k % 2 else -term
        if term < 1e-17:
            break
    return min(1.0, max(0.0, 2.0 * s))


def ks_statistic(sample_a, sample_b) -> float:
    a = np.sort(np.asarray(sample_a, dtype=float))
    b = np.sort(np.asarray(sample_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise DomainError("both samples must be non-empty")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def ks_two_sample(sample_a, sample_b) -> tuple[float, float]:
    """Two-sample KS statistic and its asymptotic p-value."""
    d = ks_statistic(sample_a, sample_b)
    n, m = len(sample_a), len(sample_b)
    ne = n * m / (n + m)
    return d, kolmogorov_sf(math.sqrt(ne) * d)


def critical_value(n: int, m: int, alpha_coefficient: float = 1.36) -> float:
    """D_alpha = c(alpha) * sqrt((n + m) / (n m)); c = 1.36 is the 5% level."""
    return alpha_coefficient * math.sqrt((n + m) / (n * m))


def fit_lognormal(sizes: np.ndarray, natural_space: bool = False) -> tuple[float, float]:
    """(mu, sigma) of a lognormal matching the sample's moments."""
    if natural_space:
        mean = float(np.mean(sizes))
        var = float(np.var(sizes))
        sigma2 = math.log1p(var / mean**2)
        return math.log(mean) - sigma2 / 2.0, math.sqrt(sigma2)
    logs = np.log(sizes)
    return float(np.mean(logs)), float(np.std(logs))


def distribution_test(
    final_sizes, rng: np.random.Generator, config: EvaluationConfig | None = None
) -> tuple[int, int]:
    """(d_flag, p_flag): 1 where the lognormal hypothesis is rejected."""
    config = config or EvaluationConfig()
    sizes = np.asarray(final_sizes, dtype=float)
    if sizes.size == 0 or np.any(~np.isfinite(sizes)) or np.any(sizes <= 0):
        raise DomainError("sizes must be finite and > 0 for a lognormal fit")
    if np.ptp(sizes) == 0:
        return 1, 1
    mu, sigma = fit_lognormal(sizes, config.natural_space_moments)
    if not sigma > 0:
        return 1, 1
    reference = rng.lognormal(mu, sigma, size=sizes.size)
    d, p = ks_two_sample(sizes, reference)
    d_flag = int(d >= critical_value(sizes.size, sizes.size, config.ks_alpha_coefficient))
    p_flag = int(p <= config.p_threshold)
    return d_flag, p_flag


@dataclass(frozen=True)
class Replicate:
    d_flag: int
    p_flag: int
    max_population: float
    duration_steps: int


def replicate(params: ParameterSet, landscape: Landscape, config: EvaluationConfig, seed: int, k: int) -> Replicate:
    """Replication ``k`` of an evaluation seeded by ``seed``."""
    outcome = run(landscape, params, config.simulation, seed=derive_seed(seed, k, 0))
    d_flag, p_flag = distribution_test(outcome.final_sizes, make_rng(seed, k, 1), config)
    return Replicate(d_flag, p_flag, outcome.max_population, outcome.duration_steps)


def _replicate_task(args):
    return replicate(*args)


def aggregate(replicates, config: EvaluationConfig) -> ObjectiveVector:
    score = sum(r.d_flag + r.p_flag for r in replicates)
    pop = np.median([abs(r.max_population - config.target_population) for r in replicates])
    dur = np.median([abs(r.duration_steps - config.target_duration) for r in replicates])
    return ObjectiveVector(int(score), float(pop), float(dur))


def evaluate(
    params: ParameterSet,
    landscape: Landscape,
    config: EvaluationConfig | None = None,
    seed: int = 0,
    executor: Executor | None = None,
) -> ObjectiveVector:
    """Raw objective vector of ``params`` over ``config.replications`` runs.

    Replications may be spread over ``executor``; the result does not depend on
    scheduling since only sums and medians of the collected values are used.
    """
    config = config or EvaluationConfig()
    tasks = [(params, landscape, config, seed, k) for k in range(config.replications)]
    if executor is None:
        replicates = [replicate(*t) for t in tasks]
    else:
        replicates = list(executor.map(_replicate_task, tasks))
    return aggregate(replicates, config)


def normalized_errors(vector: ObjectiveVector, replications: int, config: EvaluationConfig | None = None):
    """(distribution, population, duration) errors as fractions."""
    config = config or EvaluationConfig()
    return (
        vector.distribution_score / (2.0 * replications),
        vector.population_deviation / config.target_population,
        vector.duration_deviation / config.target_duration,
    )


def evaluation_record(
    params: ParameterSet, vector: ObjectiveVector, replications: int, seed: int, config: EvaluationConfig | None = None
) -> dict:
    return {
        "genome": params.to_dict(),
        "objectives": {
            "distribution_score": vector.distribution_score,
            "population_deviation": vector.population_deviation,
            "duration_deviation": vector.duration_deviation,
        },
        "normalized_errors": list(normalized_errors(vector, replications, config)),
        "replications": replications,
        "seed": seed,
    }
