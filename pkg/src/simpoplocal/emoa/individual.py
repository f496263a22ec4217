"""Genomes with self-adaptive step sizes, and the SMS-EMOA settings."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..model import GENOME_BOUNDS, ParameterSet
from ..objectives import ObjectiveVector


@dataclass(frozen=True)
class EmoaConfig:
    """SMS-EMOA settings; step sizes are expressed as fractions of bound widths."""

    population_size: int = 200
    sbx_distribution_index: float = 2.0
    sbx_rate: float = 0.5
    epsilons: tuple = (0.0, 10.0, 10.0)
    nadir: tuple = (500.0, 100000.0, 10000.0)
    tournament_arity: int = 2
    initial_step_fraction: float = 0.1
    step_floor_fraction: float = 1e-12
    tau_global: float | None = None
    tau_local: float | None = None
    bounds: np.ndarray = field(default_factory=lambda: GENOME_BOUNDS.copy(), compare=False)

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("population_size must be >= 1")
        if len(self.epsilons) != 3 or len(self.nadir) != 3:
            raise ValueError("epsilons and nadir need three components")
        if self.tournament_arity < 1:
            raise ValueError("tournament_arity must be >= 1")

    @property
    def widths(self) -> np.ndarray:
        return self.bounds[:, 1] - self.bounds[:, 0]

    def taus(self) -> tuple[float, float]:
        n = len(self.bounds)
        # shared factor 1/sqrt(2 sqrt(n)), per-gene factor 1/sqrt(2 n)
        tau_global = self.tau_global if self.tau_global is not None else 1.0 / np.sqrt(2.0 * np.sqrt(n))
        tau_local = self.tau_local if self.tau_local is not None else 1.0 / np.sqrt(2.0 * n)
        return float(tau_global), float(tau_local)

    def to_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "sbx_distribution_index": self.sbx_distribution_index,
            "sbx_rate": self.sbx_rate,
            "epsilons": list(self.epsilons),
            "nadir": list(self.nadir),
            "tournament_arity": self.tournament_arity,
            "initial_step_fraction": self.initial_step_fraction,
            "step_floor_fraction": self.step_floor_fraction,
            "tau_global": self.tau_global,
            "tau_local": self.tau_local,
        }


@dataclass
class Individual:
    genome: ParameterSet
    strategy: np.ndarray
    fitness: ObjectiveVector | None = None
    evaluations_seen: int = 0
    id: int = 0

    def __post_init__(self):
        self.strategy = np.asarray(self.strategy, dtype=float)
        if np.any(~(self.strategy > 0)):
            raise ValueError("strategy step sizes must be > 0")

    @property
    def x(self) -> np.ndarray:
        return self.genome.to_array()

    @property
    def evaluated(self) -> bool:
        return self.fitness is not None

    def objectives(self) -> np.ndarray:
        if self.fitness is None:
            raise ValueError(f"individual {self.id} is not evaluated")
        return self.fitness.as_array()

    def copy(self) -> "Individual":
        return Individual(self.genome, self.strategy.copy(), self.fitness, self.evaluations_seen, self.id)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "genome": self.genome.to_dict(),
            "strategy": [float(s) for s in self.strategy],
            "fitness": None if self.fitness is None else list(self.fitness.as_tuple()),
            "evaluations_seen": self.evaluations_seen,
        }

    @classmethod
    def from_record(cls, record: dict) -> "Individual":
        fitness = record.get("fitness")
        return cls(
            genome=ParameterSet.from_dict(record["genome"]),
            strategy=np.array(record["strategy"], dtype=float),
            fitness=None if fitness is None else ObjectiveVector.from_sequence(fitness),
            evaluations_seen=int(record.get("evaluations_seen", 0)),
            id=int(record["id"]),
        )


def random_individual(rng: np.random.Generator, config: EmoaConfig, id: int = 0) -> Individual:
    lo, hi = config.bounds[:, 0], config.bounds[:, 1]
    x = rng.uniform(lo, hi)
    return Individual(ParameterSet.from_array(x), config.initial_step_fraction * config.widths, id=id)
