"""Steady-state (mu + 1) SMS-EMOA loop."""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Iterator

import numpy as np

from ..model import ParameterSet
from ..objectives import ObjectiveVector
from .archive import Archive
from .dominance import epsilon_dominates
from .hypervolume import contributions
from .individual import EmoaConfig, Individual
from .variation import sbx_crossover, self_adaptive_mutation

# eval_function(genome, seed) -> fitness, or None when the call was spent elsewhere
# (e.g. on a re-evaluation); the same genome is then offered again on the next call
EvalFunction = Callable[[ParameterSet, int], "ObjectiveVector | None"]


def _compare(a: Individual, b: Individual, ca: float, cb: float, eps, rng) -> Individual:
    fa, fb = a.objectives(), b.objectives()
    if epsilon_dominates(fa, fb, eps):
        return a
    if epsilon_dominates(fb, fa, eps):
        return b
    if ca != cb:
        return a if ca > cb else b
    return a if rng.random() < 0.5 else b


def tournament(members: list[Individual], contrib: np.ndarray, config: EmoaConfig, rng: np.random.Generator) -> Individual:
    """Select one parent: epsilon-dominance first, larger hypervolume contribution
    second, a coin flip last."""
    n = len(members)
    k = config.tournament_arity
    picks = rng.choice(n, size=k, replace=n < k)
    best = int(picks[0])
    for p in picks[1:]:
        p = int(p)
        winner = _compare(members[best], members[p], contrib[best], contrib[p], config.epsilons, rng)
        best = best if winner is members[best] else p
    return members[best]


def make_offspring(
    members: list[Individual], config: EmoaConfig, rng: np.random.Generator, contrib: np.ndarray | None = None
) -> Individual:
    """Tournament-select two parents, cross them and mutate the first child."""
    if contrib is None:
        contrib = contributions(np.array([m.objectives() for m in members]), config.nadir)
    p1 = tournament(members, contrib, config, rng)
    p2 = tournament(members, contrib, config, rng)
    child, _ = sbx_crossover(p1, p2, config, rng)
    return self_adaptive_mutation(child, config, rng)


def sms_emoa_run(
    population: Archive | Iterable[Individual],
    evaluation_budget: int,
    eval_function: EvalFunction,
    config: EmoaConfig,
    rng: np.random.Generator,
    id_source: Iterator[int] | None = None,
    capacity: int | None = None,
) -> Archive:
    """Run ``evaluation_budget`` evaluation calls and return the population.

    ``population`` is updated in place when it is an :class:`Archive`, which
    lets evaluation wrappers holding the same archive act on it.
    """
    if evaluation_budget < 1:
        raise ValueError("evaluation_budget must be >= 1")
    if not isinstance(population, Archive):
        population = Archive(capacity or config.population_size, config, population)
    if len(population) == 0:
        raise ValueError("the seed population is empty")
    if any(m.fitness is None for m in population):
        raise ValueError("the seed population must be evaluated")
    if id_source is None:
        id_source = itertools.count(max(m.id for m in population) + 1)

    pending = None
    for _ in range(evaluation_budget):
        if pending is None:
            pending = make_offspring(population.members, config, rng, population.contributions())
            pending.id = next(id_source)
        seed = int(rng.integers(0, 2**63))
        fitness = eval_function(pending.genome, seed)
        if fitness is None:
            continue
        pending.fitness = fitness
        pending.evaluations_seen = 1
        population.insert(pending)
        pending = None
    return population
