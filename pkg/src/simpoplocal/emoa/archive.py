"""Elitist epsilon-dominance archive with hypervolume-based truncation."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .dominance import epsilon_dominance_matrix, epsilon_dominators, nondominated_ranks
from .hypervolume import contributions, hypervolume
from .individual import EmoaConfig, Individual


def _objs(members) -> np.ndarray:
    if not members:
        return np.empty((0, 3))
    return np.array([m.objectives() for m in members])


def least_contributor(members: list[Individual], reference) -> int:
    """Index of the member to drop: smallest contribution within the worst
    Pareto rank, ties going to the lowest id."""
    objs = _objs(members)
    ranks = nondominated_ranks(objs)
    worst = np.flatnonzero(ranks == ranks.max())
    contrib = contributions(objs[worst], reference)
    best = min(range(len(worst)), key=lambda k: (contrib[k], members[worst[k]].id))
    return int(worst[best])


def epsilon_filter(members: Iterable[Individual], epsilons) -> list[Individual]:
    """Greedy subset that is mutually non-epsilon-dominated.

    Members are visited by Pareto rank, then id; a member is kept unless it
    and an already kept member epsilon-dominate one another in either
    direction.
    """
    members = list(members)
    if not members:
        return []
    objs = _objs(members)
    ranks = nondominated_ranks(objs)
    order = sorted(range(len(members)), key=lambda k: (ranks[k], members[k].id))
    conflict = epsilon_dominance_matrix(objs, epsilons)
    conflict |= conflict.T
    kept: list[int] = []
    for k in order:
        if kept and conflict[k, kept].any():
            continue
        kept.append(k)
    kept.sort()
    return [members[k] for k in kept]


def elitist_insert(archive: list[Individual], newcomer: Individual, capacity: int, config: EmoaConfig) -> list[Individual]:
    """Return the archive after offering it ``newcomer``.

    A newcomer epsilon-dominated by a member is discarded.  Otherwise it
    replaces the members it epsilon-dominates, unless that swap would lower
    the archive hypervolume, in which case it is discarded.  Over capacity,
    the least hypervolume contributor of the worst rank is removed.
    """
    if newcomer.fitness is None:
        raise ValueError("newcomer must be evaluated")
    eps = config.epsilons
    new = newcomer.objectives()
    members = list(archive)
    objs = _objs(members)
    over, under = epsilon_dominators(objs, new, eps)
    if over.any():
        return members
    candidate = [m for k, m in enumerate(members) if not under[k]] + [newcomer]
    if under.any():
        before = hypervolume(objs, config.nadir)
        after = hypervolume(_objs(candidate), config.nadir)
        if after < before:
            return members
    while len(candidate) > capacity:
        candidate.pop(least_contributor(candidate, config.nadir))
    return candidate


class Archive:
    """Mutable archive shared by an SMS-EMOA loop and evaluation wrappers."""

    def __init__(self, capacity: int, config: EmoaConfig, members: Iterable[Individual] = ()):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.config = config
        self.members: list[Individual] = []
        self._contrib_key = None
        self._contrib = None
        for m in members:
            self.insert(m)

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, ind_id: int):
        return any(m.id == ind_id for m in self.members)

    def get(self, ind_id: int) -> Individual | None:
        for m in self.members:
            if m.id == ind_id:
                return m
        return None

    def insert(self, ind: Individual) -> bool:
        """Offer ``ind``; True if it is a member afterwards."""
        self.members = elitist_insert(self.members, ind, self.capacity, self.config)
        return any(m is ind for m in self.members)

    def refilter(self) -> None:
        """Restore mutual non-epsilon-dominance after fitness values changed."""
        self.members = epsilon_filter(self.members, self.config.epsilons)
        while len(self.members) > self.capacity:
            self.members.pop(least_contributor(self.members, self.config.nadir))

    def objectives(self) -> np.ndarray:
        return _objs(self.members)

    def hypervolume(self) -> float:
        return hypervolume(self.objectives(), self.config.nadir)

    def contributions(self) -> np.ndarray:
        # keyed on the fitness values, so external fitness edits invalidate it
        key = tuple(m.fitness for m in self.members)
        if key != self._contrib_key:
            self._contrib = contributions(self.objectives(), self.config.nadir)
            self._contrib_key = key
        return self._contrib.copy()

    def is_consistent(self) -> bool:
        """Archive invariant: within capacity, no member epsilon-dominates another."""
        if len(self.members) > self.capacity:
            return False
        if not self.members:
            return True
        return not epsilon_dominance_matrix(self.objectives(), self.config.epsilons).any()
