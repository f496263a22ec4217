"""Pareto and additive epsilon dominance (minimisation on every axis)."""

import numpy as np


def epsilon_dominates(u, v, epsilons) -> bool:
    """True iff ``u - eps <= v`` everywhere and ``u - eps < v`` somewhere."""
    shifted = np.asarray(u, dtype=float) - np.asarray(epsilons, dtype=float)
    v = np.asarray(v, dtype=float)
    return bool(np.all(shifted <= v) and np.any(shifted < v))


def dominates(u, v) -> bool:
    return epsilon_dominates(u, v, np.zeros(len(u)))


def nondominated_ranks(points) -> np.ndarray:
    """Pareto rank of each point, 0 for the first non-dominated front."""
    n = len(points)
    if n == 0:
        return np.empty(0, dtype=int)
    pts = np.asarray(points, dtype=float).reshape(n, -1)
    le = np.all(pts[:, None, :] <= pts[None, :, :], axis=-1)
    lt = np.any(pts[:, None, :] < pts[None, :, :], axis=-1)
    dom = le & lt  # dom[i, j]: i dominates j
    ranks = np.full(n, -1)
    remaining = np.ones(n, dtype=bool)
    rank = 0
    while remaining.any():
        dominated = (dom[remaining][:, remaining]).any(axis=0)
        idx = np.flatnonzero(remaining)[~dominated]
        ranks[idx] = rank
        remaining[idx] = False
        rank += 1
    return ranks


def pareto_filter(points) -> np.ndarray:
    """Boolean mask of the non-dominated points."""
    return nondominated_ranks(points) == 0


def epsilon_dominance_matrix(points, epsilons) -> np.ndarray:
    """``M[i, j]`` is True iff point i epsilon-dominates point j (i != j)."""
    pts = np.asarray(points, dtype=float).reshape(len(points), -1)
    shifted = pts - np.asarray(epsilons, dtype=float)
    le = np.all(shifted[:, None, :] <= pts[None, :, :], axis=-1)
    lt = np.any(shifted[:, None, :] < pts[None, :, :], axis=-1)
    out = le & lt
    np.fill_diagonal(out, False)
    return out


def epsilon_dominators(points, candidate, epsilons) -> tuple[np.ndarray, np.ndarray]:
    """Masks (members dominating ``candidate``, members ``candidate`` dominates)."""
    if len(points) == 0:
        empty = np.zeros(0, dtype=bool)
        return empty, empty
    pts = np.asarray(points, dtype=float).reshape(len(points), -1)
    c = np.asarray(candidate, dtype=float)
    eps = np.asarray(epsilons, dtype=float)
    a = pts - eps
    over = np.all(a <= c, axis=1) & np.any(a < c, axis=1)
    b = c - eps
    under = np.all(b <= pts, axis=1) & np.any(b < pts, axis=1)
    return over, under
