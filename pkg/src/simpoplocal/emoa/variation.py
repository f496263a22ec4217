"""Variation operators: bounded SBX and self-adaptive Gaussian mutation."""

from __future__ import annotations

import numpy as np

from ..model import ParameterSet
from .individual import EmoaConfig, Individual

_EPS = 1e-14


def _spread(u, alpha, eta):
    if u <= 1.0 / alpha:
        return (u * alpha) ** (1.0 / (eta + 1.0))
    return (1.0 / (2.0 - u * alpha)) ** (1.0 / (eta + 1.0))


def sbx_pair(x1: float, x2: float, lo: float, hi: float, eta: float, rng: np.random.Generator) -> tuple[float, float]:
    """Bounded-variable SBX on one gene.

    The spread factor of each child is drawn from the polynomial distribution
    truncated so that the child cannot leave ``[lo, hi]``.
    """
    if abs(x1 - x2) <= _EPS:
        return x1, x2
    y1, y2 = min(x1, x2), max(x1, x2)
    gap = y2 - y1
    u = rng.random()

    beta = 1.0 + 2.0 * (y1 - lo) / gap
    alpha = 2.0 - beta ** -(eta + 1.0)
    c1 = 0.5 * ((y1 + y2) - _spread(u, alpha, eta) * gap)

    beta = 1.0 + 2.0 * (hi - y2) / gap
    alpha = 2.0 - beta ** -(eta + 1.0)
    c2 = 0.5 * ((y1 + y2) + _spread(u, alpha, eta) * gap)

    c1 = min(max(c1, lo), hi)
    c2 = min(max(c2, lo), hi)
    if rng.random() < 0.5:
        c1, c2 = c2, c1
    return c1, c2


def sbx_crossover(a: Individual, b: Individual, config: EmoaConfig, rng: np.random.Generator) -> tuple[Individual, Individual]:
    """Per-gene SBX with probability ``config.sbx_rate``.

    A crossed gene inherits the step size of the parent whose value lies
    nearer the child's value; an uncrossed gene keeps its own parent's.
    """
    xa, xb = a.x, b.x
    ca, cb = xa.copy(), xb.copy()
    sa, sb = a.strategy.copy(), b.strategy.copy()
    for g, (lo, hi) in enumerate(config.bounds):
        if rng.random() >= config.sbx_rate:
            continue
        ca[g], cb[g] = sbx_pair(xa[g], xb[g], lo, hi, config.sbx_distribution_index, rng)
        sa[g] = a.strategy[g] if abs(ca[g] - xa[g]) <= abs(ca[g] - xb[g]) else b.strategy[g]
        sb[g] = a.strategy[g] if abs(cb[g] - xa[g]) <= abs(cb[g] - xb[g]) else b.strategy[g]
    return (
        Individual(ParameterSet.from_array(ca), sa),
        Individual(ParameterSet.from_array(cb), sb),
    )


def reflect(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Fold values back into ``[lo, hi]`` by mirror reflection at the bounds."""
    width = hi - lo
    y = np.mod(x - lo, 2.0 * width)
    y = np.where(y > width, 2.0 * width - y, y)
    return np.clip(lo + y, lo, hi)


def self_adaptive_mutation(ind: Individual, config: EmoaConfig, rng: np.random.Generator) -> Individual:
    """Log-normal step-size update followed by Gaussian perturbation of each gene."""
    n = len(config.bounds)
    tau_global, tau_local = config.taus()
    lo, hi = config.bounds[:, 0], config.bounds[:, 1]
    floor = config.step_floor_fraction * config.widths
    strategy = ind.strategy * np.exp(tau_global * rng.standard_normal() + tau_local * rng.standard_normal(n))
    strategy = np.maximum(strategy, floor)
    x = reflect(ind.x + strategy * rng.standard_normal(n), lo, hi)
    return Individual(ParameterSet.from_array(x), strategy)
