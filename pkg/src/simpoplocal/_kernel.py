"""Compiled inner loop of a SimpopLocal run.

The pure-Python :func:`simpoplocal.model.step` is the readable reference; this
kernel performs the same draws in the same order so both paths agree on a seed.
"""

import math

import numba
import numpy as np

# choose-by-rejection when the transmissible share of the donor's list is at
# least 1/_REJECTION_RATIO, otherwise scan the donor list
_REJECTION_RATIO = 16
# the lacking-count table has n * n * ceil(width / 2**shift) cells
_MIN_BLOCK = 64
_MAX_CELLS = 1 << 25

TERMINATED_INNOVATION_CAP = 0
TERMINATED_STEP_CAP = 1


@numba.njit(cache=True)
def _acquire(k, m, has, lists, pos, counts, diff, lacking, shift):
    n = has.shape[1]
    p = counts[k]
    has[m, k] = True
    lists[k, p] = m
    pos[m, k] = p
    counts[k] += 1
    for i in range(n):
        if i == k:
            continue
        if has[m, i]:
            diff[k, i] -= 1
            lacking[k, i, pos[m, i] >> shift] -= 1
        else:
            diff[i, k] += 1
            lacking[i, k, p >> shift] += 1


@numba.njit(cache=True)
def exponential(rng):
    """Unit-rate exponential from one uniform draw."""
    return -math.log1p(-rng.random())


@numba.njit(cache=True)
def _impact(res, impact, r_max):
    out = res * (1.0 + impact * (1.0 - res / r_max))
    if out > r_max:
        return r_max
    return out


@numba.njit(cache=True)
def choose_transmissible(u, donor_list, n_donor, receiver_has, n_diff, lacking_row, shift, rng):
    """Pick uniformly among donor innovations the receiver lacks.

    ``u`` is the first uniform draw; further draws come from ``rng`` only in
    rejection mode.  Otherwise the ``k``-th lacking entry of the donor list is
    located by skipping whole blocks via ``lacking_row`` (per-block counts of
    entries the receiver lacks).
    """
    if n_diff * _REJECTION_RATIO >= n_donor:
        while True:
            m = donor_list[int(u * n_donor)]
            if not receiver_has[m]:
                return m
            u = rng.random()
    k = int(u * n_diff)
    block = 1 << shift
    if 2 * k < n_diff:
        b = 0
        while k >= lacking_row[b]:
            k -= lacking_row[b]
            b += 1
        for idx in range(b * block, min((b + 1) * block, n_donor)):
            m = donor_list[idx]
            if not receiver_has[m]:
                if k == 0:
                    return m
                k -= 1
        return -1
    # the same entry counted from the back; lacking entries cluster at the
    # recent end of the list once the receiver has caught up
    k = n_diff - 1 - k
    b = (n_donor - 1) >> shift
    while k >= lacking_row[b]:
        k -= lacking_row[b]
        b -= 1
    for idx in range(min((b + 1) * block, n_donor) - 1, b * block - 1, -1):
        m = donor_list[idx]
        if not receiver_has[m]:
            if k == 0:
                return m
            k -= 1
    return -1


def block_shift(n, width):
    """log2 of the block length for the lacking-count table (~2**25 cells at most)."""
    blocks = max(1, min(width // _MIN_BLOCK + 1, _MAX_CELLS // (n * n)))
    length = max(_MIN_BLOCK, -(-width // blocks))
    return (length - 1).bit_length()


@numba.njit(cache=True)
def simulate(
    population,
    resources,
    weights,
    p_creation,
    p_diffusion,
    impact,
    r_max,
    growth_rate,
    innovation_cap,
    step_cap,
    count_acquisitions,
    rng,
    snapshot_every,
    shift,
):
    """Run until the innovation cap or the step cap.

    ``weights[i, j]`` holds ``1 / (2 * D_ij ** decay)`` with a zero diagonal.
    Arrays ``population`` and ``resources`` are updated in place.  ``shift``
    comes from :func:`block_shift`.

    Returns (steps, created, acquired, terminated_by, counts, snapshots).
    """
    n = population.shape[0]
    width = innovation_cap + n + 1
    # has and pos are innovation-major so _acquire reads one row per innovation
    has = np.zeros((width, n), dtype=np.bool_)
    lists = np.zeros((n, width), dtype=np.int32)
    pos = np.zeros((width, n), dtype=np.int32)
    counts = np.zeros(n, dtype=np.int64)
    diff = np.zeros((n, n), dtype=np.int64)
    # lacking[i, j, b]: entries of j's list in block b that i does not hold
    lacking = np.zeros((n, n, ((width - 1) >> shift) + 1), dtype=np.int32)

    n_snap = 0
    if snapshot_every > 0:
        n_snap = step_cap // snapshot_every + 1
    snapshots = np.zeros((n_snap, n))
    if n_snap > 0:
        snapshots[0, :] = population
    snap_i = 1

    # per-trial hazards -log(1 - prob): pairs * rate_c and P_i * P_j * rate_d[i, j]
    rate_c = -math.log1p(-p_creation) if p_creation < 1.0 else np.inf
    rate_d = weights * (-math.log1p(-p_diffusion) if p_diffusion < 1.0 else np.inf)

    created = 0
    acquired = 0
    steps = 0
    clock = exponential(rng)
    while True:
        counter = acquired if count_acquisitions else created
        if counter >= innovation_cap:
            term = TERMINATED_INNOVATION_CAP
            break
        if steps >= step_cap:
            term = TERMINATED_STEP_CAP
            break

        for i in range(n):
            p = population[i]
            population[i] = p * (1.0 + growth_rate * (1.0 - p / resources[i]))

        for i in range(n):
            p = population[i]
            h = p * (p - 1.0) / 2.0 * rate_c
            if h > 0.0:
                if clock < h:
                    _acquire(i, created, has, lists, pos, counts, diff, lacking, shift)
                    created += 1
                    acquired += 1
                    resources[i] = _impact(resources[i], impact, r_max)
                    clock = exponential(rng)
                else:
                    clock -= h

        for i in range(n):
            p = population[i]
            for j in range(n):
                if j == i or diff[i, j] == 0:
                    continue
                # the test also drops nan from an empty settlement at p_diffusion = 1
                h = p * population[j] * rate_d[i, j]
                if h > 0.0:
                    if clock < h:
                        m = choose_transmissible(
                            rng.random(), lists[j], counts[j], has[:, i], diff[i, j], lacking[i, j], shift, rng
                        )
                        _acquire(i, m, has, lists, pos, counts, diff, lacking, shift)
                        acquired += 1
                        resources[i] = _impact(resources[i], impact, r_max)
                        clock = exponential(rng)
                    else:
                        clock -= h

        steps += 1
        if n_snap > 0 and steps % snapshot_every == 0 and snap_i < n_snap:
            snapshots[snap_i, :] = population
            snap_i += 1

    return steps, created, acquired, term, counts, snapshots[:snap_i]
