"""Exact 3-D hypervolume by dimension sweep, and exclusive contributions.

Points are swept in ascending order of the third objective while a 2-D
non-dominated staircase of the first two objectives is maintained; the
volume is the staircase area integrated over the sweep.  Minimisation on
every axis; points that do not strictly dominate the reference are ignored.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def _hv3d(points, ref):
    n = points.shape[0]
    keep = np.zeros(n, dtype=np.bool_)
    m = 0
    for i in range(n):
        if points[i, 0] < ref[0] and points[i, 1] < ref[1] and points[i, 2] < ref[2]:
            keep[i] = True
            m += 1
    if m == 0:
        return 0.0
    pts = np.empty((m, 3))
    k = 0
    for i in range(n):
        if keep[i]:
            pts[k] = points[i]
            k += 1
    order = np.argsort(pts[:, 2], kind="mergesort")

    # staircase sorted by x ascending (so y strictly descending)
    sx = np.empty(m)
    sy = np.empty(m)
    size = 0
    area = 0.0
    volume = 0.0
    z_prev = pts[order[0], 2]
    for idx in range(m):
        p = pts[order[idx]]
        volume += area * (p[2] - z_prev)
        z_prev = p[2]
        x, y = p[0], p[1]
        # position of the first staircase point with sx > x
        pos = np.searchsorted(sx[:size], x, side="right")
        if pos > 0 and sy[pos - 1] <= y:
            continue  # weakly dominated in the projection
        # points at or right of pos with sy >= y are dominated by (x, y)
        end = pos
        while end < size and sy[end] >= y:
            end += 1
        removed = end - pos
        if removed == 0:
            for t in range(size, pos, -1):
                sx[t] = sx[t - 1]
                sy[t] = sy[t - 1]
            size += 1
        else:
            shift = removed - 1
            if shift > 0:
                for t in range(pos + 1, size - shift):
                    sx[t] = sx[t + shift]
                    sy[t] = sy[t + shift]
            size -= shift
        sx[pos] = x
        sy[pos] = y
        area = 0.0
        for t in range(size):
            right = sx[t + 1] if t + 1 < size else ref[0]
            area += (right - sx[t]) * (ref[1] - sy[t])
    volume += area * (ref[2] - z_prev)
    return volume


@numba.njit(cache=True)
def _contributions(points, ref):
    n = points.shape[0]
    total = _hv3d(points, ref)
    out = np.empty(n)
    rest = np.empty((n - 1, 3)) if n > 1 else np.empty((0, 3))
    for i in range(n):
        k = 0
        for j in range(n):
            if j != i:
                rest[k] = points[j]
                k += 1
        out[i] = total - _hv3d(rest, ref)
    return out, total


def _as_points(front):
    pts = np.asarray(front, dtype=float)
    if pts.size == 0:
        return np.empty((0, 3))
    pts = pts.reshape(-1, 3)
    if not np.all(np.isfinite(pts)):
        raise ValueError("front contains non-finite values")
    return np.ascontiguousarray(pts)


def hypervolume(front, reference) -> float:
    """Volume dominated by ``front`` and bounded by ``reference``."""
    pts = _as_points(front)
    if pts.shape[0] == 0:
        return 0.0
    return float(_hv3d(pts, np.asarray(reference, dtype=float)))


def contributions(front, reference) -> np.ndarray:
    """Exclusive hypervolume contribution of every point of ``front``."""
    pts = _as_points(front)
    if pts.shape[0] == 0:
        return np.empty(0)
    out, _ = _contributions(pts, np.asarray(reference, dtype=float))
    # removing a point can only lose volume; clip float noise
    return np.maximum(out, 0.0)


def hv_contribution(front, reference, index: int) -> float:
    pts = _as_points(front)
    if not 0 <= index < pts.shape[0]:
        raise IndexError(f"index {index} out of range for a front of {pts.shape[0]} points")
    rest = np.delete(pts, index, axis=0)
    ref = np.asarray(reference, dtype=float)
    return max(0.0, hypervolume(pts, ref) - hypervolume(rest, ref))
