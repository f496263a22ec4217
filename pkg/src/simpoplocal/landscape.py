"""Synthetic initial landscapes and their CSV persistence.

Central-place placement uses a fine triangular lattice of spacing ``a`` split
into three nested tiers: sites on the ``3a`` sublattice (top tier), the rest of
the ``sqrt(3) a`` sublattice (middle tier), and the remaining sites.  The
largest initial settlements occupy the sparsest tier.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import InvalidStateError, LandscapeError, ParseError
from .model import Landscape, Settlement
from .seeding import make_rng

CSV_HEADER = ("id", "x", "y", "population", "resource_capacity")

_MAX_SETTLEMENTS = 100_000


class Placement(str, enum.Enum):
    CENTRAL_PLACE = "central_place"
    UNIFORM_RANDOM = "uniform_random"


@dataclass(frozen=True)
class LandscapeSpec:
    settlement_count: int = 100
    size_min: float = 80.0
    size_max: float = 400.0
    # the size and spacing defaults put the published setting near a
    # 4000-step, 10000-inhabitant run with lognormal-looking final sizes
    size_log_mean: float = math.log(80.0)
    size_log_sd: float = 0.17
    placement: Placement = Placement.CENTRAL_PLACE
    plane_side: float = 230.0
    jitter: float = 0.2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "placement", Placement(self.placement))
        if self.settlement_count < 1:
            raise LandscapeError("settlement_count must be >= 1")
        if self.settlement_count > _MAX_SETTLEMENTS:
            raise LandscapeError(f"settlement_count above {_MAX_SETTLEMENTS} is not supported")
        if not self.size_min < self.size_max:
            raise LandscapeError("size_min must be < size_max")
        if self.size_min <= 0:
            raise LandscapeError("size_min must be > 0")
        if not self.plane_side > 0:
            raise LandscapeError("plane_side must be > 0")
        if not self.size_log_sd > 0:
            raise LandscapeError("size_log_sd must be > 0")
        if not 0 <= self.jitter < 0.5:
            # at 0.5 two neighbouring sites may coincide
            raise LandscapeError("jitter must lie in [0, 0.5)")

    @classmethod
    def from_dict(cls, data: dict) -> "LandscapeSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(sorted(unknown)[0])
        return cls(**data)


def _truncated_lognormal(rng, n, mu, sd, lo, hi):
    out = np.empty(0)
    while out.size < n:
        draw = rng.lognormal(mu, sd, size=max(2 * (n - out.size), 16))
        out = np.concatenate([out, draw[(draw >= lo) & (draw <= hi)]])
    return out[:n]


def lattice_sites(count: int, side: float) -> tuple[np.ndarray, np.ndarray, float]:
    """``count`` lattice sites nearest the plane centre, with their tiers (0 = top).

    Returns (positions, tiers, spacing).
    """
    # spacing giving ~count sites per side**2 on a triangular lattice
    spacing = side / math.sqrt(count * 2.0 / math.sqrt(3.0))
    span = int(math.ceil(side / spacing)) + 3
    i, j = np.meshgrid(np.arange(-span, span + 1), np.arange(-span, span + 1), indexing="ij")
    i = i.ravel()
    j = j.ravel()
    x = spacing * (i + 0.5 * j)
    y = spacing * (math.sqrt(3.0) / 2.0) * j
    tiers = np.full(i.shape, 2)
    tiers[(i - j) % 3 == 0] = 1
    tiers[(i % 3 == 0) & (j % 3 == 0)] = 0
    inside = (np.abs(x) <= side / 2) & (np.abs(y) <= side / 2)
    if inside.sum() < count:
        raise LandscapeError("lattice too coarse for the requested settlement count")
    x, y, tiers = x[inside], y[inside], tiers[inside]
    r2 = x**2 + y**2
    order = np.lexsort((y, x, r2))[:count]
    pos = np.column_stack([x[order], y[order]]) + side / 2
    return pos, tiers[order], spacing


def generate(spec: LandscapeSpec | None = None) -> Landscape:
    """Draw a landscape; identical specs (seed included) give identical output."""
    spec = spec or LandscapeSpec()
    rng = make_rng(spec.seed)
    n = spec.settlement_count
    sizes = _truncated_lognormal(rng, n, spec.size_log_mean, spec.size_log_sd, spec.size_min, spec.size_max)

    if spec.placement is Placement.UNIFORM_RANDOM:
        pos = rng.uniform(0.0, spec.plane_side, size=(n, 2))
    else:
        pos, tiers, spacing = lattice_sites(n, spec.plane_side)
        if n > 1 and spec.jitter > 0:
            radius = spec.jitter * spacing * np.sqrt(rng.uniform(size=n))
            angle = rng.uniform(0.0, 2.0 * math.pi, size=n)
            pos = pos + np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
        # largest sizes go to the sparsest tier, sites within a tier ordered by
        # distance to the centre
        centre = spec.plane_side / 2
        r2 = ((pos - centre) ** 2).sum(axis=1)
        site_order = np.lexsort((r2, tiers))
        sizes_desc = np.sort(sizes)[::-1]
        assigned = np.empty(n)
        assigned[site_order] = sizes_desc
        sizes = assigned

    settlements = tuple(
        Settlement(id=k, x=float(pos[k, 0]), y=float(pos[k, 1]), population=float(sizes[k]), resource_capacity=float(sizes[k]))
        for k in range(n)
    )
    return Landscape(settlements)


def tiers_of(spec: LandscapeSpec) -> np.ndarray:
    """Tier index (0 = top) of each settlement of a central-place landscape."""
    _, tiers, _ = lattice_sites(spec.settlement_count, spec.plane_side)
    return tiers


def dumps(landscape: Landscape) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for s in landscape.settlements:
        # repr() of a float round-trips exactly
        writer.writerow([s.id, repr(s.x), repr(s.y), repr(s.population), repr(s.resource_capacity)])
    return buf.getvalue()


def save(landscape: Landscape, path) -> None:
    Path(path).write_text(dumps(landscape))


def loads(text: str) -> Landscape:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty landscape file", line=1) from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise ParseError(f"expected header {','.join(CSV_HEADER)}", line=1)
    settlements = []
    seen = set()
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(CSV_HEADER):
            raise ParseError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", line=line)
        try:
            sid = int(row[0])
            x, y, pop, res = (float(v) for v in row[1:])
        except ValueError as exc:
            raise ParseError(str(exc), line=line) from None
        if sid in seen:
            raise ParseError(f"duplicate settlement id {sid}", line=line)
        seen.add(sid)
        try:
            settlements.append(Settlement(sid, x, y, pop, res))
        except InvalidStateError as exc:
            raise ParseError(str(exc), line=line) from None
    if not settlements:
        raise ParseError("no settlements", line=reader.line_num)
    try:
        return Landscape(tuple(settlements))
    except InvalidStateError as exc:
        raise ParseError(str(exc)) from None


def load(path) -> Landscape:
    return loads(Path(path).read_text())
