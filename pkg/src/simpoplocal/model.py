"""SimpopLocal: settlement growth driven by innovation creation and diffusion.

Each step applies, over all settlements in id order:

1. logistic growth of the population towards the settlement's resource capacity;
2. one Bernoulli draw for the creation of a new innovation;
3. one Bernoulli draw per (receiver, donor) pair where the donor holds an
   innovation the receiver lacks; on success one such innovation is copied.

Every acquisition raises the receiver's resource capacity with diminishing
returns towards ``r_max``.  A run stops once ``innovation_creation_cap``
innovations have been created or after ``step_cap`` steps.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, fields
from typing import ClassVar, Iterable

import numpy as np

from . import _kernel
from .errors import DomainError, InvalidStateError, InvariantViolation
from .seeding import make_rng

GENE_NAMES = ("p_creation", "p_diffusion", "innovation_impact", "distance_decay", "r_max")
GENOME_BOUNDS = np.array(
    [
        [0.0, 1.0],
        [0.0, 1.0],
        [0.0, 2.0],
        [0.0, 4.0],
        [1.0, 40000.0],
    ]
)


@dataclass(frozen=True)
class ParameterSet:
    """The five calibrated parameters of the model."""

    p_creation: float
    p_diffusion: float
    innovation_impact: float
    distance_decay: float
    r_max: float

    BOUNDS: ClassVar[np.ndarray] = GENOME_BOUNDS

    def __post_init__(self):
        for (lo, hi), name in zip(GENOME_BOUNDS, GENE_NAMES):
            value = getattr(self, name)
            if not math.isfinite(value) or not lo <= value <= hi:
                raise InvalidStateError(f"{name}={value!r} outside [{lo}, {hi}]")

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in GENE_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values) -> "ParameterSet":
        return cls(*(float(v) for v in values))

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in GENE_NAMES}

    @classmethod
    def from_dict(cls, data: dict) -> "ParameterSet":
        missing = [name for name in GENE_NAMES if name not in data]
        if missing:
            raise KeyError(missing[0])
        return cls(**{name: float(data[name]) for name in GENE_NAMES})


# Reference calibrated setting at full precision, with the seed it was run under.
PUBLISHED_SETTING = ParameterSet(
    p_creation=1.2022185310640896e-06,
    p_diffusion=7.405303653131592e-07,
    innovation_impact=0.007879556611500305,
    distance_decay=0.6882107473716844,
    r_max=10259.331894632433,
)
PUBLISHED_SEED = -6863419716327549772


@dataclass(frozen=True)
class Settlement:
    id: int
    x: float
    y: float
    population: float
    resource_capacity: float
    innovations: frozenset = frozenset()

    def __post_init__(self):
        for name in ("x", "y", "population", "resource_capacity"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidStateError(f"settlement {self.id}: {name} is not finite")
        if self.population < 0:
            raise InvalidStateError(f"settlement {self.id}: negative population")
        if self.resource_capacity <= 0:
            raise InvalidStateError(f"settlement {self.id}: resource capacity must be > 0")

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True, eq=False)
class Landscape:
    """Settlements ordered by position in the tuple, with Euclidean distances."""

    settlements: tuple[Settlement, ...]
    distances: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        settlements = tuple(self.settlements)
        object.__setattr__(self, "settlements", settlements)
        if not settlements:
            raise InvalidStateError("a landscape needs at least one settlement")
        ids = [s.id for s in settlements]
        if len(set(ids)) != len(ids):
            raise InvalidStateError("duplicate settlement id")
        pos = self.positions
        dist = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=-1))
        off = ~np.eye(len(settlements), dtype=bool)
        if np.any(dist[off] <= 0):
            raise InvalidStateError("two settlements share a position")
        dist.setflags(write=False)
        object.__setattr__(self, "distances", dist)

    def __len__(self):
        return len(self.settlements)

    def __eq__(self, other):
        if not isinstance(other, Landscape):
            return NotImplemented
        return self.settlements == other.settlements

    @property
    def positions(self) -> np.ndarray:
        return np.array([[s.x, s.y] for s in self.settlements], dtype=float)

    @property
    def populations(self) -> np.ndarray:
        return np.array([s.population for s in self.settlements], dtype=float)

    @property
    def resource_capacities(self) -> np.ndarray:
        return np.array([s.resource_capacity for s in self.settlements], dtype=float)


@dataclass(frozen=True)
class SimulationConfig:
    """Fixed (non-calibrated) settings of a run.

    ``count_acquisitions`` switches the stop counter from created innovations
    to every acquisition event (creation or adoption).
    """

    annual_growth_rate: float = 0.02
    innovation_creation_cap: int = 10000
    step_cap: int = 14000
    initial_resource_multiplier: float = 1.0
    count_acquisitions: bool = False

    def __post_init__(self):
        if not math.isfinite(self.annual_growth_rate) or self.annual_growth_rate < 0:
            raise InvalidStateError("annual_growth_rate must be finite and >= 0")
        if self.innovation_creation_cap < 0:
            raise InvalidStateError("innovation_creation_cap must be >= 0")
        if self.step_cap < 1:
            raise InvalidStateError("step_cap must be >= 1")
        if not self.initial_resource_multiplier > 0:
            raise InvalidStateError("initial_resource_multiplier must be > 0")

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(sorted(unknown)[0])
        return cls(**data)


class Termination(str, enum.Enum):
    INNOVATION_CAP = "innovation_cap"
    STEP_CAP = "step_cap"


@dataclass(frozen=True, eq=False)
class SimulationOutcome:
    final_sizes: np.ndarray
    duration_steps: int
    max_population: float
    innovations_created: int
    terminated_by: Termination
    innovations_acquired: int = 0
    innovation_counts: np.ndarray | None = None
    # population snapshots every ``snapshot_every`` steps, row 0 = initial state
    snapshots: np.ndarray | None = None
    snapshot_every: int = 0

    def __eq__(self, other):
        if not isinstance(other, SimulationOutcome):
            return NotImplemented
        return (
            np.array_equal(self.final_sizes, other.final_sizes)
            and self.duration_steps == other.duration_steps
            and self.max_population == other.max_population
            and self.innovations_created == other.innovations_created
            and self.terminated_by == other.terminated_by
            and self.innovations_acquired == other.innovations_acquired
        )

    def to_record(self) -> dict:
        return {
            "duration_steps": self.duration_steps,
            "max_population": self.max_population,
            "innovations_created": self.innovations_created,
            "innovations_acquired": self.innovations_acquired,
            "terminated_by": self.terminated_by.value,
            "final_sizes": [float(v) for v in self.final_sizes],
        }


def _check_finite(**values):
    for name, value in values.items():
        if not math.isfinite(value):
            raise InvalidStateError(f"{name} is not finite: {value!r}")


def grow(population: float, r: float, resource_capacity: float) -> float:
    """Logistic (Verhulst) growth over one step."""
    _check_finite(population=population, r=r, resource_capacity=resource_capacity)
    if resource_capacity <= 0:
        raise InvalidStateError("resource_capacity must be > 0")
    if population < 0:
        raise InvalidStateError("population must be >= 0")
    return population * (1.0 + r * (1.0 - population / resource_capacity))


def apply_innovation_impact(resource_capacity: float, innovation_impact: float, r_max: float) -> float:
    """Raise a resource capacity after one acquisition, with diminishing returns.

    For impacts above 1 the raw update can overshoot ``r_max``; the result is
    clamped so the capacity never exceeds ``r_max``.
    """
    _check_finite(resource_capacity=resource_capacity, innovation_impact=innovation_impact, r_max=r_max)
    if resource_capacity <= 0:
        raise InvariantViolation("resource_capacity must be > 0")
    if resource_capacity > r_max:
        raise InvariantViolation(f"resource_capacity {resource_capacity} exceeds r_max {r_max}")
    out = resource_capacity * (1.0 + innovation_impact * (1.0 - resource_capacity / r_max))
    return min(out, r_max)


def _at_least_one(trials: float, log_q: float) -> float:
    # 1 - (1 - p)**trials with log_q = log1p(-p)
    if trials <= 0.0:
        return 0.0
    return -math.expm1(trials * log_q)


def _log1m(p: float) -> float:
    return math.log1p(-p) if p < 1.0 else -math.inf


def _exponential(rng: np.random.Generator) -> float:
    return -math.log1p(-rng.random())


def creation_probability(population: float, p_creation: float) -> float:
    """Probability that at least one of the P(P-1)/2 intra-settlement pairs innovates."""
    _check_finite(population=population, p_creation=p_creation)
    if population < 0:
        raise InvalidStateError("population must be >= 0")
    if not 0.0 <= p_creation <= 1.0:
        raise DomainError("p_creation must lie in [0, 1]")
    pairs = population * (population - 1.0) / 2.0
    return _at_least_one(pairs, _log1m(p_creation))


def diffusion_probability(
    pop_i: float, pop_j: float, distance: float, p_diffusion: float, distance_decay: float
) -> float:
    """Probability that at least one of the gravity-weighted inter-settlement contacts transmits."""
    _check_finite(pop_i=pop_i, pop_j=pop_j, distance=distance, p_diffusion=p_diffusion, distance_decay=distance_decay)
    if distance <= 0:
        raise DomainError("distance must be > 0")
    if not 0.0 <= p_diffusion <= 1.0:
        raise DomainError("p_diffusion must lie in [0, 1]")
    contacts = pop_i * pop_j / (2.0 * distance**distance_decay)
    return _at_least_one(contacts, _log1m(p_diffusion))


def interaction_weights(distances: np.ndarray, distance_decay: float) -> np.ndarray:
    """``1 / (2 D_ij ** decay)`` off the diagonal, zero on it."""
    n = distances.shape[0]
    w = np.zeros((n, n))
    off = ~np.eye(n, dtype=bool)
    w[off] = 1.0 / (2.0 * distances[off] ** distance_decay)
    return w


def initial_resources(landscape: Landscape, params: ParameterSet, config: SimulationConfig) -> np.ndarray:
    res = landscape.resource_capacities * config.initial_resource_multiplier
    return np.minimum(res, params.r_max)


@dataclass
class SimulationState:
    """Mutable state of one run, used by the reference :func:`step`."""

    populations: np.ndarray
    resources: np.ndarray
    weights: np.ndarray
    innovations: list[set]
    acquisition_order: list[list]
    innovations_created: int = 0
    innovations_acquired: int = 0
    steps: int = 0
    # residual unit exponential; an event fires once the summed hazard reaches it
    clock: float | None = None

    @classmethod
    def initial(cls, landscape: Landscape, params: ParameterSet, config: SimulationConfig) -> "SimulationState":
        n = len(landscape)
        return cls(
            populations=landscape.populations,
            resources=initial_resources(landscape, params, config),
            weights=interaction_weights(landscape.distances, params.distance_decay),
            innovations=[set() for _ in range(n)],
            acquisition_order=[[] for _ in range(n)],
        )

    def _acquire(self, k, m, params):
        self.innovations[k].add(m)
        self.acquisition_order[k].append(m)
        self.innovations_acquired += 1
        self.resources[k] = apply_innovation_impact(self.resources[k], params.innovation_impact, params.r_max)


def _choose_transmissible(u, donor_order, receiver, n_diff, rng):
    # mirrors _kernel.choose_transmissible draw for draw
    n_donor = len(donor_order)
    if n_diff * _kernel._REJECTION_RATIO >= n_donor:
        while True:
            m = donor_order[int(u * n_donor)]
            if m not in receiver:
                return m
            u = rng.random()
    k = int(u * n_diff)
    return [m for m in donor_order if m not in receiver][k]


def step(
    state: SimulationState, params: ParameterSet, config: SimulationConfig, rng: np.random.Generator
) -> list[dict]:
    """Advance ``state`` by one step in place and return the step's events.

    Every creation and diffusion trial is a Bernoulli draw with probability
    1 - exp(-h).  The draws share one exponential clock: each trial subtracts
    its hazard h from the clock and succeeds when h exceeds what is left, after
    which a fresh clock is drawn.  This is the same law as one uniform per
    trial but costs a draw only per event.
    """
    n = len(state.populations)
    r = config.annual_growth_rate
    events = []
    t = state.steps + 1

    for i in range(n):
        state.populations[i] = grow(state.populations[i], r, state.resources[i])

    if state.clock is None:
        state.clock = _exponential(rng)

    def fires(hazard: float) -> bool:
        # a trial with hazard h succeeds with probability 1 - exp(-h)
        if not hazard > 0.0:
            return False
        if state.clock < hazard:
            return True
        state.clock -= hazard
        return False

    rate_c = -_log1m(params.p_creation)
    for i in range(n):
        p = state.populations[i]
        if fires(p * (p - 1.0) / 2.0 * rate_c):
            m = state.innovations_created
            state.innovations_created += 1
            state._acquire(i, m, params)
            state.clock = _exponential(rng)
            events.append({"step": t, "settlement": i, "kind": "creation", "innovation": m})

    with np.errstate(invalid="ignore"):
        # the zero diagonal times an infinite rate is never read
        rate_d = state.weights * -_log1m(params.p_diffusion)
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            receiver = state.innovations[i]
            n_diff = len(state.innovations[j] - receiver)
            if n_diff == 0:
                continue
            if fires(state.populations[i] * state.populations[j] * rate_d[i, j]):
                m = _choose_transmissible(rng.random(), state.acquisition_order[j], receiver, n_diff, rng)
                state._acquire(i, m, params)
                state.clock = _exponential(rng)
                events.append({"step": t, "settlement": i, "kind": "diffusion", "innovation": m, "donor": j})

    state.steps = t
    return events


def write_events(events: Iterable[dict], fh) -> None:
    for event in events:
        fh.write(json.dumps(event) + "\n")


def run(
    landscape: Landscape,
    params: ParameterSet,
    config: SimulationConfig | None = None,
    seed: int = 0,
    snapshot_every: int = 0,
) -> SimulationOutcome:
    """Simulate one replication; a pure function of its arguments."""
    config = config or SimulationConfig()
    population = landscape.populations
    resources = initial_resources(landscape, params, config)
    weights = interaction_weights(landscape.distances, params.distance_decay)
    width = config.innovation_creation_cap + len(population) + 1
    steps, created, acquired, term, counts, snaps = _kernel.simulate(
        population,
        resources,
        weights,
        params.p_creation,
        params.p_diffusion,
        params.innovation_impact,
        params.r_max,
        config.annual_growth_rate,
        config.innovation_creation_cap,
        config.step_cap,
        config.count_acquisitions,
        make_rng(seed),
        int(snapshot_every),
        _kernel.block_shift(len(population), width),
    )
    if not np.all(np.isfinite(population)):
        raise InvalidStateError("population diverged")
    return SimulationOutcome(
        final_sizes=population,
        duration_steps=int(steps),
        max_population=float(population.max()),
        innovations_created=int(created),
        terminated_by=Termination.INNOVATION_CAP if term == _kernel.TERMINATED_INNOVATION_CAP else Termination.STEP_CAP,
        innovations_acquired=int(acquired),
        innovation_counts=counts,
        snapshots=snaps if snapshot_every else None,
        snapshot_every=int(snapshot_every),
    )


def run_reference(
    landscape: Landscape, params: ParameterSet, config: SimulationConfig | None = None, seed: int = 0
) -> tuple[SimulationOutcome, list[dict]]:
    """Slow pure-Python run built on :func:`step`; also returns the event log."""
    config = config or SimulationConfig()
    state = SimulationState.initial(landscape, params, config)
    rng = make_rng(seed)
    events = []
    while True:
        counter = state.innovations_acquired if config.count_acquisitions else state.innovations_created
        if counter >= config.innovation_creation_cap:
            term = Termination.INNOVATION_CAP
            break
        if state.steps >= config.step_cap:
            term = Termination.STEP_CAP
            break
        events.extend(step(state, params, config, rng))
    outcome = SimulationOutcome(
        final_sizes=state.populations.copy(),
        duration_steps=state.steps,
        max_population=float(state.populations.max()),
        innovations_created=state.innovations_created,
        terminated_by=term,
        innovations_acquired=state.innovations_acquired,
        innovation_counts=np.array([len(s) for s in state.innovations]),
    )
    return outcome, events
