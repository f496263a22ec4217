import numpy as np
import pytest

from simpoplocal.emoa import EmoaConfig
from simpoplocal.landscape import LandscapeSpec, generate
from simpoplocal.model import Landscape, ParameterSet, Settlement
from simpoplocal.objectives import ObjectiveVector


@pytest.fixture(scope="session")
def small_landscape() -> Landscape:
    return generate(LandscapeSpec(settlement_count=12, seed=3))


@pytest.fixture(scope="session")
def default_landscape() -> Landscape:
    return generate(LandscapeSpec())


def line_landscape(populations, spacing=1.0) -> Landscape:
    return Landscape(
        tuple(
            Settlement(id=i, x=i * spacing, y=0.0, population=float(p), resource_capacity=float(p))
            for i, p in enumerate(populations)
        )
    )


@pytest.fixture
def fast_params() -> ParameterSet:
    # innovates within a few hundred steps on small landscapes
    return ParameterSet(p_creation=1e-4, p_diffusion=1e-4, innovation_impact=0.05, distance_decay=1.0, r_max=2000.0)


def assert_bit_equal(a, b):
    a, b = np.asarray(a), np.asarray(b)
    assert a.shape == b.shape
    assert np.array_equal(a.view(np.uint64), b.view(np.uint64)) if a.dtype == np.float64 else np.array_equal(a, b)


TOY_TARGETS = np.array(
    [
        [0.2, 0.3, 1.0, 2.0, 5000.0],
        [0.8, 0.1, 0.5, 3.0, 20000.0],
        [0.5, 0.9, 1.5, 1.0, 30000.0],
    ]
)


class ToyFitness:
    """Distances to three fixed genomes, scaled onto the calibration objectives.

    The plain version ignores the seed; the noisy one draws the flag count
    binomially and adds Gaussian noise to the deviations.
    """

    def __init__(self, noisy: bool = False):
        self.noisy = noisy
        self.widths = EmoaConfig().widths

    def __call__(self, genome, seed):
        x = genome.to_array()
        d = np.linalg.norm((x - TOY_TARGETS) / self.widths, axis=1)
        if not self.noisy:
            return ObjectiveVector(int(round(100 * min(1.0, d[0] / 2))), 40000.0 * d[1], 4000.0 * d[2])
        rng = np.random.default_rng(seed)
        score = int(rng.binomial(200, min(1.0, d[0] / 2)))
        pop = abs(40000.0 * d[1] + rng.normal(0, 2000.0))
        dur = abs(4000.0 * d[2] + rng.normal(0, 200.0))
        return ObjectiveVector(score, pop, dur)


# one "criterion N: PASS/FAIL ..." line per acceptance check, echoed at the end
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
