import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simpoplocal.errors import LandscapeError, ParseError
from simpoplocal.landscape import LandscapeSpec, Placement, dumps, generate, lattice_sites, load, loads, save, tiers_of

HEADER = "id,x,y,population,resource_capacity\n"


def test_single_settlement():
    land = generate(LandscapeSpec(settlement_count=1))
    assert len(land) == 1
    assert land.distances.shape == (1, 1)
    assert land.distances[0, 0] == 0


def test_default_sizes_within_bounds(default_landscape):
    assert len(default_landscape) == 100
    sizes = default_landscape.populations
    assert np.all((sizes >= 80) & (sizes <= 400))
    assert np.array_equal(default_landscape.resource_capacities, sizes)


def test_same_seed_same_landscape():
    assert generate(LandscapeSpec(seed=4)) == generate(LandscapeSpec(seed=4))
    assert generate(LandscapeSpec(seed=4)) != generate(LandscapeSpec(seed=5))


def test_spec_validation():
    with pytest.raises(LandscapeError):
        LandscapeSpec(size_min=400, size_max=80)
    with pytest.raises(LandscapeError):
        LandscapeSpec(settlement_count=0)
    with pytest.raises(LandscapeError):
        LandscapeSpec(plane_side=0)
    with pytest.raises(LandscapeError):
        LandscapeSpec(jitter=0.5)


def test_lattice_tiers_are_nested():
    pos, tiers, spacing = lattice_sites(100, 100.0)
    counts = np.bincount(tiers, minlength=3)
    # nested triangular lattices: each tier is sparser than the next
    assert counts[0] < counts[1] < counts[2]
    d = np.sqrt(((pos[:, None] - pos[None]) ** 2).sum(-1))
    top = d[np.ix_(tiers == 0, tiers == 0)]
    assert top[top > 0].min() == pytest.approx(3 * spacing)


def test_top_tier_holds_largest_settlements():
    spec = LandscapeSpec(seed=2)
    land = generate(spec)
    tiers = tiers_of(spec)
    means = [land.populations[tiers == t].mean() for t in range(3)]
    assert means[0] >= means[1] >= means[2]
    assert land.populations[tiers == 0].min() >= land.populations[tiers == 2].max()


def test_jitter_bounded():
    spec = LandscapeSpec(jitter=0.3, seed=8)
    exact, _, spacing = lattice_sites(spec.settlement_count, spec.plane_side)
    land = generate(spec)
    shift = np.sqrt(((land.positions - exact) ** 2).sum(axis=1))
    assert shift.max() <= 0.3 * spacing + 1e-9


def test_uniform_placement_inside_plane():
    land = generate(LandscapeSpec(placement=Placement.UNIFORM_RANDOM, plane_side=50.0, seed=1))
    assert np.all((land.positions >= 0) & (land.positions <= 50.0))


def test_infeasible_lattice():
    with pytest.raises(LandscapeError):
        generate(LandscapeSpec(settlement_count=200_000))


@given(st.integers(1, 300), st.integers(0, 2**63 - 1), st.sampled_from(list(Placement)))
@settings(max_examples=30, deadline=None)
def test_generated_landscapes_valid(count, seed, placement):
    land = generate(LandscapeSpec(settlement_count=count, seed=seed, placement=placement))
    assert len(land) == count
    d = land.distances
    assert np.array_equal(d, d.T)
    assert np.all(d[~np.eye(count, dtype=bool)] > 0)
    assert np.all((land.populations >= 80) & (land.populations <= 400))


def test_csv_round_trip(tmp_path, default_landscape):
    path = tmp_path / "landscape.csv"
    save(default_landscape, path)
    back = load(path)
    assert back == default_landscape
    assert np.array_equal(back.positions.view(np.uint64), default_landscape.positions.view(np.uint64))
    assert path.read_text().startswith(HEADER)


def test_duplicate_id_rejected():
    text = HEADER + "0,0.0,0.0,100.0,100.0\n0,1.0,0.0,100.0,100.0\n"
    with pytest.raises(ParseError) as err:
        loads(text)
    assert err.value.line == 3


def test_negative_population_rejected():
    text = HEADER + "0,0.0,0.0,100.0,100.0\n1,1.0,0.0,-5.0,100.0\n"
    with pytest.raises(ParseError) as err:
        loads(text)
    assert err.value.line == 3
    assert "line 3" in str(err.value)


@pytest.mark.parametrize(
    "text",
    [
        "",
        "a,b,c\n0,0,0\n",
        HEADER + "0,0.0,0.0,100.0\n",
        HEADER + "0,zero,0.0,100.0,100.0\n",
        HEADER,
    ],
)
def test_malformed_files(text):
    with pytest.raises(ParseError):
        loads(text)


def test_dumps_is_canonical(default_landscape):
    assert dumps(loads(dumps(default_landscape))) == dumps(default_landscape)
