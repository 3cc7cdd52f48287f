import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repmargin.randomness import SharedSeed, derive_stream
from repmargin.rounding import (
    GridPoint,
    RoundingGrid,
    ak_round,
    floor_corner,
    grid_from_record,
    grid_to_record,
    make_grid,
    rounding_probability,
    value,
)


def _grid(offsets, thresholds, beta=1.0):
    return RoundingGrid(beta=beta, offsets=np.asarray(offsets, float),
                        thresholds=np.asarray(thresholds, float))


def test_grid_validation():
    _grid([0.5], [0.5])
    with pytest.raises(ValueError):
        _grid([1.5], [0.5])  # offset beyond beta
    with pytest.raises(ValueError):
        _grid([0.5], [1.5])  # threshold beyond 1
    with pytest.raises(ValueError):
        RoundingGrid(beta=0.0, offsets=np.array([0.0]), thresholds=np.array([0.5]))
    with pytest.raises(ValueError):
        _grid([0.2, 0.3], [0.5])  # length mismatch


def test_make_grid_consumes_offsets_then_thresholds():
    stream_o = derive_stream(SharedSeed(1), "o")
    stream_t = derive_stream(SharedSeed(1), "t")
    g = make_grid(5, 0.25, stream_o, stream_t)
    o = derive_stream(SharedSeed(1), "o").uniform(0.0, 0.25, size=5)
    t = derive_stream(SharedSeed(1), "t").uniform(0.0, 1.0, size=5)
    assert np.array_equal(g.offsets, o)
    assert np.array_equal(g.thresholds, t)
    assert g.k == 5


def test_floor_corner_example():
    # z = o + 5.0 * beta lands exactly on the cell corner
    # binary-exact values so the corner sits exactly on z
    g = _grid([0.125], [0.5], beta=0.25)
    z = np.array([0.125 + 5 * 0.25])
    assert floor_corner(z, g).coords == (5,)


def test_rounding_probability_endpoints():
    g = _grid([0.0], [0.5], beta=1.0)
    # sitting exactly on the corner: round down with probability 1
    assert rounding_probability(np.array([3.0]), g).tolist() == [1.0]
    # near the top of the cell the down-probability shrinks toward 0
    p = rounding_probability(np.array([3.999]), g)[0]
    assert 0.0 < p < 0.01


def test_tie_rounds_down():
    # threshold exactly equal to the down-probability must round down
    g = _grid([0.0], [0.75], beta=1.0)
    pt = ak_round(np.array([2.25]), g)  # p_down = (3 - 2.25) / 1 = 0.75
    assert pt.coords == (2,)


def test_round_brackets_input():
    stream_o = derive_stream(SharedSeed(3), "o")
    stream_t = derive_stream(SharedSeed(3), "t")
    g = make_grid(20, 0.1, stream_o, stream_t)
    z = derive_stream(SharedSeed(3), "z").uniform(-2.0, 2.0, size=20)
    v = value(ak_round(z, g))
    assert np.all(np.abs(v - z) < 0.1 + 1e-12)


def test_unbiased_rounding():
    beta = 0.2
    z = np.array([0.123, -0.456, 0.789])
    n = 100_000
    stream = derive_stream(SharedSeed(4), "mc")
    acc = np.zeros(3)
    offsets = stream.uniform(0.0, beta, size=n * 3).reshape(n, 3)
    thresholds = stream.uniform(0.0, 1.0, size=n * 3).reshape(n, 3)
    from repmargin.rounding import _round_coords

    coords = _round_coords(z, offsets, thresholds, beta)
    vals = offsets + coords * beta
    acc = vals.mean(axis=0)
    assert np.max(np.abs(acc - z)) < 4 * (beta / 2) / np.sqrt(n)


def test_gridpoint_equality_and_hash():
    g1 = _grid([0.1, 0.2], [0.5, 0.5], beta=0.3)
    g2 = _grid([0.1, 0.2], [0.5, 0.5], beta=0.3)
    g3 = _grid([0.1, 0.25], [0.5, 0.5], beta=0.3)
    p1 = GridPoint((1, -2), g1)
    p2 = GridPoint((1, -2), g2)
    p3 = GridPoint((1, -2), g3)
    p4 = GridPoint((1, -1), g1)
    assert p1 == p2
    assert hash(p1) == hash(p2)
    assert p1 != p3  # same coords, different grid
    assert p1 != p4


def test_grid_record_roundtrip():
    stream_o = derive_stream(SharedSeed(5), "o")
    stream_t = derive_stream(SharedSeed(5), "t")
    g = make_grid(4, 0.15, stream_o, stream_t)
    rec = grid_to_record(g)
    json.dumps(rec)  # must be JSON-serializable
    g2 = grid_from_record(rec)
    assert g2.beta == g.beta
    assert np.array_equal(g2.offsets, g.offsets)
    assert np.array_equal(g2.thresholds, g.thresholds)
    z = np.array([0.3, -0.2, 0.9, 0.0])
    assert ak_round(z, g) == ak_round(z, g2)


def test_value_inverts_coords():
    g = _grid([0.05, 0.1], [0.3, 0.7], beta=0.5)
    pt = GridPoint((2, -3), g)
    assert np.allclose(value(pt), [0.05 + 1.0, 0.1 - 1.5])


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8), st.integers(0, 2**32))
@settings(max_examples=40, deadline=None)
def test_round_deterministic_given_grid(zs, seed):
    z = np.array(zs)
    k = z.size
    g = make_grid(k, 0.3, derive_stream(SharedSeed(seed), "o"),
                  derive_stream(SharedSeed(seed), "t"))
    assert ak_round(z, g) == ak_round(z, g)
    # rounded value stays within one cell of the input
    assert np.all(np.abs(value(ak_round(z, g)) - z) <= 0.3 + 1e-9)


def test_stability_small_perturbation():
    # two close inputs agree on most grids: bound 2 * ||dz||_1 / beta
    beta = 0.1
    k = 16
    z = derive_stream(SharedSeed(6), "z").uniform(-1.0, 1.0, size=k)
    dz = np.full(k, 0.0005)
    n = 20_000
    stream = derive_stream(SharedSeed(6), "mc")
    offsets = stream.uniform(0.0, beta, size=n * k).reshape(n, k)
    thresholds = stream.uniform(0.0, 1.0, size=n * k).reshape(n, k)
    from repmargin.rounding import _round_coords

    c1 = _round_coords(z, offsets, thresholds, beta)
    c2 = _round_coords(z + dz, offsets, thresholds, beta)
    disagree = np.mean(np.any(c1 != c2, axis=1))
    bound = 2 * np.abs(dz).sum() / beta
    assert disagree <= bound + 3 * np.sqrt(0.25 / n)
