import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repmargin.data import (
    LAW_CLUSTER,
    LAW_SPHERE,
    Dataset,
    DatasetFormatError,
    FixedSource,
    MarginSpec,
    SyntheticSource,
    error_rate,
    gen_dataset,
    load_dataset,
    margin_loss_rate,
    random_unit_vector,
    save_dataset,
)
from repmargin.randomness import SharedSeed, derive_stream


def _spec(dim=8, tau=0.3, law=LAW_SPHERE, seed=0):
    w = random_unit_vector(dim, derive_stream(SharedSeed(seed), "w"))
    return MarginSpec(dim=dim, tau=tau, w_star=w, law=law)


def _margins(data, w):
    return data.y * (data.x @ w) / np.linalg.norm(data.x, axis=1)


def test_dataset_validation():
    Dataset(np.ones((2, 3)), np.array([1, -1]))
    with pytest.raises(ValueError):
        Dataset(np.ones((2, 3)), np.array([1, 2]))  # bad label
    with pytest.raises(ValueError):
        Dataset(np.zeros((1, 3)), np.array([1]))  # zero row
    with pytest.raises(ValueError):
        Dataset(np.ones((0, 3)), np.array([]))
    with pytest.raises(ValueError):
        Dataset(np.array([[np.inf, 0.0]]), np.array([1]))


def test_spec_validation():
    _spec()
    with pytest.raises(ValueError):
        MarginSpec(dim=3, tau=0.0, w_star=np.array([1.0, 0, 0]), law=LAW_SPHERE)
    with pytest.raises(ValueError):
        MarginSpec(dim=3, tau=0.5, w_star=np.array([2.0, 0, 0]), law=LAW_SPHERE)
    with pytest.raises(ValueError):
        MarginSpec(dim=3, tau=0.5, w_star=np.array([1.0, 0, 0]), law="no-such-law")


def test_random_unit_vector():
    for d in (1, 2, 7):
        v = random_unit_vector(d, derive_stream(SharedSeed(1), ("u", d)))
        assert v.shape == (d,)
        assert abs(np.linalg.norm(v) - 1.0) < 1e-12


@pytest.mark.parametrize("law", [LAW_SPHERE, LAW_CLUSTER])
def test_generated_margin_holds(law):
    spec = _spec(dim=10, tau=0.4, law=law, seed=2)
    data = gen_dataset(spec, 800, derive_stream(SharedSeed(2), "d"))
    m = _margins(data, spec.w_star)
    assert np.all(m >= 0.4)
    # labels consistent with the separator
    assert np.all(data.y == np.where(data.x @ spec.w_star >= 0, 1, -1))


def test_margin_enforcement_not_degenerate():
    # min margin should sit close to tau, not collapse everything to tau
    spec = _spec(dim=10, tau=0.3, seed=3)
    data = gen_dataset(spec, 3000, derive_stream(SharedSeed(3), "d"))
    m = _margins(data, spec.w_star)
    assert 0.3 <= m.min() <= 0.35
    assert m.max() > 0.6  # natural spread survives


def test_extreme_margin_2d():
    spec = _spec(dim=2, tau=0.99, seed=4)
    data = gen_dataset(spec, 200, derive_stream(SharedSeed(4), "d"))
    m = _margins(data, spec.w_star)
    assert np.all(m >= 0.99)
    assert np.all(m <= 1.0 + 1e-12)


def test_one_dimensional_snaps():
    w = np.array([1.0])
    spec = MarginSpec(dim=1, tau=0.5, w_star=w, law=LAW_SPHERE)
    data = gen_dataset(spec, 50, derive_stream(SharedSeed(5), "d"))
    assert np.all(_margins(data, w) >= 0.5)


def test_generation_deterministic():
    spec = _spec(dim=6, tau=0.2, seed=6)
    a = gen_dataset(spec, 100, derive_stream(SharedSeed(6), "d"))
    b = gen_dataset(spec, 100, derive_stream(SharedSeed(6), "d"))
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.y, b.y)


def test_cluster_law_radii_spread():
    spec = _spec(dim=12, tau=0.2, law=LAW_CLUSTER, seed=7)
    data = gen_dataset(spec, 2000, derive_stream(SharedSeed(7), "d"))
    radii = np.linalg.norm(data.x, axis=1)
    assert radii.std() > 0.1  # cluster law keeps unnormalized radii


def test_error_and_margin_loss_rates():
    x = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.5, 0.5]])
    y = np.array([1, 1, 1, -1])
    data = Dataset(x, y)
    w = np.array([1.0, 0.0])
    # sign errors: sample 2 (x.w = -1, y=+1), sample 3 (x.w=0.5, y=-1),
    # sample 1 (x.w = 0 counts as error)
    assert error_rate(w, data) == 0.75
    assert margin_loss_rate(w, data, 0.25) == 0.75
    assert margin_loss_rate(w, data, 1.5) == 1.0


def test_error_rate_accepts_halfspace():
    from repmargin.margin_solvers import Halfspace

    data = Dataset(np.array([[1.0, 0.0]]), np.array([1]))
    h = Halfspace(np.array([1.0, 0.0]), margin=1.0)
    assert error_rate(h, data) == 0.0


def test_save_load_roundtrip(tmp_path):
    spec = _spec(dim=5, tau=0.25, seed=8)
    data = gen_dataset(spec, 64, derive_stream(SharedSeed(8), "d"))
    path = tmp_path / "data.txt"
    save_dataset(str(path), data)
    back = load_dataset(str(path))
    assert np.array_equal(back.x, data.x)  # bit-exact via repr round-trip
    assert np.array_equal(back.y, data.y)
    assert back.tau == data.tau


def test_load_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("2 2 0.5\n0.5 1.0 1\n0.25 -1\n")  # short row
    with pytest.raises(DatasetFormatError) as exc:
        load_dataset(str(path))
    assert exc.value.line == 3

    path.write_text("2 1 0.5\n0.5 1.0 3\n")  # label not +-1
    with pytest.raises(DatasetFormatError) as exc:
        load_dataset(str(path))
    assert exc.value.line == 2

    path.write_text("bogus\n")
    with pytest.raises(DatasetFormatError) as exc:
        load_dataset(str(path))
    assert exc.value.line == 1


def test_synthetic_source_draws_advance():
    spec = _spec(dim=4, tau=0.3, seed=9)
    src = SyntheticSource(spec, derive_stream(SharedSeed(9), "d"))
    a = src.draw(10)
    b = src.draw(10)
    assert not np.array_equal(a.x, b.x)
    assert src.dim == 4


def test_fixed_source_exhaustion():
    spec = _spec(dim=3, tau=0.3, seed=10)
    data = gen_dataset(spec, 20, derive_stream(SharedSeed(10), "d"))
    src = FixedSource(data)
    first = src.draw(15)
    assert np.array_equal(first.x, data.x[:15])
    assert src.remaining == 5
    with pytest.raises(ValueError, match="exhausted"):
        src.draw(6)


def test_slice_and_sample():
    spec = _spec(dim=3, tau=0.3, seed=11)
    data = gen_dataset(spec, 10, derive_stream(SharedSeed(11), "d"))
    part = data.slice(2, 5)
    assert part.n == 3
    assert np.array_equal(part.x, data.x[2:5])
    s = data.sample(4)
    assert np.array_equal(s.x, data.x[4])
    assert s.y == data.y[4]


@given(st.integers(2, 12), st.floats(0.05, 0.9), st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_margin_invariant_property(dim, tau, seed):
    w = random_unit_vector(dim, derive_stream(SharedSeed(seed), "w"))
    spec = MarginSpec(dim=dim, tau=tau, w_star=w, law=LAW_SPHERE)
    data = gen_dataset(spec, 40, derive_stream(SharedSeed(seed), "d"))
    m = _margins(data, w)
    assert np.all(m >= tau * (1 - 1e-12))
    assert np.all(np.isfinite(data.x))
