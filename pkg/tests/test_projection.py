import numpy as np
import pytest

from repmargin.projection import (
    GAUSSIAN,
    RADEMACHER,
    JLMatrix,
    project,
    project_rows,
    required_dim,
    sample_jl,
)
from repmargin.randomness import SharedSeed, derive_stream


def _stream(tag="jl", seed=0):
    return derive_stream(SharedSeed(seed), tag)


def test_shapes_and_family():
    a = sample_jl(_stream(), 5, 12, GAUSSIAN)
    assert a.entries.shape == (5, 12)
    assert a.k == 5 and a.d == 12
    b = sample_jl(_stream("r"), 4, 6, RADEMACHER)
    vals = np.unique(np.abs(b.entries))
    assert np.allclose(vals, 1 / np.sqrt(4))
    with pytest.raises(ValueError):
        sample_jl(_stream(), 3, 3, "bogus")


def test_matrix_immutable():
    a = sample_jl(_stream(), 3, 4, GAUSSIAN)
    with pytest.raises(ValueError):
        a.entries[0, 0] = 1.0


def test_sampling_row_major_consumption():
    # entries must come from the stream in row-major order
    a = sample_jl(_stream(seed=2), 3, 4, GAUSSIAN)
    raw = derive_stream(SharedSeed(2), "jl").gaussian(0.0, 1.0 / np.sqrt(3), size=12)
    assert np.array_equal(a.entries.ravel(), raw)


def test_projection_is_linear_map():
    a = sample_jl(_stream(seed=3), 6, 10, GAUSSIAN)
    x = derive_stream(SharedSeed(3), "x").gaussian(size=10)
    z = derive_stream(SharedSeed(3), "z").gaussian(size=10)
    assert np.allclose(project(a, x + z), project(a, x) + project(a, z))
    assert np.allclose(project(a, 2.5 * x), 2.5 * project(a, x))


def test_project_rows_matches_vector_projection():
    a = sample_jl(_stream(seed=4), 5, 8, GAUSSIAN)
    xs = derive_stream(SharedSeed(4), "xs").gaussian(size=24).reshape(3, 8)
    rows = project_rows(a, xs)
    for i in range(3):
        # same map; reduction order may differ between the two paths
        assert np.allclose(rows[i], project(a, xs[i]), rtol=0, atol=1e-12)


def test_column_action_via_basis_vector():
    a = sample_jl(_stream(seed=5), 4, 7, GAUSSIAN)
    e2 = np.zeros(7)
    e2[2] = 1.0
    assert np.array_equal(project(a, e2), a.entries[:, 2])


def test_norm_preservation_statistics():
    # for fixed unit x and many matrices, ||Ax||^2 concentrates at 1
    d, k, n = 10, 64, 400
    x = np.zeros(d)
    x[0] = 0.6
    x[1] = -0.8
    stream = _stream(seed=6)
    sq = np.empty(n)
    for i in range(n):
        a = sample_jl(stream, k, d, GAUSSIAN)
        ax = project(a, x)
        sq[i] = ax @ ax
    assert abs(sq.mean() - 1.0) < 5 / np.sqrt(n)
    # relative deviation beyond 0.5 should be rare at k=64
    assert np.mean(np.abs(sq - 1.0) > 0.5) <= 2 * np.exp(-64 * 0.25 / 8) + 0.05


def test_rademacher_unbiased_gram():
    d, k, n = 6, 32, 300
    x = np.ones(d) / np.sqrt(d)
    stream = _stream("rg", seed=7)
    sq = np.empty(n)
    for i in range(n):
        a = sample_jl(stream, k, d, RADEMACHER)
        ax = project(a, x)
        sq[i] = ax @ ax
    assert abs(sq.mean() - 1.0) < 5 / np.sqrt(n)


def test_required_dim_examples():
    assert required_dim(1.0, np.exp(-1.0), c_jl=8.0) == 8
    assert required_dim(0.5, 0.05, c_jl=8.0) == int(np.ceil(8 * 4 * np.log(20)))
    assert required_dim(1.0, 0.9999, c_jl=8.0) == 1  # floor at one dimension


def test_required_dim_validation():
    with pytest.raises(ValueError):
        required_dim(0.0, 0.1)
    with pytest.raises(ValueError):
        required_dim(0.5, 0.0)
    with pytest.raises(ValueError):
        required_dim(1.5, 0.1)
