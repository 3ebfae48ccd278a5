import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semitamed.wiener import (WienerGrid, coarsen, generate, standard_normals, uniforms,
                              write_csv)


def test_deterministic():
    a = generate(7, 3, 2, 64, 1.0)
    b = generate(7, 3, 2, 64, 1.0)
    np.testing.assert_array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, generate(7, 4, 2, 64, 1.0).increments)
    assert not np.array_equal(a.increments, generate(8, 3, 2, 64, 1.0).increments)


def test_uniforms_in_open_interval():
    u = uniforms(0, 0, 10_000)
    assert u.min() > 0.0 and u.max() < 1.0


def test_generator_is_documented_transform():
    # Philox4x64 keyed by (seed, stream), top 53 bits, midpoint, inverse CDF
    from scipy.special import ndtri
    raw = np.random.Philox(key=np.array([11, 5], dtype=np.uint64)).random_raw(8)
    u = ((raw >> np.uint64(11)).astype(float) + 0.5) / 2.0**53
    np.testing.assert_array_equal(standard_normals(11, 5, 8), ndtri(u))


def test_mean_and_variance():
    T, N = 2.0, 2**17
    w = generate(123, 0, 1, N, T)
    x = w.increments[:, 0][:100_000]
    assert abs(x.mean()) <= 4 * np.sqrt(T / N) / np.sqrt(x.size)
    assert abs(x.var() / (T / N) - 1) <= 0.05


def test_paths_independent():
    a = generate(1, 0, 1, 2**14, 1.0).increments[:10_000, 0]
    b = generate(1, 1, 1, 2**14, 1.0).increments[:10_000, 0]
    assert abs(np.corrcoef(a, b)[0, 1]) <= 0.05


@pytest.mark.parametrize("N", [0, 3, 100])
def test_rejects_non_dyadic(N):
    with pytest.raises(ValueError):
        generate(0, 0, 1, N, 1.0)


def test_rejects_bad_horizon_and_seed():
    with pytest.raises(ValueError):
        generate(0, 0, 1, 4, 0.0)
    with pytest.raises(ValueError):
        generate(-1, 0, 1, 4, 1.0)


def test_coarsen_examples():
    inc = np.array([[1.0], [2.0], [3.0], [4.0]])
    w = WienerGrid(seed=0, path_index=0, m=1, N=4, T=1.0, increments=inc)
    np.testing.assert_array_equal(coarsen(w, 1).increments, inc)
    np.testing.assert_array_equal(coarsen(w, 2).increments, [[1.0 + 2.0], [3.0 + 4.0]])
    np.testing.assert_array_equal(coarsen(w, 4).increments, [[(1.0 + 2.0) + (3.0 + 4.0)]])
    assert coarsen(w, 2).N == 2 and coarsen(w, 2).h == 0.5


def test_coarsen_to_single_is_total():
    w = generate(3, 0, 2, 256, 1.0)
    np.testing.assert_allclose(coarsen(w, 256).increments[0], w.increments.sum(axis=0),
                               rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(w.path()[-1], w.W_T, rtol=1e-12, atol=1e-14)


def test_coarsen_rejects_bad_factor():
    w = generate(0, 0, 1, 16, 1.0)
    with pytest.raises(ValueError):
        coarsen(w, 3)
    with pytest.raises(ValueError):
        coarsen(w, 32)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**63), st.integers(0, 10), st.integers(1, 3), st.integers(2, 10))
def test_coarsening_commutes_and_preserves_total(seed, path, m, logN):
    w = generate(seed, path, m, 2**logN, 1.0)
    np.testing.assert_array_equal(coarsen(coarsen(w, 2), 2).increments, coarsen(w, 4).increments)
    for k in range(logN + 1):
        np.testing.assert_array_equal(coarsen(w, 2**k).W_T, w.W_T)


def test_csv_dump(tmp_path):
    w = generate(0, 0, 2, 4, 1.0)
    path = tmp_path / "w.csv"
    write_csv(w, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,dW_1,dW_2"
    assert len(lines) == 5
    assert float(lines[2].split(",")[2]) == w.increments[1, 1]
