import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shrinklda.exceptions import InvalidInput, NotPositiveDefinite, ShapeMismatch
from shrinklda.linalg import (
    EPS_PD,
    as_symmetric,
    clip_eigenvalues,
    is_pd,
    pd_power,
    rel_frobenius,
    sym_eigen,
)


def random_spd(seed, p, cond=10.0):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    vals = np.geomspace(1.0, cond, p)
    return (q * vals) @ q.T


def test_eigen_descending_and_reconstructs():
    m = random_spd(0, 6)
    eig = sym_eigen(m)
    assert np.all(np.diff(eig.values) <= 0)
    np.testing.assert_allclose(eig.reconstruct(), m, atol=1e-12)
    np.testing.assert_allclose(eig.vectors.T @ eig.vectors, np.eye(6), atol=1e-12)


def test_eigenvector_orientation_is_deterministic():
    m = random_spd(1, 5)
    a = sym_eigen(m).vectors
    b = sym_eigen(m.copy()).vectors
    assert np.array_equal(a, b)
    idx = np.argmax(np.abs(a), axis=0)
    assert np.all(a[idx, np.arange(5)] > 0)


def test_orientation_tie_goes_to_lowest_index():
    # eigenvectors (1,1)/sqrt2 and (1,-1)/sqrt2 have tied magnitudes
    eig = sym_eigen([[2.0, 1.0], [1.0, 2.0]])
    assert np.all(eig.vectors[0] > 0)


def test_diagonal_matrix_eigensystem():
    eig = sym_eigen(np.diag([1.0, 3.0, 2.0]))
    np.testing.assert_allclose(eig.values, [3.0, 2.0, 1.0])
    np.testing.assert_allclose(np.abs(eig.vectors), np.eye(3)[:, [1, 2, 0]])


def test_shape_and_finiteness_errors():
    with pytest.raises(ShapeMismatch):
        sym_eigen(np.ones((2, 3)))
    with pytest.raises(InvalidInput):
        sym_eigen([[1.0, np.nan], [np.nan, 1.0]])


def test_as_symmetric_averages():
    a = as_symmetric([[1.0, 2.0], [0.0, 1.0]])
    np.testing.assert_array_equal(a, [[1.0, 1.0], [1.0, 1.0]])


def test_pd_power_known_values():
    np.testing.assert_allclose(pd_power(np.diag([4.0, 9.0]), 0.5), np.diag([2.0, 3.0]))
    np.testing.assert_allclose(pd_power(np.diag([4.0, 9.0]), -1.0), np.diag([0.25, 1 / 9]))
    np.testing.assert_allclose(pd_power(np.diag([4.0, 0.25]), -0.5), np.diag([0.5, 2.0]))


def test_pd_power_floors_singular_input():
    m = np.diag([1.0, 0.0])
    inv = pd_power(m, -1.0)
    assert inv[1, 1] == pytest.approx(1.0 / EPS_PD)
    assert np.all(np.isfinite(pd_power(m, -0.5)))


def test_clip_rejects_non_positive_spectrum():
    with pytest.raises(NotPositiveDefinite):
        clip_eigenvalues(np.array([0.0, -1.0]))
    with pytest.raises(NotPositiveDefinite):
        pd_power(-np.eye(2), 0.5)


def test_is_pd():
    assert is_pd(np.eye(3))
    assert not is_pd(np.diag([1.0, 0.0]))
    assert not is_pd(np.diag([1.0, -1.0]))


def test_rel_frobenius():
    assert rel_frobenius(np.eye(2), np.eye(2)) == 0.0
    assert rel_frobenius(2 * np.eye(2), np.eye(2)) == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), p=st.integers(1, 8))
def test_power_identities(seed, p):
    m = random_spd(seed, p, cond=50.0)
    half = pd_power(m, 0.5)
    np.testing.assert_allclose(half @ half, m, atol=1e-9)
    np.testing.assert_allclose(pd_power(m, -1.0) @ m, np.eye(p), atol=1e-9)
    ih = pd_power(m, -0.5)
    np.testing.assert_allclose(ih @ m @ ih, np.eye(p), atol=1e-9)
    assert np.array_equal(half, half.T)
