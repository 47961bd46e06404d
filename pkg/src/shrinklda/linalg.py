"""Dense symmetric linear algebra: eigendecomposition and PD matrix powers."""

from typing import NamedTuple

import numpy as np
from scipy import linalg as sla

from .exceptions import InvalidInput, NotPositiveDefinite, ShapeMismatch

#: Relative eigenvalue floor used before powering a symmetric matrix.
EPS_PD = 1e-10


class EigenSystem(NamedTuple):
    """Eigenvalues in non-increasing order and orthonormal eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T


def as_symmetric(m) -> np.ndarray:
    """Return ``m`` as a float array symmetrised by averaging with its transpose."""
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ShapeMismatch(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput("matrix has non-finite entries")
    return 0.5 * (a + a.T)


def sym_eigen(m) -> EigenSystem:
    """Spectral decomposition of a symmetric matrix.

    Eigenvalues are returned in non-increasing order. Each eigenvector is
    oriented so that its largest-magnitude component (lowest index on ties)
    is positive, which makes the output deterministic.
    """
    a = as_symmetric(m)
    values, vectors = sla.eigh(a)
    values = values[::-1].copy()
    vectors = vectors[:, ::-1].copy()
    # argmax returns the first index on ties
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    vectors *= signs
    return EigenSystem(values, vectors)


def clip_eigenvalues(values: np.ndarray) -> np.ndarray:
    top = values.max()
    if top <= 0:
        raise NotPositiveDefinite("all eigenvalues are non-positive")
    floor = EPS_PD * top
    return np.maximum(values, floor)


def pd_power(m, exponent: float) -> np.ndarray:
    """Power of a symmetric positive (semi)definite matrix.

    Eigenvalues below ``EPS_PD`` times the largest eigenvalue are raised to
    that floor first, so rank-deficient input still has an inverse square
    root.

    Parameters
    ----------
    m : array_like, shape (p, p)
    exponent : {-1, -0.5, 0.5}
        Any real exponent is accepted; these three are the ones used.
    """
    eig = sym_eigen(m)
    values = clip_eigenvalues(eig.values)
    out = (eig.vectors * values**exponent) @ eig.vectors.T
    return 0.5 * (out + out.T)


def clipped(m) -> np.ndarray:
    """``m`` with its eigenvalues floored as in :func:`pd_power`."""
    return pd_power(m, 1.0)


def is_pd(m, tol: float = 1e-12) -> bool:
    """True iff the smallest eigenvalue exceeds ``tol`` times the spectral radius."""
    values = sym_eigen(m).values
    scale = np.abs(values).max()
    return bool(values[-1] > tol * scale)


def rel_frobenius(a, b) -> float:
    """Relative Frobenius distance ``||a - b|| / max(||b||, tiny)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), np.finfo(float).tiny))
