"""Normal-means shrinkage of a noisy vector.

All estimators work on the standardized scale ``u = values / noise_sd``,
where each ``u_i ~ N(theta_i, 1)``, and map back by multiplying with
``noise_sd``.

* ``SM``    -- the observations themselves.
* ``HARD``  -- hard thresholding at ``lambda_mult * sqrt(2 log m)``.
* ``NPEB``  -- Tweedie's formula with a normal-kernel estimate of the
  marginal density and its derivative (f-modeling).
* ``NPMLE`` -- grid maximum-likelihood estimate of the prior fitted by EM,
  plugged into the posterior mean (g-modeling).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .exceptions import InvalidInput

SM = "SM"
NPEB = "NPEB"
NPMLE = "NPMLE"
HARD = "HARD"
MEAN_METHODS = (SM, NPEB, NPMLE, HARD)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_CHUNK = 512


@dataclass
class ShrinkageResult:
    estimates: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)


@dataclass
class MixingDistribution:
    """Discrete prior on a regular grid of atoms."""

    atoms: np.ndarray
    weights: np.ndarray
    n_iter: int = 0
    loglik: float = float("nan")
    history: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.atoms.shape != self.weights.shape or self.atoms.ndim != 1:
            raise InvalidInput("atoms and weights must be 1-d of equal length")
        if np.any(np.diff(self.atoms) <= 0):
            raise InvalidInput("atoms must be strictly increasing")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise InvalidInput("weights must lie on the probability simplex")

    @property
    def mean(self) -> float:
        return float(self.weights @ self.atoms)

    @property
    def variance(self) -> float:
        return float(self.weights @ (self.atoms - self.mean) ** 2)


def _standardize(values, noise_sd):
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise InvalidInput("values must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(v)):
        raise InvalidInput("values must be finite")
    if not (noise_sd > 0 and math.isfinite(noise_sd)):
        raise InvalidInput("noise_sd must be positive and finite")
    return v, v / noise_sd


def shrink_sample_mean(values, noise_sd: float = 1.0) -> ShrinkageResult:
    v, _ = _standardize(values, noise_sd)
    return ShrinkageResult(v.copy(), SM)


def shrink_hard_threshold(values, noise_sd: float = 1.0, lambda_mult: float = 1.0) -> ShrinkageResult:
    v, u = _standardize(values, noise_sd)
    lam = lambda_mult * math.sqrt(2.0 * math.log(v.size))
    est = np.where(np.abs(u) > lam, v, 0.0)
    return ShrinkageResult(est, HARD, {"threshold": lam})


def default_bandwidth(m: int) -> float:
    """``1 / sqrt(log m)``; 1 when ``m <= 2`` where that is unusable."""
    return 1.0 if m <= 2 else 1.0 / math.sqrt(math.log(m))


def shrink_npeb(values, noise_sd: float = 1.0, bandwidth: float | None = None) -> ShrinkageResult:
    """Kernel f-modeling estimate ``u_i + g'(u_i) / g(u_i)``.

    The marginal density is a normal-kernel sum over every observation
    including ``j = i``, so the denominator is never below ``phi(0)``.
    """
    v, u = _standardize(values, noise_sd)
    m = u.size
    h = default_bandwidth(m) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise InvalidInput("bandwidth must be positive")
    theta = np.empty(m)
    for start in range(0, m, _CHUNK):
        ui = u[start:start + _CHUNK, None]
        diff = u[None, :] - ui
        # the common 1/sqrt(2 pi) cancels in the ratio
        w = np.exp(-0.5 * (diff / h) ** 2)
        theta[start:start + _CHUNK] = ui[:, 0] + (w * diff).sum(axis=1) / (h * h * w.sum(axis=1))
    return ShrinkageResult(noise_sd * theta, NPEB, {"bandwidth": h})


def _grid(u: np.ndarray, grid_size: int | None) -> np.ndarray:
    k = max(math.ceil(math.sqrt(u.size)), 10) if grid_size is None else int(grid_size)
    if k < 0:
        raise InvalidInput("grid_size must be non-negative")
    lo, hi = u.min() - 0.1, u.max() + 0.1
    if k == 0:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, k + 1)


@numba.njit(cache=True, fastmath=True)
def _em_pass(likT, w, grad, buf):
    """Log-likelihood at ``w`` (minus the constant) and ``grad_k = sum_i lik_ik / mix_i``.

    ``likT`` is the atom-major (k x m) likelihood so the inner loops run
    over contiguous observations.
    """
    k, m = likT.shape
    for i in range(m):
        buf[i] = 0.0
    for j in range(k):
        wj = w[j]
        for i in range(m):
            buf[i] += likT[j, i] * wj
    ll = 0.0
    for i in range(m):
        ll += np.log(buf[i])
        buf[i] = 1.0 / buf[i]
    for j in range(k):
        acc = 0.0
        for i in range(m):
            acc += likT[j, i] * buf[i]
        grad[j] = acc
    return ll


@numba.njit(cache=True)
def _em(likT, w, const, max_iters, tol):
    """EM on a fixed likelihood matrix; also returns the first decreasing step, if any."""
    k, m = likT.shape
    grad = np.empty(k)
    buf = np.empty(m)
    history = np.empty(max_iters + 1)
    ll = _em_pass(likT, w, grad, buf) + const
    history[0] = ll
    it = 0
    while it < max_iters:
        it += 1
        w = w * grad / m
        w = w / w.sum()
        new_ll = _em_pass(likT, w, grad, buf) + const
        history[it] = new_ll
        if new_ll < ll - 1e-10 * max(1.0, abs(ll)):
            return w, history[: it + 1], it, it
        gain = new_ll - ll
        ll = new_ll
        if gain < tol:
            break
    return w, history[: it + 1], it, 0


def npmle_fit(values, noise_sd: float = 1.0, grid_size: int | None = None,
              max_iters: int = 5000, tol: float = 1e-8) -> MixingDistribution:
    """Grid NPMLE of the mixing distribution by EM.

    Weights start uniform and are updated by
    ``w_k <- mean_i w_k phi(u_i - v_k) / sum_l w_l phi(u_i - v_l)`` until the
    log-likelihood gain falls below ``tol``.

    Raises
    ------
    AssertionError
        If an EM step lowers the log-likelihood beyond rounding.
    """
    _, u = _standardize(values, noise_sd)
    atoms = _grid(u, grid_size)
    m, k = u.size, atoms.size
    w = np.full(k, 1.0 / k)
    if k == 1:
        ll = float(np.sum(-0.5 * (u - atoms[0]) ** 2) - m * _LOG_SQRT_2PI)
        return MixingDistribution(atoms, np.ones(1), 0, ll, [ll])

    logphi = -0.5 * (u[:, None] - atoms[None, :]) ** 2
    shift = logphi.max(axis=1)
    likT = np.ascontiguousarray(np.exp(logphi - shift[:, None]).T)
    const = float(shift.sum()) - m * _LOG_SQRT_2PI

    w, history, it, bad = _em(likT, w, const, int(max_iters), float(tol))
    history = history.tolist()
    if bad > 0:
        raise AssertionError(
            f"EM log-likelihood decreased at iteration {bad}: "
            f"{history[bad - 1]!r} -> {history[bad]!r}"
        )
    ll = history[-1]
    w = np.maximum(w, 0.0)
    w /= w.sum()
    return MixingDistribution(atoms, w, it, ll, history)


def posterior_mean(values, noise_sd: float, g: MixingDistribution) -> ShrinkageResult:
    """Posterior mean of each ``theta_i`` under the discrete prior ``g``.

    Computed in log space so that extreme observations never underflow.
    """
    v, u = _standardize(values, noise_sd)
    with np.errstate(divide="ignore"):
        logw = np.log(g.weights)
    theta = np.empty(u.size)
    for start in range(0, u.size, _CHUNK):
        lp = logw[None, :] - 0.5 * (u[start:start + _CHUNK, None] - g.atoms[None, :]) ** 2
        lp -= lp.max(axis=1, keepdims=True)
        post = np.exp(lp)
        theta[start:start + _CHUNK] = (post @ g.atoms) / post.sum(axis=1)
    return ShrinkageResult(noise_sd * theta, NPMLE)


def shrink_npmle(values, noise_sd: float = 1.0, **fit_kwargs) -> ShrinkageResult:
    g = npmle_fit(values, noise_sd, **fit_kwargs)
    res = posterior_mean(values, noise_sd, g)
    res.diagnostics.update({"iterations": g.n_iter, "loglik": g.loglik, "grid_size": g.atoms.size - 1})
    return res


def shrink(values, noise_sd: float, method: str, **kwargs) -> ShrinkageResult:
    """Dispatch to the estimator named by ``method``."""
    method = method.upper()
    if method == SM:
        return shrink_sample_mean(values, noise_sd)
    if method == NPEB:
        return shrink_npeb(values, noise_sd, **kwargs)
    if method == NPMLE:
        return shrink_npmle(values, noise_sd, **kwargs)
    if method == HARD:
        return shrink_hard_threshold(values, noise_sd, **kwargs)
    raise InvalidInput(f"unknown mean method {method!r}; expected one of {MEAN_METHODS}")
