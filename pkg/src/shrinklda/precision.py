"""Precision-matrix estimators: independence rule, graphical lasso, LAM, oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .exceptions import (
    ConvergenceFailure,
    InsufficientData,
    InvalidInput,
    NotPositiveDefinite,
    ShapeMismatch,
)
from .linalg import EPS_PD, as_symmetric, is_pd, pd_power, sym_eigen

IR = "IR"
GLASSO = "GLASSO"
LAM = "LAM"
ORACLE = "ORACLE"
PRECISION_METHODS = (ORACLE, GLASSO, LAM, IR)

#: Inner lasso stopping threshold as a fraction of the outer tolerance.
INNER_TOL_FACTOR = 0.1

#: Multiples of mean |off-diagonal S| searched when the glasso penalty is tuned.
RHO_GRID = (0.01, 0.025, 0.05, 0.1, 0.25, 0.5)


@dataclass(frozen=True)
class PrecisionEstimate:
    """An estimated precision matrix together with its symmetric square root."""

    omega: np.ndarray
    omega_half: np.ndarray
    method: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_omega(cls, omega, method: str, params: dict | None = None) -> "PrecisionEstimate":
        eig = sym_eigen(omega)
        if eig.values[0] <= 0:
            raise NotPositiveDefinite(f"{method} estimate has no positive eigenvalue")
        floor = EPS_PD * eig.values[0]
        values = np.maximum(eig.values, floor)
        half = (eig.vectors * np.sqrt(values)) @ eig.vectors.T
        if values[-1] == eig.values[-1]:
            # nothing floored: keep the input itself
            om = as_symmetric(omega)
        else:
            om = (eig.vectors * values) @ eig.vectors.T
        return cls(0.5 * (om + om.T), 0.5 * (half + half.T), method, dict(params or {}))

    @property
    def dim(self) -> int:
        return self.omega.shape[0]


@dataclass
class GlassoConfig:
    """Graphical lasso settings.

    ``rho=None`` selects the penalty by cross-validated Gaussian likelihood
    over :data:`RHO_GRID`; ``tol=None`` means ``1e-5 * mean(diag S)``.
    """

    rho: float | None = None
    max_outer_iters: int = 200
    tol: float | None = None
    penalize_diagonal: bool = False
    cv_folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.rho is not None and not self.rho > 0:
            raise InvalidInput("glasso penalty rho must be positive")
        if self.tol is not None and not self.tol > 0:
            raise InvalidInput("glasso tol must be positive")


@dataclass
class LamConfig:
    split_fraction: float = 0.5
    num_splits: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.split_fraction < 1:
            raise InvalidInput("split_fraction must lie in (0, 1)")
        if self.num_splits < 1:
            raise InvalidInput("num_splits must be positive")


def _as_data(data) -> np.ndarray:
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ShapeMismatch(f"data must be 2-d, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("data has non-finite entries")
    return x


def sample_covariance(data) -> np.ndarray:
    """Unbiased sample covariance (divisor n - 1) of the rows of ``data``."""
    x = _as_data(data)
    n = x.shape[0]
    if n < 2:
        raise InsufficientData(f"sample covariance needs n >= 2, got {n}")
    xc = x - x.mean(axis=0)
    s = xc.T @ xc / (n - 1)
    return 0.5 * (s + s.T)


def estimate_ir(data) -> PrecisionEstimate:
    """Diagonal precision from per-feature inverse sample variances."""
    x = _as_data(data)
    if x.shape[0] < 2:
        raise InsufficientData(f"need n >= 2, got {x.shape[0]}")
    var = x.var(axis=0, ddof=1)
    var = np.maximum(var, EPS_PD)
    omega = np.diag(1.0 / var)
    return PrecisionEstimate(omega, np.diag(1.0 / np.sqrt(var)), IR, {})


def oracle_precision(omega_true) -> PrecisionEstimate:
    om = as_symmetric(omega_true)
    if not is_pd(om, 1e-12):
        raise NotPositiveDefinite("oracle precision is not positive definite")
    return PrecisionEstimate.from_omega(om, ORACLE)


def pool_precisions(est1: PrecisionEstimate, n1: int, est2: PrecisionEstimate, n2: int) -> PrecisionEstimate:
    """Combine two group estimates with weights ``n_g - 1``."""
    if est1.omega.shape != est2.omega.shape:
        raise ShapeMismatch(f"cannot pool {est1.omega.shape} with {est2.omega.shape}")
    if est1.method != est2.method:
        raise InvalidInput(f"cannot pool {est1.method} with {est2.method}")
    if n1 < 2 or n2 < 2:
        raise InsufficientData("pooling needs n1, n2 >= 2")
    w1, w2 = n1 - 1, n2 - 1
    omega = (w1 * est1.omega + w2 * est2.omega) / (w1 + w2)
    params = dict(est1.params)
    params.update({"n1": n1, "n2": n2})
    if est1.method == IR:
        # stays diagonal, so the square root is elementwise
        d = np.diag(omega)
        return PrecisionEstimate(omega, np.diag(np.sqrt(d)), IR, params)
    return PrecisionEstimate.from_omega(omega, est1.method, params)


# ---------------------------------------------------------------------------
# LAM split-eigen estimator


def lam_covariance(s1, s2) -> np.ndarray:
    """Rotate the diagonal of ``s2`` in the eigenbasis of ``s1`` back to a covariance."""
    vecs = sym_eigen(s1).vectors
    d = np.einsum("ij,ik,kj->j", vecs, np.asarray(s2, dtype=float), vecs)
    sigma = (vecs * d) @ vecs.T
    return 0.5 * (sigma + sigma.T)


def lam_sigma(data, cfg: LamConfig | None = None) -> np.ndarray:
    cfg = cfg or LamConfig()
    x = _as_data(data)
    n = x.shape[0]
    if n < 4:
        raise InsufficientData(f"LAM needs n >= 4, got {n}")
    n1 = int(math.floor(cfg.split_fraction * n))
    if n1 < 2 or n - n1 < 2:
        raise InsufficientData(f"split of n={n} at {cfg.split_fraction} leaves fewer than 2 rows")
    rng = np.random.default_rng(cfg.seed)
    sigma = np.zeros((x.shape[1], x.shape[1]))
    for _ in range(cfg.num_splits):
        perm = rng.permutation(n)
        first, second = x[perm[:n1]], x[perm[n1:]]
        sigma += lam_covariance(sample_covariance(first), sample_covariance(second))
    return sigma / cfg.num_splits


def estimate_lam(data, cfg: LamConfig | None = None) -> PrecisionEstimate:
    cfg = cfg or LamConfig()
    sigma = lam_sigma(data, cfg)
    omega = pd_power(sigma, -1.0)
    params = {"split_fraction": cfg.split_fraction, "num_splits": cfg.num_splits, "seed": cfg.seed}
    return PrecisionEstimate.from_omega(omega, LAM, params)


# ---------------------------------------------------------------------------
# graphical lasso


@numba.njit(cache=True)
def _glasso_sweep(S, W, B, P, inner_max, inner_tol):
    """One pass of block coordinate descent over all columns.

    ``B[:, j]`` holds the lasso coefficients of column j (``B[j, j]`` unused).
    Each column solves min 0.5 b'W11 b - s12'b + sum P_kj |b_k| by coordinate
    descent and then sets w12 = W11 b.
    """
    p = S.shape[0]
    r = np.empty(p)
    for j in range(p):
        # residual r = s12 - W11 b
        for k in range(p):
            r[k] = S[k, j]
        for l in range(p):
            bl = B[l, j]
            if l != j and bl != 0.0:
                for k in range(p):
                    r[k] -= W[l, k] * bl
        for _ in range(inner_max):
            max_delta = 0.0
            for k in range(p):
                if k == j:
                    continue
                old = B[k, j]
                wkk = W[k, k]
                z = r[k] + wkk * old
                lam = P[k, j]
                if z > lam:
                    new = (z - lam) / wkk
                elif z < -lam:
                    new = (z + lam) / wkk
                else:
                    new = 0.0
                if new != old:
                    delta = new - old
                    B[k, j] = new
                    for l in range(p):
                        r[l] -= W[k, l] * delta
                    ad = abs(delta) * wkk
                    if ad > max_delta:
                        max_delta = ad
            if max_delta < inner_tol:
                break
        for k in range(p):
            if k != j:
                w = S[k, j] - r[k]
                W[k, j] = w
                W[j, k] = w


def _theta_from_dual(W, B):
    p = W.shape[0]
    theta = np.empty_like(W)
    for j in range(p):
        b = B[:, j].copy()
        b[j] = 0.0
        denom = W[j, j] - W[:, j] @ b
        tjj = 1.0 / denom
        theta[:, j] = -b * tjj
        theta[j, j] = tjj
    return 0.5 * (theta + theta.T)


def _logdet(m) -> float:
    if not np.all(np.isfinite(m)):
        return -np.inf
    sign, val = np.linalg.slogdet(m)
    return float(val) if sign > 0 else -np.inf


def glasso_objective(S, theta, rho, penalize_diagonal=False) -> float:
    """log det(theta) - tr(S theta) - rho * ||theta||_1 (off-diagonal by default)."""
    S = np.asarray(S, dtype=float)
    theta = np.asarray(theta, dtype=float)
    pen = np.abs(theta).sum()
    if not penalize_diagonal:
        pen -= np.abs(np.diag(theta)).sum()
    return _logdet(theta) - float(np.sum(S * theta)) - rho * pen


@dataclass
class GlassoResult:
    theta: np.ndarray
    covariance: np.ndarray
    n_iter: int
    dual_history: list
    residual: float


def glasso(S, rho: float, *, max_outer_iters: int = 200, tol: float | None = None,
           penalize_diagonal: bool = False, warm_start: tuple | None = None) -> GlassoResult:
    """Solve max log det T - tr(S T) - rho ||T||_1 by block coordinate descent.

    Works on the dual: the working covariance W is updated one column at a
    time, which never decreases log det W once W is feasible. Convergence is
    declared when the mean absolute change of W over a sweep drops below
    ``tol``.

    Raises
    ------
    ConvergenceFailure
        If ``max_outer_iters`` sweeps do not reach ``tol``.
    """
    S = as_symmetric(S)
    p = S.shape[0]
    if not rho > 0:
        raise InvalidInput("rho must be positive")
    diag = np.diag(S).copy()
    diag = np.maximum(diag, EPS_PD * max(diag.max(), EPS_PD))
    S = S.copy()
    np.fill_diagonal(S, diag)
    if tol is None:
        tol = 1e-5 * float(diag.mean())
    P = np.full((p, p), float(rho))
    np.fill_diagonal(P, 0.0)

    if warm_start is not None:
        W = np.array(warm_start[0], dtype=float, copy=True)
        B = np.array(warm_start[1], dtype=float, copy=True)
    else:
        W = 0.95 * S
        B = np.zeros((p, p))
    np.fill_diagonal(W, diag + (rho if penalize_diagonal else 0.0))
    inner_tol = INNER_TOL_FACTOR * tol

    if p == 1:
        theta = np.array([[1.0 / W[0, 0]]])
        return GlassoResult(theta, W, 0, [_logdet(W)], 0.0)

    history = []
    residual = np.inf
    for it in range(1, max_outer_iters + 1):
        W_old = W.copy()
        _glasso_sweep(S, W, B, P, 1000, inner_tol)
        residual = float(np.abs(W - W_old).mean())
        history.append(_logdet(W))
        if not np.isfinite(residual):
            raise ConvergenceFailure(f"glasso diverged at sweep {it}", last_iterate=W_old,
                                     residual=residual)
        if residual < tol:
            theta = _theta_from_dual(W, B)
            return GlassoResult(theta, W, it, history, residual)
    raise ConvergenceFailure(
        f"glasso did not converge in {max_outer_iters} sweeps (residual {residual:.3e})",
        last_iterate=_theta_from_dual(W, B),
        residual=residual,
    )


def glasso_kkt_residuals(S, theta, rho, penalize_diagonal=False) -> tuple[float, float]:
    """Worst violations of the stationarity conditions at ``theta``.

    Returns ``(box, active)``: the largest excess of ``|W_ij - S_ij|`` over
    ``rho`` on penalised entries, and the largest ``|W_ij - S_ij - rho sign
    theta_ij|`` over penalised nonzero entries, where ``W = inv(theta)``.
    """
    S = np.asarray(S, dtype=float)
    theta = np.asarray(theta, dtype=float)
    W = np.linalg.inv(theta)
    G = W - S
    mask = np.ones_like(S, dtype=bool)
    if not penalize_diagonal:
        np.fill_diagonal(mask, False)
        diag_res = float(np.abs(np.diag(G)).max())
    else:
        diag_res = 0.0
    box = float(max(np.max(np.abs(G[mask]) - rho, initial=0.0), 0.0))
    active = mask & (theta != 0)
    act = float(np.max(np.abs(G[active] - rho * np.sign(theta[active])), initial=0.0))
    return box, max(act, diag_res)


def _fold_ids(n: int, folds: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    ids = np.arange(n) % folds
    rng.shuffle(ids)
    return ids


def select_glasso_rho(data, grid=RHO_GRID, folds: int = 5, seed: int = 0,
                      max_outer_iters: int = 200, penalize_diagonal: bool = False) -> float:
    """Pick the penalty maximising held-out Gaussian log-likelihood.

    The candidates are ``grid`` multiples of the mean absolute off-diagonal
    entry of the full-data sample covariance. Fits along each fold run from
    the largest penalty down with warm starts.
    """
    x = _as_data(data)
    n, p = x.shape
    S = sample_covariance(x)
    if p == 1:
        return 1.0
    off = np.abs(S[~np.eye(p, dtype=bool)]).mean()
    off = off if off > 0 else 1.0
    rhos = sorted((g * off for g in grid), reverse=True)
    folds = max(2, min(folds, n // 2))
    ids = _fold_ids(n, folds, seed)
    scores = np.zeros(len(rhos))
    for f in range(folds):
        train, test = x[ids != f], x[ids == f]
        s_tr = sample_covariance(train)
        xt = test - train.mean(axis=0)
        s_te = xt.T @ xt / len(test)
        warm = None
        for i, rho in enumerate(rhos):
            if not np.isfinite(scores[i]):
                continue
            try:
                res = glasso(s_tr, rho, max_outer_iters=max_outer_iters,
                             penalize_diagonal=penalize_diagonal, warm_start=warm)
            except ConvergenceFailure:
                # smaller penalties only get harder; drop them for this fold onwards
                scores[i:] = -np.inf
                break
            theta = res.theta
            if not np.all(np.isfinite(theta)):
                scores[i:] = -np.inf
                break
            warm = (res.covariance, _b_from_theta(theta))
            # a non-PD estimate has no held-out likelihood
            scores[i] += _logdet(theta) - float(np.sum(s_te * theta))
    if not np.any(np.isfinite(scores)):
        return float(rhos[0])
    return float(rhos[int(np.argmax(scores))])


def _b_from_theta(theta):
    d = np.diag(theta)
    B = -theta / d[None, :]
    np.fill_diagonal(B, 0.0)
    return B


def estimate_glasso(data, cfg: GlassoConfig | None = None) -> PrecisionEstimate:
    cfg = cfg or GlassoConfig()
    x = _as_data(data)
    if x.shape[0] < 2:
        raise InsufficientData(f"need n >= 2, got {x.shape[0]}")
    S = sample_covariance(x)
    rho = cfg.rho
    if rho is None:
        rho = select_glasso_rho(x, folds=cfg.cv_folds, seed=cfg.seed,
                                max_outer_iters=cfg.max_outer_iters,
                                penalize_diagonal=cfg.penalize_diagonal)
    res = glasso(S, rho, max_outer_iters=cfg.max_outer_iters, tol=cfg.tol,
                 penalize_diagonal=cfg.penalize_diagonal)
    params = {"rho": rho, "n_iter": res.n_iter, "residual": res.residual}
    return PrecisionEstimate.from_omega(res.theta, GLASSO, params)
