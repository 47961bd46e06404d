"""Simulation lab: covariance families, mean constructions, replicated error tables."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from .classifier import (
    DIFF,
    PERGROUP,
    LabeledDataset,
    fit_precision,
    labels_from_scores,
    rule_from_means,
    whiten,
)
from .exceptions import ConvergenceFailure, InvalidInput, NotPositiveDefinite
from .linalg import as_symmetric, is_pd, pd_power
from .precision import (
    GLASSO,
    IR,
    LAM,
    ORACLE,
    PRECISION_METHODS,
    GlassoConfig,
    LamConfig,
    PrecisionEstimate,
    select_glasso_rho,
)
from .shrinkage import HARD, NPEB, NPMLE, SM

AR1_PREC = "AR1_PREC"
BLOCKED_AR1_PREC = "BLOCKED_AR1_PREC"
EXCHANGEABLE_PREC = "EXCHANGEABLE_PREC"
TOEPLITZ_COV = "TOEPLITZ_COV"
BANDED_COV = "BANDED_COV"
FAMILIES = (AR1_PREC, BLOCKED_AR1_PREC, EXCHANGEABLE_PREC, TOEPLITZ_COV, BANDED_COV)

RAW = "RAW"
S_SCALE = "S_SCALE"

#: Table rows in display order: (label, mean method, variant).
TABLE_ROWS = (
    ("NPEB1", NPEB, DIFF),
    ("NPEB2", NPEB, PERGROUP),
    ("NPMLE1", NPMLE, DIFF),
    ("NPMLE2", NPMLE, PERGROUP),
    ("SM", SM, DIFF),
)
HARD_ROWS = (("HARD1", HARD, DIFF), ("HARD2", HARD, PERGROUP))
COLUMN_LABELS = {ORACLE: "Oracle.prec", GLASSO: "glasso", LAM: "LAM", IR: "IR"}
TABLE_COLUMNS = (ORACLE, GLASSO, LAM, IR)


@dataclass(frozen=True)
class CovarianceSpec:
    family: str
    p: int
    rho: float = 0.0
    q: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInput(f"unknown covariance family {self.family!r}")
        if self.p < 1:
            raise InvalidInput("p must be positive")
        if self.family in (AR1_PREC, BLOCKED_AR1_PREC) and not abs(self.rho) < 1:
            raise InvalidInput("AR(1) families need |rho| < 1")
        if self.family == BLOCKED_AR1_PREC and not (self.q is not None and 1 <= self.q <= self.p):
            raise InvalidInput("blocked AR(1) needs 1 <= q <= p")


@dataclass(frozen=True)
class MeanSpec:
    delta: float
    l: int
    scale: str = RAW

    def __post_init__(self):
        if self.scale not in (RAW, S_SCALE):
            raise InvalidInput(f"unknown mean scale {self.scale!r}")
        if self.l < 0:
            raise InvalidInput("l must be non-negative")
        if not math.isfinite(self.delta):
            raise InvalidInput("delta must be finite")


@dataclass(frozen=True)
class SimSetting:
    name: str
    cov: CovarianceSpec
    mean: MeanSpec
    n_train: int = 50
    n_test: int = 250
    replications: int = 100
    seed: int = 0

    @property
    def p(self) -> int:
        return self.cov.p

    def replace(self, **changes) -> "SimSetting":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return SimSetting(**d)


def _setting(name, family, rho, q, delta, l, scale, p=500):
    return SimSetting(name, CovarianceSpec(family, p, rho, q), MeanSpec(delta, l, scale))


#: The ten experiment configurations, keyed "1-1" .. "5-2".
#: 3-2 uses delta = 0.7: that value reproduces the reported Oracle.prec
#: errors for that setting, the printed 0.07 does not.
SETTINGS = {
    "1-1": _setting("1-1", AR1_PREC, 0.8, None, 3.0, 20, S_SCALE),
    "1-2": _setting("1-2", AR1_PREC, 0.8, None, 0.4, 400, S_SCALE),
    "2-1": _setting("2-1", BLOCKED_AR1_PREC, 0.9, 50, 3.0, 20, S_SCALE),
    "2-2": _setting("2-2", BLOCKED_AR1_PREC, 0.9, 50, 0.15, 400, S_SCALE),
    "3-1": _setting("3-1", EXCHANGEABLE_PREC, 0.3, None, 0.7, 20, RAW),
    "3-2": _setting("3-2", EXCHANGEABLE_PREC, 0.3, None, 0.7, 20, S_SCALE),
    "4-1": _setting("4-1", TOEPLITZ_COV, 0.0, None, 1.0, 20, RAW),
    "4-2": _setting("4-2", TOEPLITZ_COV, 0.0, None, 0.4, 20, S_SCALE),
    "5-1": _setting("5-1", BANDED_COV, 0.0, None, 0.7, 20, RAW),
    "5-2": _setting("5-2", BANDED_COV, 0.0, None, 0.6, 20, S_SCALE),
}


def get_setting(name: str) -> SimSetting:
    try:
        return SETTINGS[name]
    except KeyError:
        raise InvalidInput(f"unknown setting {name!r}; expected one of {sorted(SETTINGS)}") from None


# ---------------------------------------------------------------------------
# population construction


def _ar1(p, rho):
    i = np.arange(p)
    return rho ** np.abs(i[:, None] - i[None, :]).astype(float)


def build_covariance(spec: CovarianceSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(sigma, omega)`` for a covariance family; the other is inverted."""
    p = spec.p
    lag = np.abs(np.arange(p)[:, None] - np.arange(p)[None, :]).astype(float)
    if spec.family == AR1_PREC:
        omega = _ar1(p, spec.rho)
    elif spec.family == BLOCKED_AR1_PREC:
        omega = np.eye(p)
        omega[: spec.q, : spec.q] = _ar1(spec.q, spec.rho)
    elif spec.family == EXCHANGEABLE_PREC:
        omega = (1.0 - spec.rho) * np.eye(p) + spec.rho * np.ones((p, p))
    elif spec.family == TOEPLITZ_COV:
        sigma = 1.0 / (lag + 1.0)
    else:
        sigma = np.maximum(1.0 - lag / 10.0, 0.0)

    if spec.family in (TOEPLITZ_COV, BANDED_COV):
        if not is_pd(sigma, 1e-12):
            raise NotPositiveDefinite(f"{spec.family} covariance is not positive definite")
        return sigma, pd_power(sigma, -1.0)
    if not is_pd(omega, 1e-12):
        raise NotPositiveDefinite(f"{spec.family} precision with rho={spec.rho} is not positive definite")
    return pd_power(omega, -1.0), omega


def build_means(spec: MeanSpec, sigma, sigma_half=None) -> tuple[np.ndarray, np.ndarray]:
    """``mu1 = 0`` and ``mu2`` with ``l`` leading entries equal to ``delta``.

    With ``S_SCALE`` the pattern is placed on the whitened scale, i.e.
    ``mu2 = Sigma^{1/2} pattern`` so that ``Sigma^{-1/2} mu2`` is the pattern.
    """
    sigma = as_symmetric(sigma)
    p = sigma.shape[0]
    if spec.l > p:
        raise InvalidInput(f"l={spec.l} exceeds p={p}")
    pattern = np.zeros(p)
    pattern[: spec.l] = spec.delta
    if spec.scale == RAW:
        return np.zeros(p), pattern
    half = pd_power(sigma, 0.5) if sigma_half is None else sigma_half
    return np.zeros(p), half @ pattern


def sample_mvn(mu, sigma, n: int, seed=None, sigma_half=None) -> np.ndarray:
    """``n`` rows from ``N(mu, sigma)`` via the symmetric square root of ``sigma``.

    ``seed`` may be an int, a SeedSequence or a Generator.
    """
    mu = np.asarray(mu, dtype=float)
    if sigma_half is None:
        sigma = as_symmetric(sigma)
        if np.linalg.eigvalsh(sigma).max() <= 0:
            raise NotPositiveDefinite("sigma has no positive eigenvalue")
        sigma_half = pd_power(sigma, 0.5)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = rng.standard_normal((n, mu.size))
    return z @ sigma_half + mu


# ---------------------------------------------------------------------------
# replications


@dataclass
class Population:
    """Everything about a setting that does not change across replications."""

    setting: SimSetting
    sigma: np.ndarray
    omega: np.ndarray
    sigma_half: np.ndarray
    mu1: np.ndarray
    mu2: np.ndarray
    oracle: PrecisionEstimate

    @classmethod
    def build(cls, setting: SimSetting) -> "Population":
        sigma, omega = build_covariance(setting.cov)
        sigma_half = pd_power(sigma, 0.5)
        mu1, mu2 = build_means(setting.mean, sigma, sigma_half)
        oracle = PrecisionEstimate.from_omega(omega, ORACLE)
        return cls(setting, sigma, omega, sigma_half, mu1, mu2, oracle)


@dataclass
class MethodGrid:
    """Which precision estimators and table rows a run evaluates."""

    precision_methods: tuple = TABLE_COLUMNS
    rows: tuple = TABLE_ROWS
    glasso: GlassoConfig = field(default_factory=lambda: GlassoConfig(rho=None))
    lam: LamConfig = field(default_factory=LamConfig)

    def cells(self):
        for label, mean_method, variant in self.rows:
            for prec in self.precision_methods:
                yield label, mean_method, variant, prec


def replication_seed(master_seed: int, rep_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(rep_index)])


def _child_seed(master_seed: int, rep_index: int, k: int) -> int:
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(rep_index), 1 + int(k)])
    return int(ss.generate_state(1)[0])


def draw_replication(pop: Population, rep_index: int):
    s = pop.setting
    ss = replication_seed(s.seed, rep_index)
    rng = np.random.default_rng(ss)
    p = s.p
    x1 = sample_mvn(pop.mu1, None, s.n_train, rng, pop.sigma_half)
    x2 = sample_mvn(pop.mu2, None, s.n_train, rng, pop.sigma_half)
    t1 = sample_mvn(pop.mu1, None, s.n_test, rng, pop.sigma_half)
    t2 = sample_mvn(pop.mu2, None, s.n_test, rng, pop.sigma_half)
    train = LabeledDataset(np.vstack([x1, x2]), np.repeat([1, 2], s.n_train))
    test = LabeledDataset(np.vstack([t1, t2]), np.repeat([1, 2], s.n_test))
    assert train.p == p
    return train, test, ss


def _glasso_for_rep(cfg: GlassoConfig, seed: int) -> GlassoConfig:
    return GlassoConfig(cfg.rho, cfg.max_outer_iters, cfg.tol, cfg.penalize_diagonal,
                        cfg.cv_folds, seed)


def run_replication(pop: Population, grid: MethodGrid, rep_index: int) -> dict:
    """Test error of every cell on one fresh train/test draw.

    Returns
    -------
    dict
        ``(row_label, precision_method) -> error`` (NaN where the precision
        estimator failed).
    """
    train, test, _ = draw_replication(pop, rep_index)
    out = {}
    for method in grid.precision_methods:
        # keyed by method, not column position, so subsets of columns agree
        seed = _child_seed(pop.setting.seed, rep_index, PRECISION_METHODS.index(method))
        try:
            if method == ORACLE:
                prec = pop.oracle
            elif method == GLASSO:
                prec = fit_precision(train, GLASSO, _glasso_for_rep(grid.glasso, seed))
            elif method == LAM:
                cfg = grid.lam
                prec = fit_precision(train, LAM, LamConfig(cfg.split_fraction, cfg.num_splits, seed))
            else:
                prec = fit_precision(train, method)
        except (ConvergenceFailure, NotPositiveDefinite, np.linalg.LinAlgError):
            for label, _, _ in grid.rows:
                out[(label, method)] = float("nan")
            continue
        z1 = whiten(train.group(1), prec).mean(axis=0)
        z2 = whiten(train.group(2), prec).mean(axis=0)
        zt = whiten(test.features, prec)
        for label, mean_method, variant in grid.rows:
            rule = rule_from_means(z1, z2, train.n1, train.n2, prec.omega_half, mean_method,
                                   variant, method)
            delta = zt @ rule.weights + rule.intercept + rule.prior_term
            pred = labels_from_scores(delta, rule.n1, rule.n2)
            out[(label, method)] = float(np.mean(pred != test.labels))
    return out


# ---------------------------------------------------------------------------
# aggregation


@dataclass
class CellSummary:
    mean: float
    sd: float
    reps: int
    failures: int = 0


@dataclass
class ExperimentTable:
    setting: str
    cells: dict
    rows: tuple = TABLE_ROWS
    columns: tuple = TABLE_COLUMNS
    elapsed_s: float = 0.0
    params: dict = field(default_factory=dict)

    def __getitem__(self, key) -> CellSummary:
        return self.cells[key]

    def error(self, row_label: str, precision_method: str) -> float:
        return self.cells[(row_label, precision_method)].mean

    def to_long_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mean_method", "precision_method", "variant", "mean_error", "sd_error", "reps"])
        for label, mean_method, variant in self.rows:
            for prec in self.columns:
                c = self.cells[(label, prec)]
                w.writerow([mean_method, prec, variant, _fmt(c.mean), _fmt(c.sd), c.reps])
        return buf.getvalue()

    def to_table_csv(self) -> str:
        """Rows are mean methods, columns precision methods, cells ``mean (sd)``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([""] + [COLUMN_LABELS.get(c, c) for c in self.columns])
        for label, _, _ in self.rows:
            cells = []
            for prec in self.columns:
                c = self.cells[(label, prec)]
                cells.append(f"{c.mean:.4f} ({c.sd:.4f})")
            w.writerow([label] + cells)
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "setting": self.setting,
            "rows": [r[0] for r in self.rows],
            "columns": list(self.columns),
            "params": self.params,
            "cells": [
                {"row": label, "mean_method": mm, "variant": v, "precision_method": prec,
                 **asdict(self.cells[(label, prec)])}
                for label, mm, v in self.rows for prec in self.columns
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True)


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else format(x, ".10g")


def summarize(errors) -> CellSummary:
    """Mean and sample sd with exactly rounded sums (order independent)."""
    vals = [e for e in errors if not math.isnan(e)]
    failures = len(errors) - len(vals)
    n = len(vals)
    if n == 0:
        return CellSummary(float("nan"), float("nan"), 0, failures)
    mean = math.fsum(vals) / n
    sd = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (n - 1)) if n > 1 else 0.0
    return CellSummary(mean, sd, n, failures)


def pilot_glasso_rho(pop: Population, cfg: GlassoConfig) -> float:
    """Cross-validate the glasso penalty once, on replication 0's training data.

    Rows are centred within their group so both groups share one selection.
    """
    train, _, _ = draw_replication(pop, 0)
    x = np.vstack([train.group(g) - train.group(g).mean(axis=0) for g in (1, 2)])
    return select_glasso_rho(x, folds=cfg.cv_folds, seed=cfg.seed,
                             max_outer_iters=cfg.max_outer_iters,
                             penalize_diagonal=cfg.penalize_diagonal)


def run_setting(setting: SimSetting, grid: MethodGrid | None = None, n_jobs: int = 1,
                rep_indices=None) -> ExperimentTable:
    """Replicate a setting and summarise each cell's test error.

    An unset glasso penalty is chosen once per setting by
    :func:`pilot_glasso_rho` and then held fixed across replications.
    """
    grid = grid or MethodGrid()
    if setting.replications < 2:
        raise InvalidInput("run_setting needs at least 2 replications")
    t0 = time.perf_counter()
    pop = Population.build(setting)
    if GLASSO in grid.precision_methods and grid.glasso.rho is None:
        g = grid.glasso
        rho = pilot_glasso_rho(pop, g)
        grid = replace(grid, glasso=GlassoConfig(rho, g.max_outer_iters, g.tol,
                                                 g.penalize_diagonal, g.cv_folds, g.seed))
    reps = list(range(setting.replications)) if rep_indices is None else list(rep_indices)
    results = Parallel(n_jobs=n_jobs)(delayed(run_replication)(pop, grid, r) for r in reps)
    cells = {}
    for label, _, _, prec in grid.cells():
        cells[(label, prec)] = summarize([res[(label, prec)] for res in results])
    params = {"replications": len(reps), "seed": setting.seed}
    if GLASSO in grid.precision_methods:
        params["glasso_rho"] = grid.glasso.rho
    return ExperimentTable(setting.name, cells, tuple(grid.rows), tuple(grid.precision_methods),
                           time.perf_counter() - t0, params)
