"""Two-group linear discriminant rules built on a whitening precision estimate.

A rule scores a new observation ``x`` as::

    delta(x) = w' (Omega^{1/2} x) + intercept + log(n1 / n2)

and assigns group 1 when ``delta > 0``. ``w`` is an estimate of the
whitened mean difference ``mu1* - mu2*``: either shrunk in one go
(``DIFF``) or as the difference of separately shrunk group means
(``PERGROUP``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import InsufficientData, InvalidInput, ShapeMismatch
from .precision import (
    GLASSO,
    IR,
    LAM,
    ORACLE,
    GlassoConfig,
    LamConfig,
    PrecisionEstimate,
    estimate_glasso,
    estimate_ir,
    estimate_lam,
    oracle_precision,
    pool_precisions,
)
from .shrinkage import MEAN_METHODS, SM, shrink

DIFF = "DIFF"
PERGROUP = "PERGROUP"
VARIANTS = (DIFF, PERGROUP)


@dataclass
class LabeledDataset:
    """Feature matrix with labels coded 1 and 2."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim == 1:
            self.features = self.features[:, None]
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ShapeMismatch("features must be 2-d and labels 1-d")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ShapeMismatch(
                f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels"
            )
        if not np.all(np.isin(self.labels, (1, 2))):
            raise InvalidInput("labels must be 1 or 2")

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def n1(self) -> int:
        return int(np.sum(self.labels == 1))

    @property
    def n2(self) -> int:
        return int(np.sum(self.labels == 2))

    def group(self, g: int) -> np.ndarray:
        return self.features[self.labels == g]

    def drop(self, i: int) -> "LabeledDataset":
        keep = np.ones(self.n, dtype=bool)
        keep[i] = False
        return LabeledDataset(self.features[keep], self.labels[keep])


@dataclass
class DiscriminantRule:
    weights: np.ndarray
    intercept: float
    prior_term: float
    whitener: np.ndarray
    variant: str
    mean_method: str
    precision_method: str
    n1: int
    n2: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def coef(self) -> np.ndarray:
        """Coefficients on the raw feature scale, ``Omega^{1/2} w``."""
        return self.whitener @ self.weights


@dataclass
class PredictionReport:
    predicted: np.ndarray
    truth: np.ndarray
    error_rate: float
    confusion: np.ndarray

    @property
    def errors(self) -> int:
        return int(np.sum(self.predicted != self.truth))

    @property
    def n(self) -> int:
        return int(self.truth.size)


# ---------------------------------------------------------------------------
# precision handling


def _group_seed(seed: int, g: int) -> int:
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, g]).generate_state(1)[0])


def fit_precision(train: LabeledDataset, method: str, config=None, omega_true=None) -> PrecisionEstimate:
    """Estimate the precision in each group and pool with weights ``n_g - 1``.

    ``config`` is a :class:`GlassoConfig` or :class:`LamConfig` for those
    methods; ``omega_true`` is required for ``ORACLE``.
    """
    method = method.upper()
    if method == ORACLE:
        if omega_true is None:
            raise InvalidInput("ORACLE precision needs omega_true")
        return oracle_precision(omega_true)
    if train.n1 < 2 or train.n2 < 2:
        raise InsufficientData(f"each group needs >= 2 rows, got n1={train.n1}, n2={train.n2}")
    ests = []
    for g in (1, 2):
        x = train.group(g)
        if method == IR:
            ests.append(estimate_ir(x))
        elif method == GLASSO:
            cfg = config if config is not None else GlassoConfig()
            ests.append(estimate_glasso(x, cfg))
        elif method == LAM:
            cfg = config if config is not None else LamConfig()
            cfg = LamConfig(cfg.split_fraction, cfg.num_splits, _group_seed(cfg.seed, g))
            ests.append(estimate_lam(x, cfg))
        else:
            raise InvalidInput(f"unknown precision method {method!r}")
    return pool_precisions(ests[0], train.n1, ests[1], train.n2)


def whiten(data, prec: PrecisionEstimate) -> np.ndarray:
    """Map each row ``x`` to ``Omega^{1/2} x``."""
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != prec.dim:
        raise ShapeMismatch(f"data has {x.shape[1]} features, precision is {prec.dim}x{prec.dim}")
    # omega_half is symmetric, so row-wise Omega^{1/2} x is X @ Omega^{1/2}
    return x @ prec.omega_half


# ---------------------------------------------------------------------------
# rule construction


def _whitened_means(train: LabeledDataset, prec: PrecisionEstimate):
    if train.n1 < 2 or train.n2 < 2:
        raise InsufficientData(f"each group needs >= 2 rows, got n1={train.n1}, n2={train.n2}")
    if train.p != prec.dim:
        raise ShapeMismatch(f"data has {train.p} features, precision is {prec.dim}x{prec.dim}")
    z1 = whiten(train.group(1), prec).mean(axis=0)
    z2 = whiten(train.group(2), prec).mean(axis=0)
    return z1, z2


def _check_mean_method(mean_method: str) -> str:
    mm = mean_method.upper()
    if mm not in MEAN_METHODS:
        raise InvalidInput(f"unknown mean method {mean_method!r}; expected one of {MEAN_METHODS}")
    return mm


def rule_from_means(z1, z2, n1, n2, whitener, mean_method=SM, variant=DIFF,
                    precision_method="", **shrink_kwargs) -> DiscriminantRule:
    """Build a rule from whitened group means.

    ``DIFF`` shrinks ``z1 - z2`` with noise sd ``sqrt(1/n1 + 1/n2)`` and
    centres at the plain midpoint ``(z1 + z2) / 2``; ``PERGROUP`` shrinks
    each mean with sd ``1/sqrt(n_g)`` and centres at the shrunk midpoint.
    """
    mm = _check_mean_method(mean_method)
    variant = variant.upper()
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    diag = {}
    if variant == DIFF:
        res = shrink(z1 - z2, math.sqrt(1.0 / n1 + 1.0 / n2), mm, **shrink_kwargs)
        weights = res.estimates
        midpoint = 0.5 * (z1 + z2)
        diag.update(res.diagnostics)
    elif variant == PERGROUP:
        r1 = shrink(z1, 1.0 / math.sqrt(n1), mm, **shrink_kwargs)
        r2 = shrink(z2, 1.0 / math.sqrt(n2), mm, **shrink_kwargs)
        weights = r1.estimates - r2.estimates
        midpoint = 0.5 * (r1.estimates + r2.estimates)
        diag.update({"group1": r1.diagnostics, "group2": r2.diagnostics})
    else:
        raise InvalidInput(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return DiscriminantRule(
        weights=weights,
        intercept=-float(weights @ midpoint),
        prior_term=math.log(n1 / n2),
        whitener=np.asarray(whitener),
        variant=variant,
        mean_method=mm,
        precision_method=precision_method,
        n1=int(n1),
        n2=int(n2),
        diagnostics=diag,
    )


def fit_rule_diff(train: LabeledDataset, prec: PrecisionEstimate, mean_method: str = SM,
                  **shrink_kwargs) -> DiscriminantRule:
    z1, z2 = _whitened_means(train, prec)
    return rule_from_means(z1, z2, train.n1, train.n2, prec.omega_half, mean_method, DIFF,
                           prec.method, **shrink_kwargs)


def fit_rule_pergroup(train: LabeledDataset, prec: PrecisionEstimate, mean_method: str = SM,
                      **shrink_kwargs) -> DiscriminantRule:
    z1, z2 = _whitened_means(train, prec)
    return rule_from_means(z1, z2, train.n1, train.n2, prec.omega_half, mean_method, PERGROUP,
                           prec.method, **shrink_kwargs)


def fit_rule(train, prec, mean_method=SM, variant=DIFF, **shrink_kwargs) -> DiscriminantRule:
    if variant.upper() == PERGROUP:
        return fit_rule_pergroup(train, prec, mean_method, **shrink_kwargs)
    if variant.upper() == DIFF:
        return fit_rule_diff(train, prec, mean_method, **shrink_kwargs)
    raise InvalidInput(f"unknown variant {variant!r}; expected one of {VARIANTS}")


# ---------------------------------------------------------------------------
# scoring


def score(rule: DiscriminantRule, x) -> np.ndarray | float:
    """Discriminant value for one observation or for each row of a matrix."""
    a = np.asarray(x, dtype=float)
    single = a.ndim == 1
    a2 = a[None, :] if single else a
    if a2.ndim != 2 or a2.shape[1] != rule.weights.size:
        raise ShapeMismatch(f"expected {rule.weights.size} features, got shape {a.shape}")
    out = (a2 @ rule.whitener) @ rule.weights + rule.intercept + rule.prior_term
    return float(out[0]) if single else out


def labels_from_scores(delta, n1: int, n2: int) -> np.ndarray:
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    tie = 1 if n1 >= n2 else 2
    return np.where(delta > 0, 1, np.where(delta < 0, 2, tie))


def classify(rule: DiscriminantRule, x):
    """Group label(s): 1 when the score is positive, 2 when negative.

    A zero score goes to the group with the larger training count
    (group 1 on a tie).
    """
    delta = score(rule, x)
    labels = labels_from_scores(delta, rule.n1, rule.n2)
    return int(labels[0]) if np.ndim(delta) == 0 else labels


def make_report(predicted, truth) -> PredictionReport:
    predicted = np.asarray(predicted, dtype=int)
    truth = np.asarray(truth, dtype=int)
    confusion = np.zeros((2, 2), dtype=int)
    np.add.at(confusion, (truth - 1, predicted - 1), 1)
    wrong = int(confusion[0, 1] + confusion[1, 0])
    return PredictionReport(predicted, truth, wrong / truth.size if truth.size else 0.0, confusion)


def evaluate(rule: DiscriminantRule, test: LabeledDataset) -> PredictionReport:
    return make_report(classify(rule, test.features), test.labels)


# ---------------------------------------------------------------------------
# leave-one-out cross validation


def _precision_config(method: str, config, seed: int):
    method = method.upper()
    if method == LAM:
        cfg = config if config is not None else LamConfig()
        return LamConfig(cfg.split_fraction, cfg.num_splits, seed)
    if method == GLASSO:
        cfg = config if config is not None else GlassoConfig()
        return GlassoConfig(cfg.rho, cfg.max_outer_iters, cfg.tol, cfg.penalize_diagonal,
                            cfg.cv_folds, seed)
    return config


def _loocv_fold(data, i, precision_method, precision_config, cells, seed, omega_true, fixed_prec):
    train = data.drop(i)
    if train.n1 < 2 or train.n2 < 2:
        raise InsufficientData(f"leaving out row {i} leaves a group with fewer than 2 rows")
    if fixed_prec is not None:
        prec = fixed_prec
    else:
        fold_seed = _group_seed(seed, i)
        cfg = _precision_config(precision_method, precision_config, fold_seed)
        prec = fit_precision(train, precision_method, cfg, omega_true)
    z1, z2 = _whitened_means(train, prec)
    zx = whiten(data.features[i], prec)[0]
    out = {}
    for mean_method, variant in cells:
        rule = rule_from_means(z1, z2, train.n1, train.n2, prec.omega_half, mean_method,
                               variant, prec.method)
        delta = float(zx @ rule.weights + rule.intercept + rule.prior_term)
        out[(mean_method, variant)] = int(labels_from_scores(delta, rule.n1, rule.n2)[0])
    return out


def loocv_grid(data: LabeledDataset, precision_method: str, cells, precision_config=None,
               seed: int = 0, omega_true=None, fast: bool = False,
               n_jobs: int = 1) -> dict:
    """Leave-one-out error for several (mean method, variant) cells at once.

    The precision estimate is refitted on each fold's n - 1 rows and shared
    by every cell of that fold. With ``fast=True`` the full-data estimate is
    reused across folds, which leaks the held-out row into the whitener.

    Returns
    -------
    dict
        ``(mean_method, variant) -> PredictionReport``.
    """
    if data.n < 5:
        raise InsufficientData(f"LOOCV needs n >= 5, got {data.n}")
    cells = [(_check_mean_method(m), v.upper()) for m, v in cells]
    fixed = None
    if fast:
        cfg = _precision_config(precision_method, precision_config, seed)
        fixed = fit_precision(data, precision_method, cfg, omega_true)
    folds = Parallel(n_jobs=n_jobs)(
        delayed(_loocv_fold)(data, i, precision_method, precision_config, cells, seed,
                             omega_true, fixed)
        for i in range(data.n)
    )
    reports = {}
    for cell in cells:
        predicted = np.array([f[cell] for f in folds])
        reports[cell] = make_report(predicted, data.labels)
    return reports


def loocv(data: LabeledDataset, precision_method: str, mean_method: str = SM,
          variant: str = DIFF, precision_config=None, seed: int = 0, omega_true=None,
          fast: bool = False, n_jobs: int = 1) -> PredictionReport:
    cell = (_check_mean_method(mean_method), variant.upper())
    return loocv_grid(data, precision_method, [cell], precision_config, seed, omega_true,
                      fast, n_jobs)[cell]


# ---------------------------------------------------------------------------
# scikit-learn estimators


def _binary_dataset(X, y):
    X, y = check_X_y(X, y, dtype=float)
    classes = unique_labels(y)
    if classes.size != 2:
        raise InvalidInput(f"expected exactly two classes, got {classes.size}")
    labels = np.where(y == classes[0], 1, 2)
    return LabeledDataset(X, labels), classes


def _make_config(precision, glasso_rho, lam_split, lam_num_splits, random_state):
    precision = precision.upper()
    seed = 0 if random_state is None else int(random_state)
    if precision == GLASSO:
        return GlassoConfig(rho=glasso_rho, seed=seed)
    if precision == LAM:
        return LamConfig(lam_split, lam_num_splits, seed)
    return None


class PrecisionWhitener(TransformerMixin, BaseEstimator):
    """Decorrelate features with the square root of an estimated precision.

    With ``y`` the precision is estimated per class and pooled; without it,
    from all rows.

    Parameters
    ----------
    precision : {"ir", "glasso", "lam", "oracle"}
    glasso_rho : float or None
        Fixed glasso penalty; ``None`` tunes it by cross-validation.
    lam_split, lam_num_splits : LAM split fraction and number of splits.
    omega : ndarray, optional
        True precision, required for ``"oracle"``.
    random_state : int
    """

    def __init__(self, precision="lam", glasso_rho=None, lam_split=0.5, lam_num_splits=1,
                 omega=None, random_state=0):
        self.precision = precision
        self.glasso_rho = glasso_rho
        self.lam_split = lam_split
        self.lam_num_splits = lam_num_splits
        self.omega = omega
        self.random_state = random_state

    def fit(self, X, y=None):
        cfg = _make_config(self.precision, self.glasso_rho, self.lam_split,
                           self.lam_num_splits, self.random_state)
        method = self.precision.upper()
        if y is None:
            X = check_array(X, dtype=float)
            if method == ORACLE:
                est = fit_precision(None, ORACLE, omega_true=self.omega)
            elif method == IR:
                est = estimate_ir(X)
            elif method == GLASSO:
                est = estimate_glasso(X, cfg)
            elif method == LAM:
                est = estimate_lam(X, cfg)
            else:
                raise InvalidInput(f"unknown precision method {self.precision!r}")
        else:
            data, _ = _binary_dataset(X, y)
            est = fit_precision(data, method, cfg, self.omega)
        self.precision_ = est.omega
        self.whitener_ = est.omega_half
        self.estimate_ = est
        self.n_features_in_ = est.dim
        return self

    def transform(self, X):
        check_is_fitted(self, "whitener_")
        X = check_array(X, dtype=float)
        return whiten(X, self.estimate_)


class ShrinkageLDA(ClassifierMixin, BaseEstimator):
    """Linear discriminant analysis with empirical Bayes mean shrinkage.

    Parameters
    ----------
    precision : {"lam", "glasso", "ir", "oracle"}, default="lam"
        Precision-matrix estimator used to whiten the features.
    mean : {"sm", "npeb", "npmle", "hard"}, default="npeb"
        Estimator of the whitened mean difference.
    variant : {"diff", "pergroup"}, default="diff"
        Shrink the mean difference at once, or each group mean separately.
    glasso_rho, lam_split, lam_num_splits, omega, random_state
        Passed to the precision estimator; see :class:`PrecisionWhitener`.

    Attributes
    ----------
    classes_ : ndarray of shape (2,)
        ``classes_[0]`` plays the role of group 1.
    rule_ : DiscriminantRule
    coef_ : ndarray of shape (n_features,)
        Coefficients on the raw feature scale.
    """

    def __init__(self, precision="lam", mean="npeb", variant="diff", glasso_rho=None,
                 lam_split=0.5, lam_num_splits=1, omega=None, random_state=0):
        self.precision = precision
        self.mean = mean
        self.variant = variant
        self.glasso_rho = glasso_rho
        self.lam_split = lam_split
        self.lam_num_splits = lam_num_splits
        self.omega = omega
        self.random_state = random_state

    def fit(self, X, y):
        data, classes = _binary_dataset(X, y)
        cfg = _make_config(self.precision, self.glasso_rho, self.lam_split,
                           self.lam_num_splits, self.random_state)
        prec = fit_precision(data, self.precision, cfg, self.omega)
        self.rule_ = fit_rule(data, prec, self.mean, self.variant)
        self.classes_ = classes
        self.coef_ = self.rule_.coef
        self.intercept_ = self.rule_.intercept + self.rule_.prior_term
        self.n_features_in_ = data.p
        return self

    def discriminant(self, X):
        """Score ``delta``; positive values favour ``classes_[0]``."""
        check_is_fitted(self, "rule_")
        X = check_array(X, dtype=float)
        return score(self.rule_, X)

    def decision_function(self, X):
        """Follows the scikit-learn sign convention: positive favours ``classes_[1]``."""
        return -self.discriminant(X)

    def predict(self, X):
        labels = labels_from_scores(self.discriminant(X), self.rule_.n1, self.rule_.n2)
        return self.classes_[labels - 1]
