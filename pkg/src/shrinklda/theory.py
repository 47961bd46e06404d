"""Asymptotic regimes of the shrinkage rules under sparse power-law signals.

The signal model puts ``l = floor(p^a)`` nonzero whitened mean differences
of size ``Delta = p^b``. :func:`region_membership` evaluates which of the
four regions A-D a point ``(a, b)`` falls in and what that implies for each
mean estimator; :func:`v_scan` probes the growth of the V statistic by
direct Monte Carlo on the whitened scale.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidInput, ShapeMismatch
from .shrinkage import HARD, NPEB, NPMLE, SM, shrink

COVERED = "covered"
UNKNOWN = "unknown"
EXCLUDED = "excluded"

#: slack for the closed inequalities so grid points on a boundary are not
#: lost to rounding
_EPS = 1e-12


@dataclass(frozen=True)
class SignalConfig:
    a: float
    b: float
    p: int
    n1: int = 50
    n2: int = 50

    def __post_init__(self):
        if not 0 < self.a < 1:
            raise InvalidInput("a must lie in (0, 1)")
        if self.p < 1 or self.n1 < 1 or self.n2 < 1:
            raise InvalidInput("p, n1 and n2 must be positive")
        if not 1 <= self.l <= self.p:
            raise InvalidInput(f"l = floor(p^a) = {self.l} must lie in [1, p]")

    @property
    def delta(self) -> float:
        return float(self.p) ** self.b

    @property
    def l(self) -> int:
        # guard against p^a landing a hair under an integer
        return int(math.floor(float(self.p) ** self.a + 1e-9))

    @property
    def a_n(self) -> float:
        return (1.0 / self.n1 + 1.0 / self.n2) ** -0.5

    def mean_vector(self) -> np.ndarray:
        mu = np.zeros(self.p)
        mu[: self.l] = self.delta
        return mu

    def at(self, p: int) -> "SignalConfig":
        return SignalConfig(self.a, self.b, p, self.n1, self.n2)


@dataclass(frozen=True)
class RegionReport:
    a: float
    b: float
    in_A: bool
    in_B: bool
    in_C: bool
    in_D: bool
    in_T1: bool
    in_T2: bool
    coverage: dict = field(default_factory=dict)

    @property
    def covered_by(self) -> frozenset:
        """Methods proven to reach vanishing error at this point."""
        return frozenset(m for m, v in self.coverage.items() if v == COVERED)

    @property
    def regions(self) -> tuple:
        return tuple(r for r, f in zip("ABCD", (self.in_A, self.in_B, self.in_C, self.in_D)) if f)


def _in_open(x, lo, hi):
    return lo < x < hi


def region_membership(a: float, b: float) -> RegionReport:
    """Classify ``(a, b)`` against regions A-D and the easy zones T1, T2.

    Coverage is three-valued. SM and HARD have exact regions (D and C), so
    outside them but within the comparison zone ``(T1 u T2)^c`` they are
    ``excluded``; inside T1/T2 nothing is claimed. NPEB and NPMLE only have
    proven inner bounds (A u C u D and B u C u D), so outside those they
    are ``unknown``, never ``excluded``.
    """
    a = float(a)
    b = float(b)
    if not 0 < a < 1:
        raise InvalidInput(f"a must lie in (0, 1), got {a}")
    if not math.isfinite(b):
        raise InvalidInput("b must be finite")
    s2 = a + 2 * b
    s1 = a + b
    in_A = -_EPS <= s2 <= 0.5 + _EPS and _in_open(b, -0.25, 0) and _in_open(a, 0, 1)
    in_B = s1 >= 0.5 - _EPS and _in_open(b, -0.5, 0) and _in_open(a, 0.5, 1)
    in_C = s2 <= 0.5 + _EPS and _in_open(b, 0, 0.25) and _in_open(a, 0, 0.5)
    in_D = s2 >= 0.5 - _EPS and _in_open(b, -0.25, 0) and _in_open(a, 0.5, 1)
    in_T1 = s2 >= 0.5 - _EPS and 0 < a <= 0.5
    in_T2 = 0.5 < a <= 1 and b > 0
    easy = in_T1 or in_T2

    def exact(member):
        if member:
            return COVERED
        return UNKNOWN if easy else EXCLUDED

    coverage = {
        SM: exact(in_D),
        HARD: exact(in_C),
        NPEB: COVERED if (in_A or in_C or in_D) else UNKNOWN,
        NPMLE: COVERED if (in_B or in_C or in_D) else UNKNOWN,
    }
    return RegionReport(a, b, in_A, in_B, in_C, in_D, in_T1, in_T2, coverage)


def region_grid(step: float = 0.01) -> list[RegionReport]:
    """Reports at cell midpoints of a ``step`` grid over (0,1) x (-0.5,0.5)."""
    if not 0 < step <= 0.5:
        raise InvalidInput("grid step must lie in (0, 0.5]")
    na = int(round(1.0 / step))
    nb = int(round(1.0 / step))
    out = []
    for i in range(na):
        a = (i + 0.5) * step
        for j in range(nb):
            b = -0.5 + (j + 0.5) * step
            out.append(region_membership(round(a, 12), round(b, 12)))
    return out


REGION_COLUMNS = ("a", "b", "in_A", "in_B", "in_C", "in_D", "in_T1", "in_T2",
                  "SM", "HARD", "NPEB", "NPMLE")


def region_grid_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REGION_COLUMNS)
    for r in reports:
        w.writerow([f"{r.a:.6g}", f"{r.b:.6g}", int(r.in_A), int(r.in_B), int(r.in_C),
                    int(r.in_D), int(r.in_T1), int(r.in_T2),
                    r.coverage[SM], r.coverage[HARD], r.coverage[NPEB], r.coverage[NPMLE]])
    return buf.getvalue()


def overlapping_pairs(reports) -> dict:
    """Count of grid points lying in each pair of regions."""
    names = ("A", "B", "C", "D")
    counts = {}
    for i in range(4):
        for j in range(i + 1, 4):
            counts[names[i] + names[j]] = sum(
                1 for r in reports if getattr(r, "in_" + names[i]) and getattr(r, "in_" + names[j])
            )
    return counts


# ---------------------------------------------------------------------------
# V statistic


def v_statistic(mu_true, mu_hat) -> float:
    """``<mu_true, mu_hat> / ||mu_hat||``; 0 (with a warning) for a zero estimate."""
    mu = np.asarray(mu_true, dtype=float)
    mh = np.asarray(mu_hat, dtype=float)
    if mu.shape != mh.shape:
        raise ShapeMismatch(f"length mismatch: {mu.shape} vs {mh.shape}")
    norm = float(np.linalg.norm(mh))
    if norm == 0.0:
        warnings.warn("estimate is identically zero; V set to 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(mu @ mh) / norm


@dataclass(frozen=True)
class ScanRow:
    method: str
    p: int
    median: float
    q10: float
    q90: float
    draws: int


def _draw_seed(seed: int, p: int, draw: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(p), int(draw)])


def v_draws(cfg: SignalConfig, methods, draws: int, seed: int = 0) -> dict:
    """Per-method arrays of V over ``draws`` noisy observations at ``cfg.p``.

    Every method sees the same draws, so differences between methods are not
    blurred by sampling noise.
    """
    if draws < 1:
        raise InvalidInput("draws must be positive")
    mu = cfg.mean_vector()
    sd = 1.0 / cfg.a_n
    out = {m: np.empty(draws) for m in methods}
    for d in range(draws):
        rng = np.random.default_rng(_draw_seed(seed, cfg.p, d))
        zbar = mu + sd * rng.standard_normal(cfg.p)
        for m in methods:
            est = shrink(zbar, sd, m).estimates
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                out[m][d] = v_statistic(mu, est)
    return out


def v_scan(cfg: SignalConfig, p_list, methods=(SM, NPEB, NPMLE), draws: int = 100,
           seed: int = 0) -> list[ScanRow]:
    """Median and 10/90 percentiles of V per (method, p)."""
    if draws < 10:
        raise InvalidInput("v_scan needs at least 10 draws")
    rows = []
    for p in p_list:
        vals = v_draws(cfg.at(int(p)), methods, draws, seed)
        for m in methods:
            q10, med, q90 = np.quantile(vals[m], [0.1, 0.5, 0.9])
            rows.append(ScanRow(m, int(p), float(med), float(q10), float(q90), draws))
    return rows


def scan_ratio(rows, method: str, p_small: int, p_large: int) -> float:
    med = {(r.method, r.p): r.median for r in rows}
    return med[(method, p_large)] / med[(method, p_small)]


def v_scan_csv(rows, cfg: SignalConfig | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["method", "p", "median_V", "q10", "q90", "draws"]
    if cfg is not None:
        head = ["a", "b"] + head
    w.writerow(head)
    for r in rows:
        line = [r.method, r.p, f"{r.median:.10g}", f"{r.q10:.10g}", f"{r.q90:.10g}", r.draws]
        if cfg is not None:
            line = [f"{cfg.a:.6g}", f"{cfg.b:.6g}"] + line
        w.writerow(line)
    return buf.getvalue()
