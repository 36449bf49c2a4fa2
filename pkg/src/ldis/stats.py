"""Statistical validation tools: DiD regression, bootstrap intervals,
synthetic-control series and confusion-matrix agreement.

The difference-in-differences model is

    y = b0 + b1*g + b2*t + b3*(g*t) + e

with g = 1 for the treated zone (planting site) and 0 for its annulus
control, t = 1 after planting. On a saturated balanced panel the fitted
coefficients equal the four cell-mean contrasts exactly; b3 is the
treatment effect. Standard errors are classical (homoskedastic), matching
plain OLS reporting.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _scipy_stats

from .errors import DegeneratePanelError, InsufficientDataError

logger = logging.getLogger(__name__)

DID_HORIZONS = (-1, 1, 2, 5)
SYNTH_BUCKETS = 10


@dataclass
class DiDPanel:
    """Stacked observations (unit, g, t, y) for one horizon."""

    unit_id: np.ndarray
    g: np.ndarray
    t: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.unit_id = np.asarray(self.unit_id, dtype=object)
        self.g = np.asarray(self.g, dtype=np.int64)
        self.t = np.asarray(self.t, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.float64)
        n = len(self.y)
        if not (len(self.unit_id) == len(self.g) == len(self.t) == n):
            raise DegeneratePanelError("panel columns differ in length")
        if not np.isfinite(self.y).all():
            raise DegeneratePanelError("panel outcome contains non-finite values")
        for name, col in (("g", self.g), ("t", self.t)):
            if not np.isin(col, (0, 1)).all():
                raise DegeneratePanelError(f"panel column {name} must be binary")

    def __len__(self):
        return len(self.y)


@dataclass(frozen=True)
class DiDResult:
    beta0: float
    beta_g: float
    beta_t: float
    beta_gt: float
    se: tuple
    p_values: tuple
    r2: float
    adj_r2: float
    n_obs: int
    df_resid: int
    residual_std_error: float
    f_stat: float

    @property
    def betas(self) -> tuple:
        return (self.beta0, self.beta_g, self.beta_t, self.beta_gt)


def did_fit(panel: DiDPanel) -> DiDResult:
    """OLS on [1, g, t, g*t] via QR, with classical standard errors.

    Raises DegeneratePanelError when a g x t cell is empty (the design
    would be rank deficient). Degenerate R^2 (zero outcome variance) is
    reported as 0, not an error.
    """
    g, t, y = panel.g, panel.t, panel.y
    n = len(panel)
    for gv in (0, 1):
        for tv in (0, 1):
            if not np.any((g == gv) & (t == tv)):
                raise DegeneratePanelError(f"panel cell g={gv}, t={tv} is empty")

    X = np.column_stack([np.ones(n), g, t, g * t]).astype(np.float64)
    q, r = np.linalg.qr(X)
    beta = np.linalg.solve(r, q.T @ y)

    resid = y - X @ beta
    rss = float(resid @ resid)
    df = n - 4
    sigma2 = rss / df if df > 0 else 0.0
    r_inv = np.linalg.solve(r, np.eye(4))
    xtx_inv_diag = np.sum(r_inv * r_inv, axis=1)
    se = np.sqrt(sigma2 * xtx_inv_diag)

    tss = float(np.sum((y - y.mean()) ** 2))
    # constant outcomes accumulate ~eps^2 of fake variance; treat as zero
    scale = max(1.0, abs(float(y.mean())))
    degenerate = tss <= n * (16.0 * np.finfo(np.float64).eps * scale) ** 2
    r2 = 1.0 - rss / tss if not degenerate else 0.0
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / df if (not degenerate and df > 0) else 0.0
    if degenerate:
        f_stat = 0.0
    elif rss <= 0.0 or df <= 0:
        f_stat = math.inf
    else:
        f_stat = ((tss - rss) / 3.0) / (rss / df)

    p_values = []
    for b, s in zip(beta, se):
        if df <= 0 or s == 0.0:
            p_values.append(0.0 if b != 0.0 else 1.0)
        else:
            p_values.append(2.0 * float(_scipy_stats.t.sf(abs(b / s), df)))

    return DiDResult(
        beta0=float(beta[0]),
        beta_g=float(beta[1]),
        beta_t=float(beta[2]),
        beta_gt=float(beta[3]),
        se=tuple(float(s) for s in se),
        p_values=tuple(p_values),
        r2=r2,
        adj_r2=adj_r2,
        n_obs=n,
        df_resid=max(df, 0),
        residual_std_error=math.sqrt(sigma2),
        f_stat=f_stat,
    )


def significance_stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


def panel_from_series(series, horizon: int, index: str = "ndvi") -> DiDPanel:
    """Build a balanced 2x2 panel from zone index series records.

    ``horizon`` -1 contrasts one year before planting (pre) against the
    planting year (post); positive horizons contrast the planting year
    (pre) against that many years after. Units enter only when all four
    (zone, time) cells are evaluable, which keeps the panel balanced.
    """
    if horizon == -1:
        pre_period, post_period = -1, 0
    elif horizon in (1, 2, 5):
        pre_period, post_period = 0, horizon
    else:
        raise DegeneratePanelError(f"unsupported horizon {horizon}")
    cells = {}
    for rec in series:
        if rec.index != index or not rec.evaluable:
            continue
        if rec.period == pre_period:
            cells.setdefault(rec.site_id, {})[(rec.zone, 0)] = rec.mean_value
        elif rec.period == post_period:
            cells.setdefault(rec.site_id, {})[(rec.zone, 1)] = rec.mean_value
    unit_id, g, t, y = [], [], [], []
    for site_id in sorted(cells):
        entry = cells[site_id]
        if len(entry) != 4:
            continue
        for (zone, time), value in sorted(entry.items()):
            unit_id.append(site_id)
            g.append(1 if zone == "site" else 0)
            t.append(time)
            y.append(value)
    return DiDPanel(np.array(unit_id, dtype=object), g, t, y)


def bootstrap_mean_ci(samples, level: float = 0.95, reps: int = 1000, seed: int = 0) -> tuple:
    """Percentile bootstrap interval for the mean; deterministic per seed."""
    samples = np.asarray(samples, dtype=np.float64)
    n = len(samples)
    if n < 2:
        raise InsufficientDataError(f"bootstrap needs at least 2 samples, got {n}")
    if not 0.0 < level < 1.0:
        raise ValueError("confidence level must be in (0, 1)")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(reps, n))
    means = samples[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.percentile(means, [100.0 * alpha, 100.0 * (1.0 - alpha)])
    return float(lo), float(hi)


@dataclass
class SyntheticControlResult:
    """Weighted control series matched to the sites' planting-date NDVI."""

    series: np.ndarray
    weights: np.ndarray
    bin_edges: np.ndarray
    control_counts: np.ndarray
    dropped_bins: list
    renormalized: bool


def synthetic_control_series(
    control_values,
    control_at_planting,
    site_at_planting,
    n_buckets: int = SYNTH_BUCKETS,
) -> SyntheticControlResult | None:
    """Bucket-weighted mean of control trajectories.

    Sites' planting-date values define ``n_buckets`` equal-width bins and
    the per-bin weights (site shares). Control points join the bin their
    own planting-date value falls in (points outside the site range are
    unused). The period series is the weight-averaged per-bin control
    mean; bins without controls are dropped and the remaining weights
    renormalized (logged). Returns None when no bin has controls.
    """
    control_values = np.asarray(control_values, dtype=np.float64)
    control_at_planting = np.asarray(control_at_planting, dtype=np.float64)
    site_at_planting = np.asarray(site_at_planting, dtype=np.float64)
    if control_values.ndim != 2 or len(control_values) != len(control_at_planting):
        raise ValueError("control series and planting values disagree in length")
    if len(site_at_planting) == 0:
        raise InsufficientDataError("no site planting values to derive weights from")

    site_counts, edges = np.histogram(site_at_planting, bins=n_buckets)
    weights = site_counts / site_counts.sum()

    bins = np.digitize(control_at_planting, edges) - 1
    bins[control_at_planting == edges[-1]] = n_buckets - 1  # include the top edge

    bin_means = np.zeros((n_buckets, control_values.shape[1]))
    counts = np.zeros(n_buckets, dtype=np.int64)
    for b in range(n_buckets):
        members = bins == b
        counts[b] = int(members.sum())
        if counts[b]:
            bin_means[b] = control_values[members].mean(axis=0)

    usable = (counts > 0) & (weights > 0)
    dropped = [int(b) for b in range(n_buckets) if weights[b] > 0 and counts[b] == 0]
    if not usable.any():
        return None
    effective = weights[usable]
    renormalized = bool(dropped)
    if renormalized:
        logger.warning("synthetic control: %d weighted bins had no control points", len(dropped))
        effective = effective / effective.sum()
    series = effective @ bin_means[usable]
    return SyntheticControlResult(series, weights, edges, counts, dropped, renormalized)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion_metrics(c: ConfusionCounts) -> tuple:
    """(accuracy, f1); f1 is None when the positive class is empty."""
    if min(c.tp, c.fp, c.fn, c.tn) < 0:
        raise ValueError("confusion counts must be non-negative")
    if c.total == 0:
        raise InsufficientDataError("confusion matrix is empty")
    accuracy = (c.tp + c.tn) / c.total
    denom = 2 * c.tp + c.fp + c.fn
    f1 = (2 * c.tp / denom) if denom > 0 else None
    return accuracy, f1
