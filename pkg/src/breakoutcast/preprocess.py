"""Transformations from weekly panels to model-ready series and datasets.

Covers the unit-root test used to pick the stationarity transform, the
shifted log-difference itself, pooled z-score normalization, sliding
window construction with a 3-months-ahead target, and train/valid/test
split plans.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from breakoutcast.errors import ConfigError, DegenerateSeriesError

# Finite-sample critical values for the ADF t-statistic, regression with
# constant and no trend: crit = b0 + b1/T + b2/T^2 + b3/T^3 (MacKinnon 2010).
_ADF_CRIT = {
    0.01: (-3.43035, -6.5393, -16.786, -79.433),
    0.05: (-2.86154, -2.8903, -4.234, -40.040),
    0.10: (-2.56677, -1.5384, -2.809, 0.0),
}


def schwert_max_lag(n):
    """Schwert's rule of thumb for the ADF lag order: floor(12*(n/100)^0.25)."""
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def _adf_critical_value(alpha, nobs):
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    levels = sorted(_ADF_CRIT)
    crits = [
        b0 + b1 / nobs + b2 / nobs**2 + b3 / nobs**3
        for b0, b1, b2, b3 in (_ADF_CRIT[a] for a in levels)
    ]
    if alpha <= levels[0]:
        return crits[0]
    if alpha >= levels[-1]:
        return crits[-1]
    # between tabulated levels, interpolate linearly in log(alpha)
    for (a0, c0), (a1, c1) in zip(zip(levels, crits), zip(levels[1:], crits[1:])):
        if a0 <= alpha <= a1:
            w = (math.log(alpha) - math.log(a0)) / (math.log(a1) - math.log(a0))
            return c0 + w * (c1 - c0)
    raise AssertionError("unreachable")


def _adf_design(y, lag, start):
    """Regressand dy[t] and rows [y[t], dy[t-1..t-lag], 1] for t >= start."""
    dy = np.diff(y)
    rows = []
    for t in range(start, dy.shape[0]):
        row = [y[t]]
        row.extend(dy[t - i] for i in range(1, lag + 1))
        row.append(1.0)
        rows.append(row)
    return np.array(rows), dy[start:]


def _adf_regression(y, lag):
    """(t-statistic of the level coefficient, nobs) at a fixed lag count."""
    n = y.shape[0]
    if n <= lag + 3:
        raise ValueError(f"series length {n} too short for max_lag {lag}")
    X, target = _adf_design(y, lag, start=lag)
    nobs = target.shape[0]
    if nobs - X.shape[1] < 1:
        raise ValueError(f"series length {n} leaves no degrees of freedom")
    xtx = X.T @ X
    try:
        beta = np.linalg.solve(xtx, X.T @ target)
        e1 = np.zeros(X.shape[1])
        e1[0] = 1.0
        v = np.linalg.solve(xtx, e1)
    except np.linalg.LinAlgError:
        raise DegenerateSeriesError("collinear ADF regressors")
    resid = target - X @ beta
    dof = nobs - X.shape[1]
    sigma2 = float(resid @ resid) / dof
    variance = sigma2 * v[0]
    if variance <= 0.0:
        raise DegenerateSeriesError("zero-variance ADF residuals")
    se = math.sqrt(variance)
    return float(beta[0] / se), nobs


def _aic_best_lag(y, kmax):
    """Lag in 0..kmax minimizing AIC on a shared sample (rows start at kmax)."""
    X_full, target = _adf_design(y, kmax, start=kmax)
    nobs = target.shape[0]
    best_lag = 0
    best_aic = math.inf
    for k in range(kmax + 1):
        cols = list(range(k + 1)) + [X_full.shape[1] - 1]
        X = X_full[:, cols]
        beta, _, rank, _ = np.linalg.lstsq(X, target, rcond=None)
        if rank < X.shape[1]:
            continue
        resid = target - X @ beta
        ssr = max(float(resid @ resid), 1e-300)
        aic = nobs * math.log(ssr / nobs) + 2 * (k + 2)
        if aic < best_aic:
            best_aic = aic
            best_lag = k
    return best_lag


def adf_statistic(series, max_lag=None):
    """ADF t-statistic: Delta y_t on y_{t-1} and lagged differences, with constant.

    max_lag None picks the lag count by AIC up to the Schwert bound;
    an explicit max_lag fixes the lag count.  Returns (t_stat, nobs).
    Raises DegenerateSeriesError for constant input.
    """
    y = np.asarray(series, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("series must be 1-d")
    n = y.shape[0]
    if n >= 1 and np.max(y) == np.min(y):
        raise DegenerateSeriesError("constant series has no unit-root statistic")
    if max_lag is None:
        kmax = max(0, min(schwert_max_lag(n), (n - 5) // 2))
        if n <= kmax + 3:
            kmax = max(0, n - 4)
        max_lag = _aic_best_lag(y, kmax)
    return _adf_regression(y, int(max_lag))


def adf_is_stationary(series, alpha=0.05, max_lag=None):
    """True when the ADF test rejects a unit root at level alpha."""
    t_stat, nobs = adf_statistic(series, max_lag=max_lag)
    return t_stat < _adf_critical_value(alpha, nobs)


def log_difference(series):
    """Shifted log difference: out[t] = log(x[t+1]+1) - log(x[t]+1)."""
    x = np.asarray(series, dtype=np.float64)
    if x.shape[-1] < 2:
        raise ValueError("need at least 2 points to difference")
    if np.any(x < 0):
        raise ValueError("log_difference requires non-negative input")
    return np.diff(np.log1p(x), axis=-1)


def invert_log_difference(diffs, initial_level):
    """Reconstruct levels from shifted log differences and the level before them."""
    d = np.asarray(diffs, dtype=np.float64)
    logs = math.log1p(float(initial_level)) + np.cumsum(d, axis=-1)
    return np.expm1(logs)


@dataclass(frozen=True)
class NormalizationParams:
    """Pooled per-channel moments; index 0 is social, 1 is broadcast."""

    mean: np.ndarray
    std: np.ndarray

    def normalize_channel(self, values, channel):
        return (np.asarray(values, dtype=np.float64) - self.mean[channel]) / self.std[channel]

    def normalize_target(self, target):
        return (target - self.mean[0]) / self.std[0]

    def denormalize_target(self, z):
        return z * self.std[0] + self.mean[0]


@dataclass(frozen=True)
class WindowSample:
    """One input window plus its future-3rd-month average social target.

    Weeks are 1-based.  The input covers weeks (end-L, end]; the target is
    the mean social count of weeks (end + 2*month_weeks, end + 3*month_weeks].
    """

    entity_id: str
    input_social: np.ndarray
    input_broadcast: np.ndarray
    target: float
    window_end_week: int

    @property
    def window_length(self):
        return self.input_social.shape[0]

    @property
    def gamma(self):
        """Past average weekly social count over the input window."""
        return float(np.mean(self.input_social))


@dataclass
class SupervisedDataset:
    samples: list
    month_weeks: int
    normalization: NormalizationParams | None = None

    def __post_init__(self):
        lengths = {s.window_length for s in self.samples}
        if len(lengths) > 1:
            raise ValueError(f"samples mix window lengths {sorted(lengths)}")

    def __len__(self):
        return len(self.samples)

    @property
    def window_length(self):
        return self.samples[0].window_length if self.samples else 3 * self.month_weeks

    def targets(self):
        return np.array([s.target for s in self.samples], dtype=np.float64)

    def with_normalization(self, params):
        return replace_dataset(self, normalization=params)


def replace_dataset(dataset, **changes):
    out = SupervisedDataset(
        samples=changes.get("samples", dataset.samples),
        month_weeks=changes.get("month_weeks", dataset.month_weeks),
        normalization=changes.get("normalization", dataset.normalization),
    )
    return out


@dataclass(frozen=True)
class SplitPlan:
    """Week boundaries: train covers weeks <= train_end_week, and so on."""

    train_end_week: int
    valid_end_week: int
    test_end_week: int
    n_sequential_splits: int = 1

    def __post_init__(self):
        ok = 0 < self.train_end_week < self.valid_end_week <= self.test_end_week
        if not ok:
            raise ConfigError(
                f"invalid split boundaries ({self.train_end_week}, "
                f"{self.valid_end_week}, {self.test_end_week})"
            )


def fit_normalization(samples):
    """Pooled per-channel mean and population std over training inputs.

    Channels with zero variance get std = 1 so normalization stays defined.
    """
    if len(samples) < 2:
        raise ValueError("need at least 2 samples to fit normalization")
    social = np.concatenate([s.input_social for s in samples])
    broadcast = np.concatenate([s.input_broadcast for s in samples])
    mean = np.array([social.mean(), broadcast.mean()])
    std = np.array([social.std(), broadcast.std()])
    std[std < 1e-12] = 1.0
    return NormalizationParams(mean=mean, std=std)


def build_dataset(panels, month_weeks=4, stride_weeks=1, max_end_week=None):
    """Slide fixed windows over every panel and pair them with future targets.

    Window ends run L, L+stride, ... while the target month still fits
    below max_end_week (default: the panel length).  Entities too short
    for a single window are skipped and reported.

    Returns (SupervisedDataset, skipped) with samples ordered by
    (entity_id, window_end_week) and skipped mapping entity_id -> reason.
    """
    if month_weeks <= 0 or stride_weeks <= 0:
        raise ValueError("month_weeks and stride_weeks must be positive")
    if not isinstance(panels, dict):
        panels = {p.entity_id: p for p in panels}
    L = 3 * month_weeks
    horizon = 3 * month_weeks
    samples = []
    skipped = {}
    for eid in sorted(panels):
        panel = panels[eid]
        W = panel.n_weeks
        limit = W if max_end_week is None else min(max_end_week, W)
        last_end = limit - horizon
        if last_end < L:
            skipped[eid] = f"panel of {W} weeks too short for one window"
            continue
        for end in range(L, last_end + 1, stride_weeks):
            t0 = end + 2 * month_weeks
            samples.append(
                WindowSample(
                    entity_id=eid,
                    input_social=panel.social[end - L : end].copy(),
                    input_broadcast=panel.broadcast[end - L : end].copy(),
                    target=float(np.mean(panel.social[t0 : t0 + month_weeks])),
                    window_end_week=end,
                )
            )
    return SupervisedDataset(samples=samples, month_weeks=month_weeks), skipped


def training_subset(dataset, boundary_week):
    """Samples whose target weeks all lie at or below boundary_week."""
    horizon = 3 * dataset.month_weeks
    keep = [s for s in dataset.samples if s.window_end_week + horizon <= boundary_week]
    return replace_dataset(dataset, samples=keep)


def window_ends_between(dataset, lo_week, hi_week):
    """Samples with lo_week < window_end_week <= hi_week."""
    keep = [s for s in dataset.samples if lo_week < s.window_end_week <= hi_week]
    return replace_dataset(dataset, samples=keep)


def test_window_end(n_weeks, month_weeks=4):
    """End week of the latest window whose target month fits in the panel."""
    return n_weeks - 3 * month_weeks


PAPER_HOLDOUT = "paper"
SEQUENTIAL = "sequential"


def make_split_plan(n_weeks, layout=PAPER_HOLDOUT, n_splits=6, month_weeks=4):
    """Split plan for a panel of n_weeks weeks.

    "paper": fixed boundaries (24, 32, n_weeks), requiring >= 45 weeks.
    "sequential": n_splits near-equal contiguous blocks; the last block is
    held out, so train_end is the end of block n-1.
    """
    if layout == PAPER_HOLDOUT:
        if n_weeks < 45:
            raise ConfigError(f"paper holdout needs >= 45 weeks, got {n_weeks}")
        return SplitPlan(24, 32, n_weeks, 1)
    if layout == SEQUENTIAL:
        if n_splits < 2:
            raise ConfigError("sequential layout needs at least 2 splits")
        if n_weeks < n_splits * month_weeks:
            raise ConfigError(
                f"{n_weeks} weeks cannot hold {n_splits} blocks of >= {month_weeks} weeks"
            )
        boundaries = [(i * n_weeks) // n_splits for i in range(1, n_splits + 1)]
        return SplitPlan(boundaries[-2], n_weeks, n_weeks, n_splits)
    raise ConfigError(f"unknown split layout {layout!r}")


def sequential_block_boundaries(n_weeks, n_splits):
    """End weeks of the n_splits near-equal blocks used by the sequential layout."""
    return [(i * n_weeks) // n_splits for i in range(1, n_splits + 1)]


def _fmt(v):
    return repr(int(v)) if float(v).is_integer() else repr(float(v))


def export_dataset(path, dataset):
    """Write samples as `entity_id,window_end_week,target,social_1..L,broadcast_1..L`."""
    L = dataset.window_length
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["entity_id", "window_end_week", "target"]
            + [f"social_{i}" for i in range(1, L + 1)]
            + [f"broadcast_{i}" for i in range(1, L + 1)]
        )
        for s in dataset.samples:
            writer.writerow(
                [s.entity_id, s.window_end_week, _fmt(s.target)]
                + [_fmt(v) for v in s.input_social]
                + [_fmt(v) for v in s.input_broadcast]
            )


def import_dataset(path, month_weeks=4):
    """Read a CSV written by export_dataset."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        L = (len(header) - 3) // 2
        samples = []
        for row in reader:
            if not row:
                continue
            samples.append(
                WindowSample(
                    entity_id=row[0],
                    input_social=np.array([float(v) for v in row[3 : 3 + L]]),
                    input_broadcast=np.array([float(v) for v in row[3 + L :]]),
                    target=float(row[2]),
                    window_end_week=int(row[1]),
                )
            )
    return SupervisedDataset(samples=samples, month_weeks=month_weeks)
