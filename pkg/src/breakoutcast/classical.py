"""Per-entity VAR and VARMA models: estimation, order selection, forecasting.

Models are linear in the channels with no constant term.  VARMA uses the
Hannan-Rissanen two-stage least-squares scheme: a long VAR proxies the
innovations, then the target is regressed on lagged values and lagged
innovation estimates.  Forecast intervals come from the moving-average
representation under Gaussian residuals.
"""

from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from breakoutcast.errors import (
    DegenerateSeriesError,
    EstimationError,
    RankDeficiencyError,
)
from breakoutcast.preprocess import adf_is_stationary

DEFAULT_VAR_GRID = tuple((p, 0) for p in (1, 2, 3, 4))
DEFAULT_VARMA_GRID = tuple((p, q) for p in (1, 2, 3, 4) for q in (0, 1, 2))


@dataclass(frozen=True)
class VarModel:
    """VAR(p) without intercept: y_t = sum_j A_j y_{t-j} + e_t."""

    p: int
    coefficients: np.ndarray  # (p, k, k)
    residual_covariance: np.ndarray  # (k, k)

    @property
    def q(self):
        return 0

    @property
    def ar_coefficients(self):
        return self.coefficients

    @property
    def ma_coefficients(self):
        k = self.coefficients.shape[1]
        return np.zeros((0, k, k))

    @property
    def n_channels(self):
        return self.coefficients.shape[1]


@dataclass(frozen=True)
class VarmaModel:
    """VARMA(p, q): y_t = sum_j A_j y_{t-j} + e_t + sum_j M_j e_{t-j}."""

    p: int
    q: int
    ar_coefficients: np.ndarray  # (p, k, k)
    ma_coefficients: np.ndarray  # (q, k, k)
    residual_covariance: np.ndarray  # (k, k)

    @property
    def n_channels(self):
        return self.ar_coefficients.shape[1]


@dataclass(frozen=True)
class ForecastResult:
    """Multi-step forecast with symmetric confidence bounds, lower <= point <= upper."""

    point: np.ndarray  # (horizon, k)
    lower: np.ndarray
    upper: np.ndarray
    level: float


def _as_series(series):
    y = np.asarray(series, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2:
        raise ValueError("series must be (T,) or (T, k)")
    return y


def _lagged_design(y, p):
    T, k = y.shape
    Z = np.empty((T - p, k * p))
    for j in range(1, p + 1):
        Z[:, (j - 1) * k : j * k] = y[p - j : T - j]
    return Z, y[p:]


def _ols(Z, Y, what):
    B, _, rank, _ = np.linalg.lstsq(Z, Y, rcond=None)
    if rank < Z.shape[1]:
        raise RankDeficiencyError(f"singular regressor matrix in {what}")
    resid = Y - Z @ B
    cov = resid.T @ resid / resid.shape[0]
    return B, cov


def _blocks(B, n_blocks, k):
    # row block j of B is A_{j+1}^T; contiguous output keeps predictions
    # bit-identical after a save/load round trip
    if not n_blocks:
        return np.zeros((0, k, k))
    return np.ascontiguousarray(
        np.stack([B[j * k : (j + 1) * k].T for j in range(n_blocks)])
    )


def fit_var(series, p):
    """Least-squares VAR(p) fit with no intercept."""
    y = _as_series(series)
    T, k = y.shape
    if p < 1:
        raise ValueError("p must be >= 1")
    if T <= k * p + 10:
        raise ValueError(f"need T > {k * p + 10} observations for VAR({p}), got {T}")
    Z, Y = _lagged_design(y, p)
    B, cov = _ols(Z, Y, f"VAR({p})")
    return VarModel(p=p, coefficients=_blocks(B, p, k), residual_covariance=cov)


def fit_varma(series, p, q):
    """Hannan-Rissanen VARMA(p, q) fit; q = 0 reduces exactly to fit_var."""
    y = _as_series(series)
    T, k = y.shape
    if p < 1 or q < 0:
        raise ValueError("need p >= 1 and q >= 0")
    if q == 0:
        m = fit_var(y, p)
        return VarmaModel(
            p=p,
            q=0,
            ar_coefficients=m.coefficients,
            ma_coefficients=m.ma_coefficients,
            residual_covariance=m.residual_covariance,
        )
    if T <= k * (p + q) + 20:
        raise ValueError(
            f"need T > {k * (p + q) + 20} observations for VARMA({p},{q}), got {T}"
        )
    long_order = max(p, q) + 4
    long_var = fit_var(y, long_order)
    resid = residuals(long_var, y)  # zeros before long_order
    start = long_order + q
    rows = T - start
    Zy, _ = _lagged_design(y[start - p :], p)
    Ze, _ = _lagged_design(resid[start - q :], q)
    Z = np.hstack([Zy[:rows], Ze[:rows]])
    Y = y[start:]
    B, cov = _ols(Z, Y, f"VARMA({p},{q}) stage 2")
    return VarmaModel(
        p=p,
        q=q,
        ar_coefficients=_blocks(B[: k * p], p, k),
        ma_coefficients=_blocks(B[k * p :], q, k),
        residual_covariance=cov,
    )


def residuals(model, series):
    """Innovation estimates by filtering; entries before t = p are zero."""
    y = _as_series(series)
    T, k = y.shape
    A = model.ar_coefficients
    M = model.ma_coefficients
    e = np.zeros_like(y)
    for t in range(model.p, T):
        pred = np.zeros(k)
        for j in range(1, model.p + 1):
            pred += A[j - 1] @ y[t - j]
        for j in range(1, model.q + 1):
            if t - j >= 0:
                pred += M[j - 1] @ e[t - j]
        e[t] = y[t] - pred
    return e


def one_step_predictions(model, series):
    """In-sample rolled 1-step forecasts; rows before t = p are NaN."""
    y = _as_series(series)
    preds = y - residuals(model, y)
    preds[: model.p] = np.nan
    return preds


def ma_representation(model, max_lag):
    """Psi matrices of the MA-infinity form, Psi[0] = I."""
    A = model.ar_coefficients
    M = model.ma_coefficients
    k = model.n_channels
    psi = np.zeros((max_lag + 1, k, k))
    psi[0] = np.eye(k)
    for i in range(1, max_lag + 1):
        if i <= model.q:
            psi[i] += M[i - 1]
        for j in range(1, min(i, model.p) + 1):
            psi[i] += A[j - 1] @ psi[i - j]
    return psi


def forecast_covariances(model, horizon, diff_flags=None):
    """Forecast-error covariance per step.

    diff_flags marks channels whose forecasts will be cumulated back to
    levels; their error rows use cumulative Psi weights.
    """
    k = model.n_channels
    psi = ma_representation(model, horizon)
    psi_cum = np.cumsum(psi, axis=0)
    sigma = model.residual_covariance
    if diff_flags is None:
        diff_flags = np.zeros(k, dtype=bool)
    diff_flags = np.asarray(diff_flags, dtype=bool)
    covs = np.empty((horizon, k, k))
    for s in range(1, horizon + 1):
        V = np.zeros((k, k))
        for m in range(1, s + 1):
            C = np.where(diff_flags[:, None], psi_cum[s - m], psi[s - m])
            V += C @ sigma @ C.T
        covs[s - 1] = V
    return covs


def point_forecast(model, history, horizon):
    """Iterated multi-step forecasts with future innovations set to zero."""
    y = _as_series(history)
    T, k = y.shape
    if T < max(model.p, model.q):
        raise ValueError("history shorter than model order")
    e = residuals(model, y)
    out = np.zeros((horizon, k))
    for s in range(1, horizon + 1):
        acc = np.zeros(k)
        for j in range(1, model.p + 1):
            u = s - j
            past = y[T - 1 + u] if u <= 0 else out[u - 1]
            acc += model.ar_coefficients[j - 1] @ past
        for j in range(1, model.q + 1):
            u = s - j
            if u <= 0:
                acc += model.ma_coefficients[j - 1] @ e[T - 1 + u]
        out[s - 1] = acc
    return out


def forecast(model, history, horizon, level=0.95, diff_flags=None):
    """ForecastResult in the space the model was fit in."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    point = point_forecast(model, history, horizon)
    covs = forecast_covariances(model, horizon, diff_flags=diff_flags)
    se = np.sqrt(np.maximum(np.diagonal(covs, axis1=1, axis2=2), 0.0))
    z = NormalDist().inv_cdf(0.5 + level / 2.0)
    return ForecastResult(
        point=point, lower=point - z * se, upper=point + z * se, level=level
    )


@dataclass(frozen=True)
class OrderSelection:
    p: int
    q: int
    model: VarmaModel | VarModel
    score: float
    scores: dict  # (p, q) -> validation MAE
    notes: tuple  # skipped grid points, as text


def select_order(train, valid, grid):
    """Pick the (p, q) with the lowest validation MAE of rolled 1-step forecasts.

    Forecast errors average over every channel.  Ties break toward smaller
    p + q, then smaller p.  Grid points that fail preconditions or hit rank
    deficiency are skipped with a note; if every point fails,
    EstimationError is raised.
    """
    train = _as_series(train)
    valid = _as_series(valid)
    if len(grid) == 0:
        raise ValueError("empty order grid")
    if valid.shape[0] < 1:
        raise ValueError("empty validation segment")
    full = np.vstack([train, valid])
    best = None
    scores = {}
    notes = []
    for p, q in sorted(set((int(p), int(q)) for p, q in grid), key=lambda t: (t[0] + t[1], t[0])):
        try:
            model = fit_varma(train, p, q)
        except (ValueError, RankDeficiencyError) as exc:
            notes.append(f"({p},{q}) skipped: {exc}")
            continue
        preds = one_step_predictions(model, full)[train.shape[0] :]
        mae = float(np.mean(np.abs(preds - valid)))
        scores[(p, q)] = mae
        if best is None or mae < best.score:
            best = OrderSelection(p, q, model, mae, {}, ())
    if best is None:
        raise EstimationError("; ".join(notes) or "empty grid")
    return OrderSelection(best.p, best.q, best.model, best.score, scores, tuple(notes))


# --- entity-level pipeline: stationarity transform + selection + forecasting ---

LOG_LEVEL_CAP = 30.0  # caps log1p forecasts; expm1(30) ~ 1e13 counts


@dataclass(frozen=True)
class EntityClassicalFit:
    """A fitted per-entity model plus the transform needed to invert forecasts."""

    entity_id: str
    p: int
    q: int
    model: VarmaModel
    diff_flags: np.ndarray  # per channel: True when fit on log differences
    cutoff_week: int  # 1-based; model saw weeks 1..cutoff_week
    validation_mae: float
    notes: tuple = field(default=())

    @property
    def n_channels(self):
        return self.model.n_channels


def transform_levels(levels, diff_flags):
    """log1p levels, then per-channel differences where flagged.

    When any channel is differenced the first observation is dropped from
    every channel so rows stay time-aligned.
    """
    logs = np.log1p(_as_series(levels))
    diff_flags = np.asarray(diff_flags, dtype=bool)
    if not diff_flags.any():
        return logs
    out = logs[1:].copy()
    for c in np.where(diff_flags)[0]:
        out[:, c] = logs[1:, c] - logs[:-1, c]
    return out


def decide_diff_flags(levels, train_end, alpha=0.05):
    """Per-channel differencing decision from the training weeks only.

    A channel is differenced when the ADF test cannot reject a unit root
    in its log1p series; degenerate channels (constant or noise-free)
    are left in levels.
    """
    logs = np.log1p(_as_series(levels))
    k = logs.shape[1]
    flags = np.zeros(k, dtype=bool)
    notes = []
    for c in range(k):
        segment = logs[:train_end, c]
        try:
            flags[c] = not adf_is_stationary(segment, alpha=alpha)
        except DegenerateSeriesError:
            flags[c] = False
            notes.append(f"channel {c}: degenerate on train segment, kept in levels")
    return flags, notes


def fit_entity_model(entity_id, levels, plan, grid=DEFAULT_VARMA_GRID, alpha=0.05):
    """Transform, select orders on the validation split, refit through valid_end.

    levels: (W, k) raw weekly counts.  Raises EstimationError when no grid
    point fits.
    """
    levels = _as_series(levels)
    flags, notes = decide_diff_flags(levels, plan.train_end_week, alpha=alpha)
    offset = 1 if flags.any() else 0
    transformed = transform_levels(levels[: plan.valid_end_week], flags)
    train = transformed[: plan.train_end_week - offset]
    valid = transformed[plan.train_end_week - offset :]
    selection = select_order(train, valid, grid)
    refit = fit_varma(transformed, selection.p, selection.q)
    return EntityClassicalFit(
        entity_id=entity_id,
        p=selection.p,
        q=selection.q,
        model=refit,
        diff_flags=flags,
        cutoff_week=plan.valid_end_week,
        validation_mae=selection.score,
        notes=tuple(notes) + selection.notes,
    )


def forecast_entity(fit, levels, horizon, level=0.95):
    """Forecast raw weekly counts for the weeks after fit.cutoff_week."""
    levels = _as_series(levels)[: fit.cutoff_week]
    logs = np.log1p(levels)
    transformed = transform_levels(levels, fit.diff_flags)
    res = forecast(fit.model, transformed, horizon, level=level, diff_flags=fit.diff_flags)

    def to_counts(values):
        out = np.empty_like(values)
        for c in range(values.shape[1]):
            col = values[:, c]
            if fit.diff_flags[c]:
                col = logs[-1, c] + np.cumsum(col)
            out[:, c] = np.expm1(np.minimum(col, LOG_LEVEL_CAP))
        return np.maximum(out, 0.0)

    # cumulative bands for differenced channels are already built into the
    # covariance via diff_flags, so bounds cumulate like the point path
    point = to_counts(res.point)
    lower = np.empty_like(point)
    upper = np.empty_like(point)
    for c in range(point.shape[1]):
        se_log = (res.upper[:, c] - res.point[:, c])  # z * se on the transformed scale
        if fit.diff_flags[c]:
            center = logs[-1, c] + np.cumsum(res.point[:, c])
        else:
            center = res.point[:, c]
        lower[:, c] = np.maximum(np.expm1(np.minimum(center - se_log, LOG_LEVEL_CAP)), 0.0)
        upper[:, c] = np.maximum(np.expm1(np.minimum(center + se_log, LOG_LEVEL_CAP)), 0.0)
    return ForecastResult(point=point, lower=lower, upper=upper, level=level)


def predict_target_month(fit, levels, n_weeks, month_weeks):
    """Mean forecasted social count over the final month of the panel span."""
    horizon = n_weeks - fit.cutoff_week
    if horizon < month_weeks:
        raise ValueError("cutoff leaves less than one month to forecast")
    res = forecast_entity(fit, levels, horizon)
    return float(np.mean(res.point[horizon - month_weeks :, 0]))


class ClassicalPerEntityModel:
    """One VAR or VARMA fit per entity, driven by a split plan.

    Unlike the pooled regressors this consumes whole weekly panels; each
    entity gets its own stationarity transform, order selection on the
    validation weeks, and refit through valid_end_week.  Entities whose
    every grid point fails are recorded in skipped_ and excluded from
    predictions.
    """

    kind = "classical"

    def __init__(self, model_type="var", social_only=False, alpha=0.05, grid=None):
        if model_type not in ("var", "varma"):
            raise ValueError(f"model_type must be 'var' or 'varma', got {model_type!r}")
        self.model_type = model_type
        self.social_only = bool(social_only)
        self.alpha = float(alpha)
        if grid is None:
            grid = DEFAULT_VAR_GRID if model_type == "var" else DEFAULT_VARMA_GRID
        self.grid = tuple((int(p), int(q)) for p, q in grid)
        self.fits_ = {}
        self.skipped_ = {}

    @property
    def name(self):
        base = self.model_type.upper()
        return base + "-TW" if self.social_only else base

    @property
    def fitted(self):
        return bool(self.fits_)

    def _levels(self, panel):
        if self.social_only:
            return panel.social[:, None]
        return np.column_stack([panel.social, panel.broadcast])

    def fit(self, panels, plan, n_threads=1):
        panels = list(panels.values()) if isinstance(panels, dict) else list(panels)
        if not panels:
            raise ValueError("cannot fit on an empty panel list")

        def fit_one(panel):
            try:
                return fit_entity_model(
                    panel.entity_id, self._levels(panel), plan,
                    grid=self.grid, alpha=self.alpha,
                )
            except (EstimationError, RankDeficiencyError, DegenerateSeriesError,
                    ValueError) as exc:
                return (panel.entity_id, str(exc))

        if n_threads > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=n_threads) as pool:
                results = list(pool.map(fit_one, panels))
        else:
            results = [fit_one(panel) for panel in panels]
        self.fits_ = {}
        self.skipped_ = {}
        for res in results:
            if isinstance(res, EntityClassicalFit):
                self.fits_[res.entity_id] = res
            else:
                self.skipped_[res[0]] = res[1]
        if not self.fits_:
            raise EstimationError("no entity could be fit; first failure: "
                                  + next(iter(self.skipped_.values())))
        return self

    def predict_final_month(self, panels, month_weeks):
        """entity_id -> mean forecasted social count over the final month."""
        if isinstance(panels, dict):
            panels = panels.values()
        out = {}
        for panel in panels:
            fit = self.fits_.get(panel.entity_id)
            if fit is not None:
                out[panel.entity_id] = predict_target_month(
                    fit, self._levels(panel), panel.n_weeks, month_weeks
                )
        return out

    def state_dict(self):
        return {
            "model_type": self.model_type,
            "social_only": self.social_only,
            "alpha": self.alpha,
            "grid": [list(t) for t in self.grid],
            "skipped": dict(self.skipped_),
            "fits": [
                {
                    "entity_id": f.entity_id,
                    "p": f.p,
                    "q": f.q,
                    "ar": f.model.ar_coefficients,
                    "ma": f.model.ma_coefficients,
                    "resid_cov": f.model.residual_covariance,
                    "diff_flags": f.diff_flags,
                    "cutoff_week": f.cutoff_week,
                    "validation_mae": f.validation_mae,
                    "notes": list(f.notes),
                }
                for f in self.fits_.values()
            ],
        }

    @classmethod
    def from_state(cls, state):
        model = cls(
            model_type=state["model_type"],
            social_only=state["social_only"],
            alpha=state["alpha"],
            grid=state["grid"],
        )
        model.skipped_ = dict(state["skipped"])
        for f in state["fits"]:
            varma = VarmaModel(
                p=int(f["p"]),
                q=int(f["q"]),
                ar_coefficients=np.asarray(f["ar"], dtype=np.float64),
                ma_coefficients=np.asarray(f["ma"], dtype=np.float64),
                residual_covariance=np.asarray(f["resid_cov"], dtype=np.float64),
            )
            fit = EntityClassicalFit(
                entity_id=f["entity_id"],
                p=varma.p,
                q=varma.q,
                model=varma,
                diff_flags=np.asarray(f["diff_flags"], dtype=bool),
                cutoff_week=int(f["cutoff_week"]),
                validation_mae=float(f["validation_mae"]),
                notes=tuple(f["notes"]),
            )
            model.fits_[fit.entity_id] = fit
        return model


def dump_model_text(fit):
    """Plain-text diagnostic dump: orders and coefficient matrices to 6 decimals."""
    lines = [
        f"entity {fit.entity_id}",
        f"p {fit.p} q {fit.q}",
        f"diff_flags {' '.join(str(int(f)) for f in fit.diff_flags)}",
        f"cutoff_week {fit.cutoff_week}",
    ]
    for name, mats in (("AR", fit.model.ar_coefficients), ("MA", fit.model.ma_coefficients)):
        for j, mat in enumerate(mats, start=1):
            lines.append(f"{name}{j}")
            for row in mat:
                lines.append("  " + " ".join(f"{v: .6f}" for v in row))
    lines.append("residual_covariance")
    for row in fit.model.residual_covariance:
        lines.append("  " + " ".join(f"{v: .6f}" for v in row))
    return "\n".join(lines) + "\n"
