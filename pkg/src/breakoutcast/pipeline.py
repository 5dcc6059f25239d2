"""End-to-end orchestration: model construction, training, prediction, reports.

Classical models fit one system per entity on the raw panels; pooled
models train on windowed samples whose target month lies entirely before
the held-out region.  Both kinds predict the same quantity for the test
windows (the future-month average social count), so one report compares
them all.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from breakoutcast.classical import (
    ClassicalPerEntityModel,
    DEFAULT_VAR_GRID,
    DEFAULT_VARMA_GRID,
)
from breakoutcast.errors import ConfigError
from breakoutcast.evaluate import (
    DEFAULT_K,
    DEFAULT_THRESHOLD,
    RECALL_TOPK,
    assess_breakout,
    build_report,
)
from breakoutcast.mlmodels import (
    GradientBoostedTrees,
    LstmRegressor,
    MlnnRegressor,
    RandomForestRegressor,
)
from breakoutcast.preprocess import (
    PAPER_HOLDOUT,
    build_dataset,
    fit_normalization,
    make_split_plan,
    test_window_end,
    training_subset,
)

MODEL_NAMES = (
    "var", "varma", "rf", "rf-tw", "gbt", "gbt-tw",
    "mlnn", "mlnn-tw", "lstm", "lstm-tw",
)
DEFAULT_MODELS = ("var", "varma", "rf", "gbt", "gbt-tw", "mlnn", "lstm", "lstm-tw")
CLASSICAL_BASES = ("var", "varma")


def split_model_name(name):
    """'gbt-tw' -> ('gbt', True); validates against the known model set."""
    if name not in MODEL_NAMES:
        raise ConfigError(
            f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}"
        )
    base, _, variant = name.partition("-")
    return base, variant == "tw"


def display_name(name):
    base, social_only = split_model_name(name)
    return base.upper() + ("-TW" if social_only else "")


def parse_order_grid(text):
    """'p=1..2,q=0..1' -> ((1,0), (1,1), (2,0), (2,1))."""
    ranges = {}
    for part in text.split(","):
        key, _, value = part.strip().partition("=")
        key = key.strip()
        if key not in ("p", "q") or not value:
            raise ConfigError(f"bad grid component {part!r}; expected p=LO..HI,q=LO..HI")
        lo, sep, hi = value.partition("..")
        try:
            lo_i = int(lo)
            hi_i = int(hi) if sep else lo_i
        except ValueError:
            raise ConfigError(f"bad grid range {value!r}") from None
        if hi_i < lo_i:
            raise ConfigError(f"empty grid range {value!r}")
        ranges[key] = range(lo_i, hi_i + 1)
    if "p" not in ranges:
        raise ConfigError("grid must include p")
    qs = ranges.get("q", range(0, 1))
    return tuple(itertools.product(ranges["p"], qs))


def make_model(name, seed=0, n_threads=1, hyper=None, grid=None, alpha=0.05):
    """Construct an untrained model from its config name."""
    base, social_only = split_model_name(name)
    kwargs = dict((hyper or {}).get(base, {}))
    try:
        if base in CLASSICAL_BASES:
            if grid is None:
                grid = DEFAULT_VAR_GRID if base == "var" else DEFAULT_VARMA_GRID
            elif base == "var" and any(q != 0 for _, q in grid):
                raise ConfigError("var grid must keep q = 0")
            return ClassicalPerEntityModel(
                model_type=base, social_only=social_only, alpha=alpha, grid=grid
            )
        if base == "rf":
            return RandomForestRegressor(
                social_only=social_only, seed=seed, n_threads=n_threads, **kwargs
            )
        if base == "gbt":
            return GradientBoostedTrees(social_only=social_only, seed=seed, **kwargs)
        if base == "mlnn":
            return MlnnRegressor(social_only=social_only, seed=seed, **kwargs)
        return LstmRegressor(social_only=social_only, seed=seed, **kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad hyperparameter for {base}: {exc}") from None


def check_panels(panels):
    """Sorted panel list with a single shared span; errors on mixed spans."""
    if isinstance(panels, dict):
        panels = panels.values()
    panels = sorted(panels, key=lambda p: p.entity_id)
    if not panels:
        raise ConfigError("no panels to process")
    spans = {p.n_weeks for p in panels}
    if len(spans) != 1:
        raise ConfigError(f"panels have mixed week spans: {sorted(spans)}")
    return panels


def _ml_train_boundary(plan):
    # paper layout holds out (valid_end, test_end]; sequential holds out the
    # last block, so training stops at train_end
    if plan.valid_end_week < plan.test_end_week:
        return plan.valid_end_week
    return plan.train_end_week


def build_training_dataset(panels, plan, month_weeks=4):
    """Windowed training samples with pooled normalization attached."""
    dataset, skipped = build_dataset(panels, month_weeks=month_weeks)
    train_ds = training_subset(dataset, _ml_train_boundary(plan))
    if len(train_ds.samples) < 2:
        raise ConfigError(
            "fewer than 2 training windows; panels are too short for this plan"
        )
    norm = fit_normalization(train_ds.samples)
    return train_ds.with_normalization(norm), dataset, skipped


def select_test_samples(dataset, plan, month_weeks=4):
    """Held-out windows: targets entirely inside the evaluation region."""
    if plan.valid_end_week < plan.test_end_week:
        end = test_window_end(plan.test_end_week, month_weeks)
        keep = [s for s in dataset.samples if s.window_end_week == end]
    else:
        lo = plan.train_end_week - 2 * month_weeks + 1
        hi = plan.test_end_week - 3 * month_weeks
        keep = [s for s in dataset.samples if lo <= s.window_end_week <= hi]
    if not keep:
        raise ConfigError("no test windows fit the split plan")
    return keep


@dataclass
class TrainOutput:
    models: dict  # config name -> fitted model
    plan: object
    summary: dict  # JSON-friendly diagnostics


def train_models(panels, model_names=DEFAULT_MODELS, month_weeks=4,
                 layout=PAPER_HOLDOUT, n_splits=6, seed=0, n_threads=1,
                 hyper=None, grid=None, alpha=0.05, log=None):
    """Fit every selected model; classical models need the paper layout."""
    panels = check_panels(panels)
    names = list(dict.fromkeys(model_names))
    for name in names:
        split_model_name(name)
    n_weeks = panels[0].n_weeks
    plan = make_split_plan(n_weeks, layout=layout, n_splits=n_splits,
                           month_weeks=month_weeks)
    has_classical = any(split_model_name(n)[0] in CLASSICAL_BASES for n in names)
    if has_classical and plan.valid_end_week == plan.test_end_week:
        raise ConfigError(
            "per-entity classical models need a held-out forecast region; "
            "use the paper layout"
        )
    train_ds, _, skipped_windows = build_training_dataset(panels, plan, month_weeks)
    summary = {
        "n_entities": len(panels),
        "n_weeks": n_weeks,
        "plan": {
            "train_end_week": plan.train_end_week,
            "valid_end_week": plan.valid_end_week,
            "test_end_week": plan.test_end_week,
        },
        "n_train_windows": len(train_ds.samples),
        "skipped_entities": skipped_windows,
        "models": {},
    }
    models = {}
    for name in names:
        base, _ = split_model_name(name)
        model = make_model(name, seed=seed, n_threads=n_threads, hyper=hyper,
                           grid=grid, alpha=alpha)
        if base in CLASSICAL_BASES:
            model.fit(panels, plan, n_threads=n_threads)
            orders = {
                eid: [f.p, f.q] for eid, f in sorted(model.fits_.items())
            }
            if log is not None:
                for eid, (p, q) in ((e, tuple(o)) for e, o in orders.items()):
                    log(f"[{name}] {eid}: selected p={p} q={q}")
                for eid, reason in sorted(model.skipped_.items()):
                    log(f"[{name}] {eid}: skipped ({reason})")
            summary["models"][name] = {
                "selected_orders": orders,
                "skipped": dict(sorted(model.skipped_.items())),
            }
        else:
            model.fit(train_ds)
            summary["models"][name] = {
                "n_train_windows": len(train_ds.samples),
                "social_only": model.social_only,
            }
        models[name] = model
    return TrainOutput(models=models, plan=plan, summary=summary)


def predict_models(models, panels, month_weeks=4, layout=PAPER_HOLDOUT, n_splits=6):
    """Aligned test predictions for every model.

    Entities missing a prediction from any classical model (estimation
    failures) are dropped from the shared evaluation set and reported.
    Returns (samples, {display_name: predictions}, dropped_entity_ids).
    """
    panels = check_panels(panels)
    plan = make_split_plan(panels[0].n_weeks, layout=layout, n_splits=n_splits,
                           month_weeks=month_weeks)
    dataset, _ = build_dataset(panels, month_weeks=month_weeks)
    samples = select_test_samples(dataset, plan, month_weeks)
    columns = {}
    for name, model in models.items():
        if isinstance(model, ClassicalPerEntityModel):
            by_entity = model.predict_final_month(panels, month_weeks)
            col = np.array(
                [by_entity.get(s.entity_id, np.nan) for s in samples]
            )
        else:
            col = np.asarray(model.predict(samples), dtype=np.float64)
        columns[name] = col
    keep = np.ones(len(samples), dtype=bool)
    for col in columns.values():
        keep &= ~np.isnan(col)
    dropped = sorted({s.entity_id for s, ok in zip(samples, keep) if not ok})
    samples = [s for s, ok in zip(samples, keep) if ok]
    if not samples:
        raise ConfigError("no test windows have predictions from every model")
    predictions = {
        display_name(name): col[keep] for name, col in columns.items()
    }
    return samples, predictions, dropped


def evaluate_models(models, panels, month_weeks=4, layout=PAPER_HOLDOUT,
                    n_splits=6, k=DEFAULT_K, threshold=DEFAULT_THRESHOLD,
                    recall_mode=RECALL_TOPK):
    """EvalReport over the shared test windows, plus evaluation diagnostics."""
    samples, predictions, dropped = predict_models(
        models, panels, month_weeks=month_weeks, layout=layout, n_splits=n_splits
    )
    report = build_report(predictions, samples, k=k, threshold=threshold,
                          recall_mode=recall_mode)
    extras = {
        "n_test_windows": len(samples),
        "dropped_entities": dropped,
    }
    return report, extras


def rank_entities(model, panels, month_weeks=4, layout=PAPER_HOLDOUT,
                  n_splits=6, threshold=DEFAULT_THRESHOLD):
    """Ranking rows for one model: (entity, ratio, beta_predicted, gamma, label)."""
    from breakoutcast.evaluate import ranking_table

    samples, predictions, _ = predict_models(
        {model.name.lower(): model}, panels, month_weeks=month_weeks,
        layout=layout, n_splits=n_splits,
    )
    preds = next(iter(predictions.values()))
    assessments = [
        assess_breakout(s, p, threshold) for s, p in zip(samples, preds)
    ]
    return ranking_table(assessments)


def tune_hyperparameters(panels, name, param_grid, month_weeks=4, seed=0,
                         n_threads=1, n_splits=6, log=None):
    """Grid-search pooled-model hyperparameters on pre-test windows only.

    The pre-test region (everything before the held-out forecast weeks) is
    split into n_splits sequential blocks; candidates train on windows whose
    targets end by block n-1 and are scored by MAE on the final block.
    Returns the winning parameter dict.
    """
    base, _ = split_model_name(name)
    if base in CLASSICAL_BASES:
        raise ConfigError("hyperparameter tuning applies to pooled models only")
    if not param_grid:
        raise ConfigError("empty tuning grid")
    panels = check_panels(panels)
    n_weeks = panels[0].n_weeks
    region_end = make_split_plan(n_weeks, layout=PAPER_HOLDOUT,
                                 month_weeks=month_weeks).valid_end_week
    inner = make_split_plan(region_end, layout="sequential", n_splits=n_splits,
                            month_weeks=month_weeks)
    dataset, _ = build_dataset(panels, month_weeks=month_weeks,
                               max_end_week=region_end)
    train_ds = training_subset(dataset, inner.train_end_week)
    eval_samples = [
        s for s in dataset.samples
        if s.window_end_week + 3 * month_weeks > inner.train_end_week
    ]
    if len(train_ds.samples) < 2 or not eval_samples:
        raise ConfigError("panels are too short to tune on the pre-test region")
    train_ds = train_ds.with_normalization(fit_normalization(train_ds.samples))
    actual = np.array([s.target for s in eval_samples])
    keys = sorted(param_grid)
    best = None
    for combo in itertools.product(*(param_grid[k] for k in keys)):
        params = dict(zip(keys, combo))
        model = make_model(name, seed=seed, n_threads=n_threads,
                           hyper={base: params})
        model.fit(train_ds)
        preds = np.asarray(model.predict(eval_samples))
        mae = float(np.mean(np.abs(preds - actual)))
        if log is not None:
            rendered = ", ".join(f"{k}={params[k]}" for k in keys)
            log(f"[tune {name}] {rendered}: mae={mae:.4f}")
        if best is None or mae < best[0]:
            best = (mae, params)
    return best[1]
