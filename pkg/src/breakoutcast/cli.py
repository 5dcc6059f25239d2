"""Command-line pipeline: ingest, synth, train, evaluate, rank.

Run configuration comes from an optional key=value config file plus
command-line flags; flags win.  Every writing command records the merged
settings as `resolved_config` in its output directory so runs are
reproducible.  Exit codes: 0 success, 1 internal failure, 2 usage or
validation error.
"""

import argparse
import csv
import io
import json
import os
import sys
import traceback
from datetime import date
from pathlib import Path

from breakoutcast import ingest, pipeline, synth
from breakoutcast.classical import ClassicalPerEntityModel, dump_model_text
from breakoutcast.errors import BreakoutcastError, ConfigError
from breakoutcast.evaluate import (
    RECALL_MODES,
    format_report_csv,
    format_report_text,
)
from breakoutcast.mlmodels.serialize import load_model, save_model

DEFAULTS = {
    "span_weeks": "45",
    "month_weeks": "4",
    "outlier_low": "10",
    "outlier_high": "5000",
    "require_broadcast": "false",
    "models": ",".join(pipeline.DEFAULT_MODELS),
    "seed": "0",
    "threads": "0",
    "k": "500",
    "threshold": "1.2",
    "recall_mode": "topk",
    "layout": "paper",
    "n_splits": "6",
    "alpha": "0.05",
    "n_entities": "500",
    "breakout_fraction": "0.2",
    "breakout_lift": "1.8",
    "surge_fraction": "0.35",
    "surge_lift_low": "1.4",
    "surge_lift_high": "2.0",
    "broadcast_coupling": "0.9",
    "broadcast_lead": "2",
    "broadcast_scale": "0.08",
    "broadcast_noise": "0.3",
    "base_level_low": "5",
    "base_level_high": "40",
    "ar_low": "0.2",
    "ar_high": "0.5",
    "noise_scale": "0.3",
    "start_date": "2019-03-10",
}


def read_config_file(path):
    """key = value lines; blank lines and # comments ignored; last key wins."""
    settings = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        settings[key.strip()] = value.strip()
    return settings


class Settings:
    """Merged string settings with typed accessors."""

    def __init__(self, mapping):
        self.raw = dict(mapping)

    def get(self, key, default=None):
        return self.raw.get(key, default)

    def get_int(self, key):
        try:
            return int(self.raw[key])
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {self.raw[key]!r}") from None

    def get_float(self, key):
        try:
            return float(self.raw[key])
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {self.raw[key]!r}") from None

    def get_bool(self, key):
        value = self.raw[key].lower()
        if value in ("true", "1", "yes"):
            return True
        if value in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key} must be true or false, got {self.raw[key]!r}")

    def get_date(self, key):
        try:
            return date.fromisoformat(self.raw[key])
        except ValueError:
            raise ConfigError(f"{key} must be YYYY-MM-DD, got {self.raw[key]!r}") from None

    def get_list(self, key):
        return tuple(v.strip() for v in self.raw[key].split(",") if v.strip())

    def threads(self):
        n = self.get_int("threads")
        return n if n > 0 else (os.cpu_count() or 1)

    def hyper_overrides(self):
        """model.param settings -> {model_base: {param: typed value}}."""
        hyper = {}
        for key, value in self.raw.items():
            if key.startswith("tune.") or "." not in key:
                continue
            base, _, param = key.partition(".")
            if base not in [n for n in pipeline.MODEL_NAMES if "-" not in n]:
                raise ConfigError(f"unknown model in setting {key!r}")
            hyper.setdefault(base, {})[param] = _parse_typed(value)
        return hyper

    def tuning_grids(self):
        """tune.model.param = v1|v2 settings -> {model_base: {param: [values]}}."""
        grids = {}
        for key, value in self.raw.items():
            if not key.startswith("tune."):
                continue
            parts = key.split(".")
            if len(parts) != 3:
                raise ConfigError(f"tuning key must be tune.MODEL.PARAM, got {key!r}")
            _, base, param = parts
            values = [_parse_typed(v) for v in value.split("|") if v.strip()]
            if not values:
                raise ConfigError(f"empty tuning grid in {key!r}")
            grids.setdefault(base, {})[param] = values
        return grids


def _parse_typed(text):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if "," in text:
        return tuple(_parse_typed(p) for p in text.split(","))
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def resolve_settings(args):
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        merged.update(read_config_file(args.config))
    for key, value in getattr(args, "set", None) or []:
        merged[key] = value
    for key in merged:
        # dotted keys are model hyperparameters / tuning grids, validated
        # by the command that consumes them
        if key not in DEFAULTS and "." not in key:
            raise ConfigError(f"unknown setting {key!r}")
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            merged[key] = str(value)
    return Settings(merged)


FLAG_KEYS = {
    "models": "models",
    "seed": "seed",
    "threads": "threads",
    "k": "k",
    "threshold": "threshold",
    "recall_mode": "recall_mode",
    "grid": "grid",
    "origin": "origin",
    "span_weeks": "span_weeks",
    "month_weeks": "month_weeks",
    "layout": "layout",
    "entities": "n_entities",
    "fraction": "breakout_fraction",
    "lift": "breakout_lift",
}


def _keyvalue(text):
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    return key.strip(), value.strip()


def write_resolved_config(settings, outdir):
    lines = [f"{k} = {settings.raw[k]}" for k in sorted(settings.raw)]
    (Path(outdir) / "resolved_config").write_text("\n".join(lines) + "\n")


def _guard_paths(inputs, outputs):
    resolved_in = {Path(p).resolve() for p in inputs if p}
    for out in outputs:
        if out and Path(out).resolve() in resolved_in:
            raise ConfigError(f"refusing to write over input path: {out}")


def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args):
    settings = resolve_settings(args)
    out = _outdir(args)
    config = synth.ScenarioConfig(
        n_entities=settings.get_int("n_entities"),
        span_weeks=settings.get_int("span_weeks"),
        month_weeks=settings.get_int("month_weeks"),
        base_level_low=settings.get_float("base_level_low"),
        base_level_high=settings.get_float("base_level_high"),
        ar_low=settings.get_float("ar_low"),
        ar_high=settings.get_float("ar_high"),
        noise_scale=settings.get_float("noise_scale"),
        breakout_fraction=settings.get_float("breakout_fraction"),
        breakout_lift=settings.get_float("breakout_lift"),
        surge_fraction=settings.get_float("surge_fraction"),
        surge_lift_low=settings.get_float("surge_lift_low"),
        surge_lift_high=settings.get_float("surge_lift_high"),
        broadcast_coupling=settings.get_float("broadcast_coupling"),
        broadcast_lead=settings.get_int("broadcast_lead"),
        broadcast_scale=settings.get_float("broadcast_scale"),
        broadcast_noise=settings.get_float("broadcast_noise"),
        start_date=settings.get_date("start_date"),
        seed=settings.get_int("seed"),
    )
    panels, truth = synth.generate(config)
    synth.write_mention_csv(panels, out / "mentions.csv")
    synth.write_ground_truth(truth, out / "ground_truth.csv")
    write_resolved_config(settings, out)
    n_injected = sum(truth.values())
    print(
        f"generated {config.n_entities} entities x {config.span_weeks} weeks "
        f"({n_injected} injected breakouts) -> {out / 'mentions.csv'}"
    )
    return 0


def cmd_ingest(args):
    settings = resolve_settings(args)
    out = _outdir(args)
    panel_path = out / "panels.csv"
    _guard_paths([args.records], [panel_path])
    with open(args.records, "r", encoding="utf-8") as fh:
        records = ingest.parse_records(fh, format=args.format)
    if not records:
        raise ConfigError(f"no records found in {args.records}")
    if settings.get("origin"):
        origin = settings.get_date("origin")
    else:
        origin = min(r.date for r in records)
    span = settings.get_int("span_weeks")
    panels = ingest.aggregate_weekly(records, origin=origin, span_weeks=span)
    kept, dropped = ingest.filter_outliers(
        panels,
        low=settings.get_float("outlier_low"),
        high=settings.get_float("outlier_high"),
    )
    require_broadcast = settings.get_bool("require_broadcast")
    dropped_broadcast = []
    if require_broadcast:
        kept, dropped_broadcast = ingest.filter_require_broadcast(kept)
    ingest.write_panels(panel_path, kept)
    write_resolved_config(settings, out)
    print(
        f"parsed {len(records)} records -> {len(panels)} entities; "
        f"dropped {len(dropped)} outside social bounds"
        + (f", {len(dropped_broadcast)} without broadcast" if require_broadcast else "")
    )
    if not kept:
        print("warning: all entities were dropped", file=sys.stderr)
    print(f"wrote {panel_path}")
    return 0


def _load_panels(path):
    return ingest.read_panels(path)


def cmd_train(args):
    settings = resolve_settings(args)
    out = _outdir(args)
    _guard_paths([args.panels], [])
    panels = _load_panels(args.panels)
    model_names = settings.get_list("models")
    hyper = settings.hyper_overrides()
    for base, grid_params in sorted(settings.tuning_grids().items()):
        name = base if base in model_names else None
        for candidate in model_names:
            if pipeline.split_model_name(candidate)[0] == base:
                name = candidate
                break
        if name is None:
            continue
        tuned = pipeline.tune_hyperparameters(
            panels, name, grid_params,
            month_weeks=settings.get_int("month_weeks"),
            seed=settings.get_int("seed"),
            n_threads=settings.threads(),
            n_splits=settings.get_int("n_splits"),
            log=print,
        )
        hyper.setdefault(base, {}).update(tuned)
        print(f"[tune {base}] selected " + ", ".join(f"{k}={v}" for k, v in sorted(tuned.items())))
    grid = pipeline.parse_order_grid(settings.get("grid")) if settings.get("grid") else None
    result = pipeline.train_models(
        panels,
        model_names=model_names,
        month_weeks=settings.get_int("month_weeks"),
        layout=settings.get("layout"),
        n_splits=settings.get_int("n_splits"),
        seed=settings.get_int("seed"),
        n_threads=settings.threads(),
        hyper=hyper,
        grid=grid,
        alpha=settings.get_float("alpha"),
        log=print,
    )
    for name, model in result.models.items():
        path = out / f"{name}.model.json"
        save_model(model, path)
        print(f"wrote {path}")
        if args.dump_models and isinstance(model, ClassicalPerEntityModel):
            dump_path = out / f"{name}.dump.txt"
            parts = [dump_model_text(f) for _, f in sorted(model.fits_.items())]
            dump_path.write_text("\n".join(parts))
            print(f"wrote {dump_path}")
    (out / "train_summary.json").write_text(
        json.dumps(result.summary, indent=2, sort_keys=True) + "\n"
    )
    write_resolved_config(settings, out)
    return 0


def _load_models(settings, models_dir):
    models = {}
    for name in settings.get_list("models"):
        pipeline.split_model_name(name)
        path = Path(models_dir) / f"{name}.model.json"
        if not path.exists():
            raise ConfigError(f"missing model file: {path}")
        models[name] = load_model(path)
    if not models:
        raise ConfigError("no models selected")
    return models


def cmd_evaluate(args):
    settings = resolve_settings(args)
    out = _outdir(args)
    _guard_paths([args.panels], [out / "report.txt", out / "report.csv"])
    panels = _load_panels(args.panels)
    models = _load_models(settings, args.models_dir)
    recall_mode = settings.get("recall_mode")
    if recall_mode not in RECALL_MODES:
        raise ConfigError(f"recall_mode must be one of {RECALL_MODES}")
    report, extras = pipeline.evaluate_models(
        models, panels,
        month_weeks=settings.get_int("month_weeks"),
        layout=settings.get("layout"),
        n_splits=settings.get_int("n_splits"),
        k=settings.get_int("k"),
        threshold=settings.get_float("threshold"),
        recall_mode=recall_mode,
    )
    text = format_report_text(report)
    (out / "report.txt").write_text(text)
    (out / "report.csv").write_text(format_report_csv(report))
    write_resolved_config(settings, out)
    print(text, end="")
    if extras["dropped_entities"]:
        print(
            f"note: {len(extras['dropped_entities'])} entities lacked predictions "
            "from every model and were excluded",
            file=sys.stderr,
        )
    return 0


def cmd_rank(args):
    settings = resolve_settings(args)
    pipeline.split_model_name(args.model)
    path = Path(args.models_dir) / f"{args.model}.model.json"
    if not path.exists():
        raise ConfigError(f"missing model file: {path}")
    model = load_model(path)
    panels = _load_panels(args.panels)
    rows = pipeline.rank_entities(
        model, panels,
        month_weeks=settings.get_int("month_weeks"),
        layout=settings.get("layout"),
        n_splits=settings.get_int("n_splits"),
        threshold=settings.get_float("threshold"),
    )
    ranked = [r for r in rows if r[1] is not None]
    top = args.top if args.top is not None else settings.get_int("k")
    if top > len(ranked):
        print(
            f"warning: requested top {top} but only {len(ranked)} rankable entities",
            file=sys.stderr,
        )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["rank", "entity_id", "ratio_predicted", "gamma", "beta_predicted"])
    for i, (entity_id, ratio, beta, gamma, _) in enumerate(ranked[:top], start=1):
        writer.writerow([i, entity_id, repr(ratio), repr(gamma), repr(beta)])
    text = buf.getvalue()
    if args.out:
        out_path = Path(args.out)
        _guard_paths([args.panels, path], [out_path])
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(text)
        print(f"wrote {out_path}")
    else:
        print(text, end="")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="breakoutcast",
        description="Forecast breakout entities from weekly social and broadcast mention counts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", type=_keyvalue, metavar="KEY=VALUE",
                       help="override any config key (repeatable)")
        p.add_argument("--seed", type=int, help="master random seed")
        p.add_argument("--threads", type=int, help="worker threads (0 = all cores)")

    p = sub.add_parser("synth", help="generate a synthetic mention-count scenario")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--entities", type=int, help="number of entities")
    p.add_argument("--span-weeks", dest="span_weeks", type=int, help="weeks per panel")
    p.add_argument("--fraction", type=float, help="injected breakout fraction")
    p.add_argument("--lift", type=float, help="breakout lift multiplier")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="parse raw mention records into weekly panels")
    common(p)
    p.add_argument("--records", required=True, help="raw records file")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--origin", help="week 1 start date (YYYY-MM-DD); default: earliest record")
    p.add_argument("--span-weeks", dest="span_weeks", type=int)
    p.add_argument("--require-broadcast", action="store_const", const="true",
                   dest="require_broadcast_flag",
                   help="drop entities with no broadcast mentions")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="fit the selected models on weekly panels")
    common(p)
    p.add_argument("--panels", required=True, help="panel CSV from ingest")
    p.add_argument("--out", required=True, help="output directory for model files")
    p.add_argument("--models", help="comma-separated model names "
                   f"(default: {','.join(pipeline.DEFAULT_MODELS)})")
    p.add_argument("--grid", help="classical order grid, e.g. p=1..4,q=0..2")
    p.add_argument("--month-weeks", dest="month_weeks", type=int)
    p.add_argument("--layout", choices=("paper", "sequential"))
    p.add_argument("--dump-models", action="store_true",
                   help="also write plain-text coefficient dumps for classical models")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score trained models on the held-out weeks")
    common(p)
    p.add_argument("--panels", required=True)
    p.add_argument("--models-dir", required=True, help="directory with *.model.json files")
    p.add_argument("--out", required=True, help="output directory for report files")
    p.add_argument("--models", help="comma-separated model names to evaluate")
    p.add_argument("--k", type=int, help="ranking depth for precision/recall")
    p.add_argument("--threshold", type=float, help="breakout ratio threshold")
    p.add_argument("--recall-mode", dest="recall_mode", choices=RECALL_MODES)
    p.add_argument("--month-weeks", dest="month_weeks", type=int)
    p.add_argument("--layout", choices=("paper", "sequential"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rank", help="rank entities by predicted breakout ratio")
    common(p)
    p.add_argument("--panels", required=True)
    p.add_argument("--models-dir", required=True)
    p.add_argument("--model", required=True, help="model name to rank with")
    p.add_argument("--top", type=int, help="row count (default: k)")
    p.add_argument("--out", help="output CSV path (default: stdout)")
    p.add_argument("--threshold", type=float)
    p.add_argument("--month-weeks", dest="month_weeks", type=int)
    p.set_defaults(func=cmd_rank)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "require_broadcast_flag", None):
        args.set = (args.set or []) + [("require_broadcast", "true")]
    try:
        return args.func(args)
    except (BreakoutcastError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
