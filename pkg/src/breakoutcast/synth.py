"""Synthetic two-channel mention panels with injected breakouts.

Each entity's social series is a mean-reverting AR(1) around a log-uniform
base level with level-proportional noise.  Injected breakout entities rise
along a linear ramp over the three months before the target month and hold
the full multiplicative lift through it, so the onset is visible in the
forecast inputs the way an organic rise would be.  A configurable fraction
of entities additionally carry a historical surge (same ramp shape, random
lift) that completes before the assessment window begins; these surges
leave the breakout labels untouched but give pooled models training
examples of a ramp followed by an elevated future level.  The broadcast
channel is a scaled, noisier copy of the social series shifted so
broadcast leads social by one or two weeks.  Counts are rounded and
zero-floored to match the ingestion domain.

oracle_breakout_labels recomputes the breakout condition directly from raw
weekly values in plain Python; it shares no code with the evaluation
module and serves as its cross-check.
"""

import csv
import io
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from breakoutcast.errors import ValidationError
from breakoutcast.ingest import WeeklyPanel


@dataclass(frozen=True)
class ScenarioConfig:
    n_entities: int = 500
    span_weeks: int = 45
    month_weeks: int = 4
    base_level_low: float = 5.0
    base_level_high: float = 40.0
    ar_low: float = 0.2
    ar_high: float = 0.5
    noise_scale: float = 0.3
    breakout_fraction: float = 0.2
    breakout_lift: float = 1.8
    surge_fraction: float = 0.35
    surge_lift_low: float = 1.4
    surge_lift_high: float = 2.0
    broadcast_coupling: float = 0.9
    broadcast_lead: int = 2
    broadcast_scale: float = 0.08
    broadcast_noise: float = 0.3
    start_date: date = date(2019, 3, 10)
    seed: int = 0

    def __post_init__(self):
        if self.n_entities < 1:
            raise ValueError("n_entities must be >= 1")
        if self.month_weeks < 1:
            raise ValueError("month_weeks must be >= 1")
        if self.span_weeks < 6 * self.month_weeks:
            raise ValueError(
                "span_weeks must cover the input window plus the target month "
                f"(>= {6 * self.month_weeks})"
            )
        if not 0.0 < self.base_level_low <= self.base_level_high:
            raise ValueError("need 0 < base_level_low <= base_level_high")
        if not 0.0 <= self.ar_low <= self.ar_high < 1.0:
            raise ValueError("need 0 <= ar_low <= ar_high < 1")
        if self.noise_scale < 0 or self.broadcast_noise < 0:
            raise ValueError("noise scales must be >= 0")
        if not 0.0 <= self.breakout_fraction <= 1.0:
            raise ValueError("breakout_fraction must be in [0, 1]")
        if self.breakout_lift <= 1.2:
            raise ValueError("breakout_lift must exceed 1.2")
        if not 0.0 <= self.surge_fraction <= 1.0:
            raise ValueError("surge_fraction must be in [0, 1]")
        if not 1.0 < self.surge_lift_low <= self.surge_lift_high:
            raise ValueError("need 1 < surge_lift_low <= surge_lift_high")
        if not 0.0 <= self.broadcast_coupling <= 1.0:
            raise ValueError("broadcast_coupling must be in [0, 1]")
        if self.broadcast_lead not in (1, 2):
            raise ValueError("broadcast_lead must be 1 or 2")
        if self.broadcast_scale <= 0:
            raise ValueError("broadcast_scale must be > 0")


def _entity_ids(n):
    width = len(str(n))
    return [f"E{i:0{width}d}" for i in range(1, n + 1)]


def _lift_curve(n_weeks, ramp_end, ramp_weeks, lift):
    """Weekly multipliers: 1 before the ramp, linear rise, lift from ramp_end on."""
    w = np.arange(1, n_weeks + 1, dtype=np.float64)
    frac = np.clip((w - (ramp_end - ramp_weeks)) / ramp_weeks, 0.0, 1.0)
    return 1.0 + (lift - 1.0) * frac


def _simulate_entity(rng, config, lifted):
    """Float social/broadcast paths for one entity; rounding happens later."""
    W = config.span_weeks
    m = config.month_weeks
    lead = config.broadcast_lead
    total = W + lead
    base = np.exp(
        rng.uniform(np.log(config.base_level_low), np.log(config.base_level_high))
    )
    rho = rng.uniform(config.ar_low, config.ar_high)
    sigma = config.noise_scale * np.sqrt(base)
    eps = rng.normal(0.0, sigma, size=total)
    social = np.empty(total)
    social[0] = base + eps[0] / np.sqrt(1.0 - rho * rho)
    for t in range(1, total):
        social[t] = base + rho * (social[t - 1] - base) + eps[t]
    # historical surge: completes at or before week W - 6m, so both the
    # assessment baseline and the future month sit on the settled level
    surge_last = W - 6 * m
    if surge_last >= 3 * m + 2:
        surged = rng.uniform() < config.surge_fraction
        surge_end = int(rng.integers(3 * m + 2, surge_last + 1))
        surge_lift = rng.uniform(config.surge_lift_low, config.surge_lift_high)
        if surged:
            social = social * _lift_curve(total, surge_end, 3 * m, surge_lift)
    if lifted:
        # ramp spans the three months before the target month; every week of
        # the target month (and the broadcast extension) carries the full lift
        social = social * _lift_curve(total, W - m, 3 * m, config.breakout_lift)
    scale = config.broadcast_scale
    coupled = config.broadcast_coupling * social[lead:] + (
        1.0 - config.broadcast_coupling
    ) * base
    eta = rng.normal(0.0, config.broadcast_noise * np.sqrt(scale * base), size=W)
    broadcast = scale * coupled + eta
    return social[:W], broadcast


def generate(config):
    """(entity_id -> WeeklyPanel, entity_id -> injected breakout flag)."""
    ids = _entity_ids(config.n_entities)
    master = np.random.default_rng(config.seed)
    n_breakout = int(round(config.breakout_fraction * config.n_entities))
    lifted_idx = set(
        master.choice(config.n_entities, size=n_breakout, replace=False).tolist()
    )
    streams = np.random.SeedSequence(config.seed).spawn(config.n_entities)
    panels = {}
    ground_truth = {}
    for i, (entity_id, stream) in enumerate(zip(ids, streams)):
        rng = np.random.default_rng(stream)
        social, broadcast = _simulate_entity(rng, config, i in lifted_idx)
        panels[entity_id] = WeeklyPanel(
            entity_id=entity_id,
            start_date=config.start_date,
            social=np.maximum(np.rint(social), 0.0),
            broadcast=np.maximum(np.rint(broadcast), 0.0),
        )
        ground_truth[entity_id] = i in lifted_idx
    return panels, ground_truth


def oracle_breakout_labels(panels, month_weeks=4, threshold=1.2):
    """Breakout flags recomputed from raw weekly counts by direct arithmetic.

    gamma averages the 3 months before the test window end (the span minus
    the 3-month forecast gap); beta averages the final month.  True requires
    gamma > 0 and beta / gamma >= threshold.
    """
    if isinstance(panels, dict):
        panels = panels.values()
    labels = {}
    for panel in panels:
        weeks = [float(v) for v in panel.social]
        w = len(weeks)
        m = int(month_weeks)
        if w < 6 * m:
            raise ValueError(
                f"panel {panel.entity_id}: need at least {6 * m} weeks, got {w}"
            )
        end = w - 3 * m
        past = weeks[end - 3 * m : end]
        future = weeks[w - m :]
        gamma = sum(past) / len(past)
        beta = sum(future) / len(future)
        labels[panel.entity_id] = gamma > 0 and beta / gamma >= threshold
    return labels


def write_mention_csv(panels, path):
    """Emit panels in the raw ingestion schema, one record per week and channel.

    Each week's total is dated on the week's first day, so aggregating the
    file reproduces the panels exactly.
    """
    if isinstance(panels, dict):
        panels = list(panels.values())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["entity_id", "date", "channel", "count"])
    for panel in panels:
        for w in range(panel.n_weeks):
            day = panel.start_date + timedelta(weeks=w)
            writer.writerow([panel.entity_id, day.isoformat(), "social",
                             int(panel.social[w])])
            writer.writerow([panel.entity_id, day.isoformat(), "broadcast",
                             int(panel.broadcast[w])])
    Path(path).write_text(buf.getvalue())


def write_ground_truth(labels, path):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["entity_id", "is_breakout"])
    for entity_id in sorted(labels):
        writer.writerow([entity_id, "true" if labels[entity_id] else "false"])
    Path(path).write_text(buf.getvalue())


def read_ground_truth(path):
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["entity_id", "is_breakout"]:
        raise ValidationError(f"unexpected ground-truth header: {header}")
    labels = {}
    for rec in reader:
        if not rec:
            continue
        if rec[1] not in ("true", "false"):
            raise ValidationError(f"bad is_breakout value: {rec[1]!r}")
        labels[rec[0]] = rec[1] == "true"
    return labels
