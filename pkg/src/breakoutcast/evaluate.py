"""Regression metrics, breakout labeling, ranking metrics, and reports.

A breakout compares the predicted (or actual) future-month average social
count beta against the input-window average gamma: the label is true when
beta / gamma >= threshold (default 1.2).  Entities with gamma = 0 have
undefined ratios; they are excluded from rankings and counted separately.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np

from breakoutcast.errors import ValidationError

DEFAULT_K = 500
DEFAULT_THRESHOLD = 1.2

RECALL_TOPK = "topk"
RECALL_ALL_POSITIVES = "all-positives"
RECALL_MODES = (RECALL_TOPK, RECALL_ALL_POSITIVES)

CSV_HEADER = (
    "model,mae,rmse,precision_at_k,recall_at_k,n_predicted_breakouts,n_excluded"
)


def mae_rmse(predicted, actual):
    """(mean absolute error, root mean squared error); rmse >= mae always."""
    p = np.asarray(predicted, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.ndim != 1 or p.shape != a.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {a.shape}")
    if p.size == 0:
        raise ValueError("empty inputs")
    err = p - a
    return float(np.mean(np.abs(err))), float(np.sqrt(np.mean(err * err)))


@dataclass(frozen=True)
class BreakoutAssessment:
    """Breakout ratios and labels for one entity's test window.

    ratio_* is None when gamma = 0 (undefined); labels are then False.
    """

    entity_id: str
    gamma: float
    beta_actual: float
    beta_predicted: float
    ratio_actual: float | None
    ratio_predicted: float | None
    label_actual: bool
    label_predicted: bool


def assess_breakout(sample, predicted, threshold=DEFAULT_THRESHOLD):
    """Label one window; predicted is the model's future-month social mean."""
    gamma = sample.gamma
    beta_actual = float(sample.target)
    beta_predicted = max(float(predicted), 0.0)  # counts cannot go negative
    if gamma > 0.0:
        ratio_actual = beta_actual / gamma
        ratio_predicted = beta_predicted / gamma
        return BreakoutAssessment(
            entity_id=sample.entity_id,
            gamma=gamma,
            beta_actual=beta_actual,
            beta_predicted=beta_predicted,
            ratio_actual=ratio_actual,
            ratio_predicted=ratio_predicted,
            label_actual=ratio_actual >= threshold,
            label_predicted=ratio_predicted >= threshold,
        )
    return BreakoutAssessment(
        entity_id=sample.entity_id,
        gamma=gamma,
        beta_actual=beta_actual,
        beta_predicted=beta_predicted,
        ratio_actual=None,
        ratio_predicted=None,
        label_actual=False,
        label_predicted=False,
    )


def _defined(assessments):
    return [a for a in assessments if a.ratio_predicted is not None]


def precision_at_k(assessments, k):
    """Fraction of the predicted-ratio top k that actually broke out.

    Ties in the predicted ratio break by entity_id so the value is
    invariant under input permutation.  With fewer than k defined ratios
    the top-all is used; callers should surface that via the report flag.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(_defined(assessments), key=lambda a: (-a.ratio_predicted, a.entity_id))
    if not ranked:
        raise ValueError("no assessments with defined ratios")
    top = ranked[:k]
    return sum(a.label_actual for a in top) / len(top)


def recall_at_k(assessments, k):
    """Fraction of the actual-ratio top k that the model flags as breakout."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(_defined(assessments), key=lambda a: (-a.ratio_actual, a.entity_id))
    if not ranked:
        raise ValueError("no assessments with defined ratios")
    top = ranked[:k]
    return sum(a.label_predicted for a in top) / len(top)


def recall_all_positives(assessments):
    """Fraction of all actual breakouts the model flags; 0 when none exist."""
    positives = [a for a in _defined(assessments) if a.label_actual]
    if not positives:
        return 0.0
    return sum(a.label_predicted for a in positives) / len(positives)


@dataclass(frozen=True)
class ModelRow:
    model_name: str
    mae: float
    rmse: float
    precision_at_k: float
    recall_at_k: float
    n_predicted_breakouts: int
    n_excluded_gamma_zero: int


@dataclass(frozen=True)
class EvalReport:
    rows: tuple
    k: int
    k_used: int
    threshold: float
    recall_mode: str = RECALL_TOPK

    @property
    def k_truncated(self):
        return self.k_used < self.k


def build_report(model_results, test_samples, k=DEFAULT_K,
                 threshold=DEFAULT_THRESHOLD, recall_mode=RECALL_TOPK):
    """One metrics row per model over a shared set of test windows.

    model_results maps model name to a prediction sequence aligned with
    test_samples; row order follows the mapping order.
    """
    if recall_mode not in RECALL_MODES:
        raise ValueError(f"recall_mode must be one of {RECALL_MODES}")
    n = len(test_samples)
    if n == 0:
        raise ValueError("no test samples")
    targets = np.array([s.target for s in test_samples], dtype=np.float64)
    rows = []
    k_used = None
    for name, predictions in model_results.items():
        preds = np.asarray(predictions, dtype=np.float64)
        if preds.shape != (n,):
            raise ValueError(
                f"model {name!r}: expected {n} predictions, got shape {preds.shape}"
            )
        mae, rmse = mae_rmse(preds, targets)
        assessments = [
            assess_breakout(s, p, threshold) for s, p in zip(test_samples, preds)
        ]
        n_defined = len(_defined(assessments))
        if n_defined == 0:
            raise ValueError("every test window has gamma = 0")
        k_used = min(k, n_defined)
        if recall_mode == RECALL_TOPK:
            recall = recall_at_k(assessments, k)
        else:
            recall = recall_all_positives(assessments)
        rows.append(
            ModelRow(
                model_name=name,
                mae=mae,
                rmse=rmse,
                precision_at_k=precision_at_k(assessments, k),
                recall_at_k=recall,
                n_predicted_breakouts=sum(a.label_predicted for a in assessments),
                n_excluded_gamma_zero=n - n_defined,
            )
        )
    if not rows:
        raise ValueError("no models to report")
    return EvalReport(rows=tuple(rows), k=k, k_used=k_used, threshold=threshold,
                      recall_mode=recall_mode)


def format_report_text(report):
    """Aligned plain-text table in the two-decimal MAE/RMSE style."""
    if report.recall_mode == RECALL_TOPK:
        recall_header = f"Recall top {report.k}"
    else:
        recall_header = "Recall (all positives)"
    headers = (
        "Model", "MAE", "RMSE",
        f"Precision top {report.k}", recall_header,
        "Predicted breakouts", "Excluded (gamma=0)",
    )
    cells = [
        (
            row.model_name,
            f"{row.mae:.2f}",
            f"{row.rmse:.2f}",
            f"{100.0 * row.precision_at_k:.1f}%",
            f"{100.0 * row.recall_at_k:.1f}%",
            str(row.n_predicted_breakouts),
            str(row.n_excluded_gamma_zero),
        )
        for row in report.rows
    ]
    widths = [
        max(len(headers[c]), max((len(r[c]) for r in cells), default=0))
        for c in range(len(headers))
    ]

    def render(parts):
        first = parts[0].ljust(widths[0])
        rest = [p.rjust(w) for p, w in zip(parts[1:], widths[1:])]
        return "  ".join([first] + rest).rstrip()

    lines = [
        f"k = {report.k}, breakout threshold = {report.threshold:g}",
        render(headers),
    ]
    lines += [render(r) for r in cells]
    if report.k_truncated:
        lines.append(
            f"note: only {report.k_used} entities had defined ratios; "
            f"top-{report.k} metrics use all of them"
        )
    return "\n".join(lines) + "\n"


def format_report_csv(report):
    """Machine-readable rows; floats use shortest exact representation."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER.split(","))
    for row in report.rows:
        writer.writerow(
            [
                row.model_name,
                repr(row.mae),
                repr(row.rmse),
                repr(row.precision_at_k),
                repr(row.recall_at_k),
                row.n_predicted_breakouts,
                row.n_excluded_gamma_zero,
            ]
        )
    return buf.getvalue()


def parse_report_csv(text):
    """Rows of a report CSV back as typed dicts (round-trip of format_report_csv)."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("empty report CSV") from None
    if header != CSV_HEADER.split(","):
        raise ValidationError(f"unexpected report header: {header}")
    rows = []
    for rec in reader:
        if not rec:
            continue
        rows.append(
            {
                "model": rec[0],
                "mae": float(rec[1]),
                "rmse": float(rec[2]),
                "precision_at_k": float(rec[3]),
                "recall_at_k": float(rec[4]),
                "n_predicted_breakouts": int(rec[5]),
                "n_excluded": int(rec[6]),
            }
        )
    return rows


def ranking_table(assessments):
    """Entities by predicted breakout ratio, descending; undefined ratios last.

    Returns rows (entity_id, ratio_predicted, beta_predicted, gamma,
    label_predicted); used by the rank command.
    """
    defined = sorted(_defined(assessments), key=lambda a: (-a.ratio_predicted, a.entity_id))
    undefined = sorted(
        (a for a in assessments if a.ratio_predicted is None),
        key=lambda a: a.entity_id,
    )
    return [
        (a.entity_id, a.ratio_predicted, a.beta_predicted, a.gamma, a.label_predicted)
        for a in defined + undefined
    ]
