"""Shared builders for panels and supervised datasets."""

from datetime import date

import numpy as np
import pytest

from breakoutcast.ingest import WeeklyPanel
from breakoutcast.preprocess import (
    SupervisedDataset,
    WindowSample,
    fit_normalization,
)

START = date(2019, 3, 10)


def make_panel(entity_id, social, broadcast=None, start_date=START):
    social = np.asarray(social, dtype=np.float64)
    if broadcast is None:
        broadcast = np.zeros_like(social)
    return WeeklyPanel(
        entity_id=entity_id,
        start_date=start_date,
        social=social,
        broadcast=np.asarray(broadcast, dtype=np.float64),
    )


def make_dataset(social_rows, targets, broadcast_rows=None, month_weeks=4,
                 normalized=False, window_end_week=12):
    """Dataset from explicit window rows; broadcast defaults to zeros."""
    social_rows = np.asarray(social_rows, dtype=np.float64)
    if broadcast_rows is None:
        broadcast_rows = np.zeros_like(social_rows)
    else:
        broadcast_rows = np.asarray(broadcast_rows, dtype=np.float64)
    samples = [
        WindowSample(
            entity_id=f"e{i:04d}",
            input_social=social_rows[i].copy(),
            input_broadcast=broadcast_rows[i].copy(),
            target=float(targets[i]),
            window_end_week=window_end_week,
        )
        for i in range(social_rows.shape[0])
    ]
    dataset = SupervisedDataset(samples=samples, month_weeks=month_weeks)
    if normalized:
        dataset = dataset.with_normalization(fit_normalization(dataset.samples))
    return dataset


@pytest.fixture(scope="session")
def small_scenario():
    """30 entities x 45 weeks with defaults; shared by pipeline-level tests."""
    from breakoutcast import synth

    config = synth.ScenarioConfig(n_entities=30, seed=5)
    panels, truth = synth.generate(config)
    return config, panels, truth
