"""Pooled supervised regressors behind one fit/predict contract."""

from breakoutcast.mlmodels.base import (
    Regressor,
    feature_matrix,
    sequence_tensor,
)
from breakoutcast.mlmodels.neural import (
    LstmRegressor,
    MlnnRegressor,
    fit_lstm,
    fit_mlnn,
)
from breakoutcast.mlmodels.serialize import load_model, save_model
from breakoutcast.mlmodels.trees import (
    GradientBoostedTrees,
    RandomForestRegressor,
    fit_gbt,
    fit_random_forest,
)

__all__ = [
    "Regressor",
    "feature_matrix",
    "sequence_tensor",
    "RandomForestRegressor",
    "GradientBoostedTrees",
    "MlnnRegressor",
    "LstmRegressor",
    "fit_random_forest",
    "fit_gbt",
    "fit_mlnn",
    "fit_lstm",
    "save_model",
    "load_model",
]
