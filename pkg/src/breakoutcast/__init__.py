"""Breakout forecasting for entities tracked by weekly social and broadcast counts.

Submodules:
  ingest       raw mention records -> weekly per-entity panels
  preprocess   stationarity tests, transforms, windowed datasets, splits
  classical    per-entity VAR/VARMA estimation and interval forecasts
  mlmodels     pooled RF/GBT/MLNN/LSTM regressors plus serialization
  evaluate     MAE/RMSE, breakout labels, precision@K/recall@K, reports
  synth        synthetic scenario generator and brute-force oracles
  pipeline     train/evaluate/rank orchestration
  cli          command-line entry point
"""

__version__ = "0.1.0"
