"""Shared regressor contract and feature assembly for the pooled models.

Every model trains on all entities at once.  Features are the flattened
input window: the L social values first, then the L broadcast values.
Social-only variants drop the broadcast half and must behave identically
when broadcast inputs change.
"""

from abc import ABC, abstractmethod

import numpy as np

from breakoutcast.errors import ContractError


def feature_matrix(samples, social_only=False):
    """(n, L) or (n, 2L) float64 matrix, social columns first."""
    if len(samples) == 0:
        raise ValueError("no samples")
    social = np.stack([s.input_social for s in samples]).astype(np.float64)
    if social_only:
        return social
    broadcast = np.stack([s.input_broadcast for s in samples]).astype(np.float64)
    return np.hstack([social, broadcast])


def sequence_tensor(samples, social_only=False):
    """(n, L, channels) tensor for sequence models; channel 0 is social."""
    if len(samples) == 0:
        raise ValueError("no samples")
    social = np.stack([s.input_social for s in samples]).astype(np.float64)
    if social_only:
        return social[:, :, None]
    broadcast = np.stack([s.input_broadcast for s in samples]).astype(np.float64)
    return np.stack([social, broadcast], axis=2)


def check_window_length(samples, expected):
    for s in samples:
        if s.window_length != expected:
            raise ContractError(
                f"sample window length {s.window_length} does not match "
                f"the trained layout ({expected})"
            )


class Regressor(ABC):
    """fit(dataset) then predict(samples); deterministic given config + seed."""

    name = "regressor"
    kind = "regressor"

    def __init__(self, social_only=False, seed=0):
        self.social_only = bool(social_only)
        self.seed = int(seed)
        self.window_length_ = None

    @property
    def fitted(self):
        return self.window_length_ is not None

    def _check_fitted(self):
        if not self.fitted:
            raise ContractError(f"{self.name} used before fit")

    @abstractmethod
    def fit(self, dataset):
        """Train on a SupervisedDataset; returns self."""

    @abstractmethod
    def predict(self, samples):
        """One predicted future-month social mean (original units) per sample."""

    @abstractmethod
    def state_dict(self):
        """JSON-serializable state for exact round-tripping."""

    @classmethod
    @abstractmethod
    def from_state(cls, state):
        """Rebuild a fitted model from state_dict output."""
