"""Uncertainty-quantification strategies and their common entry points."""
from __future__ import annotations

from typing import Mapping, Union

import numpy as np

from ..errors import DataError
from ..spectrum import PredictiveDistribution
from .config import MethodParams, TrainConfig, UqMethod
from .gp import GpPredictor, gp_posterior, train_gp
from .neural import (
    BnnPredictor,
    EnsemblePredictor,
    McDropoutPredictor,
    NeuralPredictor,
    TrainingAborted,
    VariationalParam,
    kl_gaussian,
    moment_match,
    neural_from_state,
    train_neural,
)

TrainedPredictor = Union[NeuralPredictor, GpPredictor]

__all__ = [
    "BnnPredictor",
    "EnsemblePredictor",
    "GpPredictor",
    "McDropoutPredictor",
    "MethodParams",
    "TrainConfig",
    "TrainedPredictor",
    "TrainingAborted",
    "UqMethod",
    "VariationalParam",
    "gp_posterior",
    "kl_gaussian",
    "moment_match",
    "predict_dist",
    "predictor_from_state",
    "train",
]


def train(config: TrainConfig, cars: np.ndarray, raman: np.ndarray, log=None) -> TrainedPredictor:
    """Train one (method, physics) cell on stacked training spectra.

    ``log`` receives one dict per member and epoch with the loss breakdown.
    """
    cars = np.asarray(cars, dtype=np.float64)
    raman = np.asarray(raman, dtype=np.float64)
    if cars.ndim != 2 or cars.shape != raman.shape or len(cars) == 0:
        raise DataError("training data must be two equal, nonempty (n, n_channels) arrays")
    if config.method is UqMethod.GP_BASELINE:
        pred = train_gp(config, cars, raman)
    else:
        pred = train_neural(config, cars, raman, log)
    pred.n_channels = cars.shape[1]
    return pred


def predict_dist(predictor: TrainedPredictor, x) -> PredictiveDistribution:
    x = np.asarray(x, dtype=np.float64)
    expected = getattr(predictor, "n_channels", None)
    if expected is not None and x.shape[-1] != expected:
        raise DataError(f"input has {x.shape[-1]} channels, model expects {expected}")
    return predictor.predict(x)


def predictor_from_state(
    config: TrainConfig, state: Mapping[str, np.ndarray], n_channels: int | None = None
) -> TrainedPredictor:
    if config.method is UqMethod.GP_BASELINE:
        pred = GpPredictor.from_state(config, state)
    else:
        pred = neural_from_state(config, state)
    if n_channels is not None:
        pred.n_channels = n_channels
    return pred
