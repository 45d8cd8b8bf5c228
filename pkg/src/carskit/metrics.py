"""Scores for Gaussian predictive distributions.

Every metric pools all (spectrum, channel) points; ``per_spectrum``
variants return one value per row for spread estimates.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .errors import DataError
from .spectrum import VARIANCE_FLOOR, PredictiveDistribution

DEFAULT_LEVELS = np.round(np.arange(1, 20) * 0.05, 10)
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class CalibrationCurve:
    levels: np.ndarray
    empirical_coverage: np.ndarray

    def __post_init__(self):
        if self.levels.shape != self.empirical_coverage.shape:
            raise DataError("levels and coverage must have equal length")
        if np.any(np.diff(self.levels) <= 0):
            raise DataError("calibration levels must be strictly ascending")

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["level", "coverage"])
            for p, c in zip(self.levels, self.empirical_coverage):
                writer.writerow([repr(float(p)), repr(float(c))])


def _arrays(pred: PredictiveDistribution, truth) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    y = np.asarray(truth, dtype=np.float64)
    mu = np.asarray(pred.mean, dtype=np.float64)
    var = np.maximum(np.asarray(pred.variance, dtype=np.float64), VARIANCE_FLOOR)
    if y.shape != mu.shape:
        raise DataError(f"prediction shape {mu.shape} does not match truth shape {y.shape}")
    if y.size == 0:
        raise DataError("no points to score")
    return y, mu, var


def gaussian_log_density(y, mu, var) -> np.ndarray:
    return -0.5 * (_LOG_2PI + np.log(var) + (y - mu) ** 2 / var)


def avg_log_likelihood(pred: PredictiveDistribution, truth) -> float:
    """Mean Gaussian log-density over every point."""
    y, mu, var = _arrays(pred, truth)
    return float(np.mean(gaussian_log_density(y, mu, var)))


def coverage(pred: PredictiveDistribution, truth, levels=DEFAULT_LEVELS) -> np.ndarray:
    """Fraction of points with ``y <= mu + sigma * z_p`` for every level ``p``."""
    y, mu, var = _arrays(pred, truth)
    levels = np.asarray(levels, dtype=np.float64)
    z = (y - mu) / np.sqrt(var)
    zs = np.sort(z.ravel())
    # y <= mu + sigma*q  <=>  z <= q
    return np.searchsorted(zs, ndtri(levels), side="right") / zs.size


def ece(pred: PredictiveDistribution, truth, levels=DEFAULT_LEVELS) -> tuple[float, CalibrationCurve]:
    """Mean absolute gap between quantile levels and their empirical coverage."""
    levels = np.asarray(levels, dtype=np.float64)
    if levels.size == 0:
        raise DataError("need at least one calibration level")
    cov = coverage(pred, truth, levels)
    return float(np.mean(np.abs(levels - cov))), CalibrationCurve(levels, cov)


def rmse(pred_mean, truth) -> float:
    mu = np.asarray(pred_mean, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    if mu.shape != y.shape:
        raise DataError(f"prediction shape {mu.shape} does not match truth shape {y.shape}")
    return float(np.sqrt(np.mean((mu - y) ** 2)))


def per_spectrum_scores(pred: PredictiveDistribution, truth, levels=DEFAULT_LEVELS) -> dict[str, np.ndarray]:
    """LL, ECE and RMSE computed separately for each row of a batch."""
    y, mu, var = _arrays(pred, truth)
    y, mu, var = np.atleast_2d(y), np.atleast_2d(mu), np.atleast_2d(var)
    ll = gaussian_log_density(y, mu, var).mean(axis=1)
    eces = np.array([ece(PredictiveDistribution(m, v), t, levels)[0] for m, v, t in zip(mu, var, y)])
    err = np.sqrt(((mu - y) ** 2).mean(axis=1))
    return {"ll": ll, "ece": eces, "rmse": err}


def score(pred: PredictiveDistribution, truth, levels=DEFAULT_LEVELS) -> dict[str, float]:
    value, _ = ece(pred, truth, levels)
    return {
        "ll": avg_log_likelihood(pred, truth),
        "ece": value,
        "rmse": rmse(pred.mean, truth),
    }
