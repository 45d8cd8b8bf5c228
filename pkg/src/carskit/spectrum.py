"""Shared spectral types and the discretization contract.

Spectra are plain ``float64`` numpy arrays on a uniform, normalized
wavenumber axis ``omega`` spanning ``[0, 1]``. Batches stack spectra along
the leading axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateRangeError

DEFAULT_N_CHANNELS = 640
VARIANCE_FLOOR = 1e-6
MIN_CHANNELS = 8


@dataclass(frozen=True)
class WavenumberGrid:
    n_channels: int
    omega: np.ndarray = field(repr=False)

    @property
    def spacing(self) -> float:
        return 1.0 / (self.n_channels - 1)


def make_grid(n_channels: int = DEFAULT_N_CHANNELS) -> WavenumberGrid:
    """Uniform grid of ``n_channels`` normalized Raman shifts on ``[0, 1]``.

    The FFT-based Hilbert transform needs an even length so that the Nyquist
    bin exists; odd or tiny grids are rejected.
    """
    if int(n_channels) != n_channels or n_channels < MIN_CHANNELS:
        raise DataError(f"n_channels must be an integer >= {MIN_CHANNELS}, got {n_channels}")
    if n_channels % 2:
        raise DataError(f"n_channels must be even, got {n_channels}")
    n = int(n_channels)
    omega = np.arange(n, dtype=np.float64) / (n - 1)
    omega.setflags(write=False)
    return WavenumberGrid(n, omega)


def as_spectrum(values, n_channels: int | None = None) -> np.ndarray:
    """Validate and convert to a finite float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DataError("spectrum contains non-finite values")
    if n_channels is not None and arr.shape[-1] != n_channels:
        raise DataError(f"spectrum has {arr.shape[-1]} channels, expected {n_channels}")
    return arr


def minmax_normalize(s) -> np.ndarray:
    """Affinely map a spectrum (or each row of a batch) onto ``[0, 1]``."""
    s = as_spectrum(s)
    lo = s.min(axis=-1, keepdims=True)
    hi = s.max(axis=-1, keepdims=True)
    span = hi - lo
    if np.any(span <= 0):
        raise DegenerateRangeError("cannot normalize a constant spectrum")
    return (s - lo) / span


@dataclass(frozen=True)
class SpectralPair:
    """One synthetic example: normalized CARS input plus its two labels.

    ``nrb_true`` is expressed in the same normalized-intensity units as
    ``cars`` so that ``cars - nrb_true`` is directly comparable to a
    predicted background.
    """

    cars: np.ndarray
    raman_true: np.ndarray
    nrb_true: np.ndarray

    def __post_init__(self):
        n = self.cars.shape[-1]
        for name in ("raman_true", "nrb_true"):
            if getattr(self, name).shape[-1] != n:
                raise DataError(f"{name} length differs from cars length {n}")

    @property
    def n_channels(self) -> int:
        return self.cars.shape[-1]


@dataclass(frozen=True)
class PredictiveDistribution:
    """Per-channel Gaussian prediction of the Raman spectrum.

    ``mean`` and ``variance`` share a shape, either ``(n_channels,)`` or
    ``(n_spectra, n_channels)``. ``nrb`` optionally carries the model's
    background estimate for plotting; it plays no role in scoring.
    """

    mean: np.ndarray
    variance: np.ndarray
    nrb: np.ndarray | None = None

    def __post_init__(self):
        if self.mean.shape != self.variance.shape:
            raise DataError(
                f"mean shape {self.mean.shape} != variance shape {self.variance.shape}"
            )

    def floored(self, floor: float = VARIANCE_FLOOR) -> "PredictiveDistribution":
        return PredictiveDistribution(self.mean, np.maximum(self.variance, floor), self.nrb)

    def __getitem__(self, idx) -> "PredictiveDistribution":
        nrb = None if self.nrb is None else self.nrb[idx]
        return PredictiveDistribution(self.mean[idx], self.variance[idx], nrb)
