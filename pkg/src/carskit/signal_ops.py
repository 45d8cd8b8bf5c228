"""Linear spectral operators used by the physics losses.

All transforms act along the last axis, so batches of spectra are handled
in one call.
"""
from __future__ import annotations

import enum

import numpy as np

from .errors import DataError
from .spectrum import WavenumberGrid


class LinearOpTag(enum.Enum):
    HILBERT_IMAG = "hilbert_imag"
    FIRST_DIFFERENCE = "first_difference"


def _analytic_mask(n: int) -> np.ndarray:
    h = np.zeros(n)
    h[0] = 1.0
    h[n // 2] = 1.0
    h[1 : n // 2] = 2.0
    return h


def hilbert_imag(x: np.ndarray) -> np.ndarray:
    """Imaginary part of the discrete analytic signal of ``x``.

    Negative-frequency bins are zeroed, strictly positive ones doubled, DC
    and Nyquist kept. With this convention ``cos -> sin`` and the real part
    of a Lorentzian ``A / (Omega - w - i*gamma)`` maps onto its (positive)
    imaginary part, which is what the Kramers-Kronig loss relies on.
    The transform is periodic over the grid: no padding or windowing.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n % 2:
        raise DataError(f"hilbert_imag needs an even length, got {n}")
    spec = np.fft.fft(x, axis=-1)
    return np.fft.ifft(spec * _analytic_mask(n), axis=-1).imag


def hilbert_imag_adjoint(g: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`hilbert_imag`; the operator is antisymmetric, so this is ``-H``."""
    return -hilbert_imag(g)


def first_difference(x: np.ndarray) -> np.ndarray:
    """Forward difference ``x[i+1] - x[i]``; output is one channel shorter.

    Not divided by the grid spacing.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 2:
        raise DataError("first_difference needs at least 2 channels")
    return np.diff(x, axis=-1)


def first_difference_adjoint(g: np.ndarray) -> np.ndarray:
    """Transpose of the forward-difference stencil (length n-1 -> n)."""
    g = np.asarray(g, dtype=np.float64)
    pad = [(0, 0)] * (g.ndim - 1)
    return np.pad(g, pad + [(1, 0)]) - np.pad(g, pad + [(0, 1)])


def apply(tag: LinearOpTag, x: np.ndarray) -> np.ndarray:
    if tag is LinearOpTag.HILBERT_IMAG:
        return hilbert_imag(x)
    return first_difference(x)


def apply_adjoint(tag: LinearOpTag, g: np.ndarray) -> np.ndarray:
    if tag is LinearOpTag.HILBERT_IMAG:
        return hilbert_imag_adjoint(g)
    return first_difference_adjoint(g)


def resample_linear(values, source_axis, target_grid: WavenumberGrid) -> np.ndarray:
    """Interpolate onto ``target_grid`` after mapping ``source_axis`` onto [0, 1].

    The source axis is stretched affinely so its first and last samples land
    on omega = 0 and omega = 1; targets outside are edge-held.
    """
    values = np.asarray(values, dtype=np.float64)
    axis = np.asarray(source_axis, dtype=np.float64)
    if axis.ndim != 1 or axis.size < 2 or axis.size != values.size:
        raise DataError("source axis and values must be 1-D with matching length >= 2")
    if np.any(np.diff(axis) <= 0):
        raise DataError("source axis must be strictly increasing")
    unit = (axis - axis[0]) / (axis[-1] - axis[0])
    unit[-1] = 1.0
    return np.interp(target_grid.omega, unit, values)
