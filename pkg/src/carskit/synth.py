"""Synthetic CARS / Raman pair generation.

Resonances are a sum of complex Lorentzians, the non-resonant background
(NRB) is either a product of two logistic edges or a quartic polynomial,
and the CARS intensity is ``|chi_r + chi_nrb|^2`` plus Gaussian noise.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np

from .errors import ConfigError, DataError, DegenerateRangeError
from .spectrum import SpectralPair, WavenumberGrid, make_grid, minmax_normalize

MAX_RETRIES = 10


@dataclass(frozen=True)
class LorentzianPeak:
    amplitude: float
    center: float
    linewidth: float

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ConfigError(f"peak amplitude must be > 0, got {self.amplitude}")
        if not 0 < self.center < 1:
            raise ConfigError(f"peak center must lie in (0, 1), got {self.center}")
        if not self.linewidth > 0:
            raise ConfigError(f"peak linewidth must be > 0, got {self.linewidth}")


@dataclass(frozen=True)
class PeakSet:
    peaks: tuple[LorentzianPeak, ...]

    def __post_init__(self):
        if not self.peaks:
            raise ConfigError("a PeakSet needs at least one peak")

    def __len__(self):
        return len(self.peaks)

    def __or__(self, other: "PeakSet") -> "PeakSet":
        return PeakSet(self.peaks + other.peaks)


@dataclass(frozen=True)
class SigmoidNrb:
    b1: float
    c1: float
    b2: float
    c2: float

    def __post_init__(self):
        if not (self.b1 > 0 and self.b2 > 0):
            raise ConfigError("sigmoid steepness b1, b2 must be positive")
        if not self.c1 < self.c2:
            raise ConfigError("sigmoid rising edge c1 must precede falling edge c2")


@dataclass(frozen=True)
class PolynomialNrb:
    a: float
    b: float
    c: float
    d: float
    e: float

    @property
    def coefficients(self) -> tuple[float, ...]:
        return (self.a, self.b, self.c, self.d, self.e)


NrbParams = Union[SigmoidNrb, PolynomialNrb]


@dataclass(frozen=True)
class NoiseConfig:
    sigma_max: float = 0.01

    def __post_init__(self):
        if not self.sigma_max >= 0:
            raise ConfigError(f"noise sigma_max must be >= 0, got {self.sigma_max}")


def _interval(name, value, lo_bound=None):
    lo, hi = value
    if not lo <= hi:
        raise ConfigError(f"{name}: empty interval {value}")
    if lo_bound is not None and lo < lo_bound:
        raise ConfigError(f"{name}: lower end must be >= {lo_bound}")
    return (lo, hi)


@dataclass(frozen=True)
class SynthConfig:
    """Sampling ranges for one synthetic pair.

    ``resonant_scale="max"`` divides chi_r by its peak modulus before mixing
    with the background, so resonant and non-resonant terms have comparable
    magnitude. ``"none"`` keeps the raw Lorentzian sum.
    """

    n_peaks_range: tuple[int, int] = (1, 15)
    amplitude_range: tuple[float, float] = (0.01, 1.0)
    center_range: tuple[float, float] = (0.05, 0.95)
    gamma_range: tuple[float, float] = (0.002, 0.01)
    sigmoid_steepness_range: tuple[float, float] = (5.0, 30.0)
    sigmoid_c1_range: tuple[float, float] = (0.0, 0.4)
    sigmoid_c2_range: tuple[float, float] = (0.6, 1.0)
    polynomial_bounds: tuple[float, float] = (0.0, 1.5)
    p_sigmoid: float = 0.5
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    resonant_scale: str = "max"
    seed: int = 0

    def __post_init__(self):
        lo, hi = _interval("n_peaks_range", self.n_peaks_range, 1)
        object.__setattr__(self, "n_peaks_range", (int(lo), int(hi)))
        object.__setattr__(self, "amplitude_range", _interval("amplitude_range", self.amplitude_range))
        if self.amplitude_range[0] <= 0:
            raise ConfigError("amplitude_range must be positive")
        c = _interval("center_range", self.center_range)
        if not (0 < c[0] and c[1] < 1):
            raise ConfigError("center_range must lie inside (0, 1)")
        object.__setattr__(self, "center_range", c)
        object.__setattr__(self, "gamma_range", _interval("gamma_range", self.gamma_range))
        if self.gamma_range[0] <= 0:
            raise ConfigError("gamma_range must be positive")
        for name in ("sigmoid_steepness_range", "sigmoid_c1_range", "sigmoid_c2_range", "polynomial_bounds"):
            object.__setattr__(self, name, _interval(name, getattr(self, name)))
        if self.sigmoid_steepness_range[0] <= 0:
            raise ConfigError("sigmoid_steepness_range must be positive")
        if not 0 <= self.p_sigmoid <= 1:
            raise ConfigError(f"p_sigmoid must be a probability, got {self.p_sigmoid}")
        if isinstance(self.noise, dict):
            object.__setattr__(self, "noise", NoiseConfig(**self.noise))
        if self.resonant_scale not in ("max", "none"):
            raise ConfigError(f"resonant_scale must be 'max' or 'none', got {self.resonant_scale!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synth config fields: {sorted(unknown)}")
        kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()}
        return cls(**kw)


def eval_resonant_susceptibility(peaks: PeakSet, grid: WavenumberGrid) -> np.ndarray:
    """Complex Lorentzian sum ``sum_n A_n / (Omega_n - w - i*gamma_n)``."""
    w = grid.omega
    chi = np.zeros(grid.n_channels, dtype=np.complex128)
    for p in peaks.peaks:
        chi += p.amplitude / (p.center - w - 1j * p.linewidth)
    return chi


def eval_nrb(params: NrbParams, grid: WavenumberGrid) -> np.ndarray:
    w = grid.omega
    if isinstance(params, SigmoidNrb):
        rise = 1.0 / (1.0 + np.exp(-params.b1 * (w - params.c1)))
        fall = 1.0 / (1.0 + np.exp(params.b2 * (w - params.c2)))
        return rise * fall
    return np.maximum(np.polyval(params.coefficients, w), 0.0)


def cars_intensity(chi_r: np.ndarray, nrb: np.ndarray, noise_sigma: float = 0.0, rng=None) -> np.ndarray:
    """Un-normalized CARS intensity ``|chi_r + nrb|^2 + eps``."""
    if chi_r.shape != nrb.shape:
        raise DataError(
            f"chi_r length {chi_r.shape} does not match nrb length {nrb.shape}"
        )
    intensity = (chi_r.real + nrb) ** 2 + chi_r.imag**2
    if noise_sigma > 0:
        if rng is None:
            raise ConfigError("a random generator is required when noise_sigma > 0")
        intensity = intensity + rng.normal(0.0, noise_sigma, size=intensity.shape)
    return intensity


def synth_cars(chi_r: np.ndarray, nrb: np.ndarray, noise_sigma: float = 0.0, rng=None) -> np.ndarray:
    """Min-max normalized CARS spectrum built from a resonant and background part."""
    return minmax_normalize(cars_intensity(chi_r, nrb, noise_sigma, rng))


def pair_rng(seed: int, index: int) -> np.random.Generator:
    """Independent PCG64 stream for pair ``index``; order-independent by construction."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


def sample_peaks(config: SynthConfig, rng: np.random.Generator) -> PeakSet:
    lo, hi = config.n_peaks_range
    n = int(rng.integers(lo, hi + 1))
    amp = rng.uniform(*config.amplitude_range, size=n)
    cen = rng.uniform(*config.center_range, size=n)
    gam = rng.uniform(*config.gamma_range, size=n)
    return PeakSet(tuple(LorentzianPeak(float(a), float(c), float(g)) for a, c, g in zip(amp, cen, gam)))


def _sample_polynomial(config: SynthConfig, rng: np.random.Generator, grid: WavenumberGrid) -> PolynomialNrb:
    # Interpolate a quartic through 5 random knots inside the allowed band and
    # reject curves that overshoot it between knots.
    lo, hi = config.polynomial_bounds
    knots_x = np.linspace(0.0, 1.0, 5)
    for _ in range(1000):
        knots_y = rng.uniform(lo, hi, size=5)
        coef = np.polyfit(knots_x, knots_y, 4)
        vals = np.polyval(coef, grid.omega)
        if vals.min() >= lo and vals.max() <= hi:
            return PolynomialNrb(*(float(c) for c in coef))
    raise ConfigError("could not draw a polynomial background inside polynomial_bounds")


def sample_nrb(config: SynthConfig, rng: np.random.Generator, grid: WavenumberGrid) -> NrbParams:
    if rng.random() < config.p_sigmoid:
        b1, b2 = rng.uniform(*config.sigmoid_steepness_range, size=2)
        c1 = rng.uniform(*config.sigmoid_c1_range)
        c2 = rng.uniform(*config.sigmoid_c2_range)
        if c1 >= c2:
            c1, c2 = min(c1, c2), max(c1, c2) + 1e-9
        return SigmoidNrb(float(b1), float(c1), float(b2), float(c2))
    return _sample_polynomial(config, rng, grid)


@dataclass(frozen=True)
class PairDraw:
    """Everything drawn for one pair; kept for diagnostics and tests."""

    peaks: PeakSet
    nrb_params: NrbParams
    noise_sigma: float
    chi_r: np.ndarray
    nrb: np.ndarray
    pair: SpectralPair


def draw_pair(config: SynthConfig, rng: np.random.Generator, grid: WavenumberGrid) -> PairDraw:
    last_err = None
    for _ in range(MAX_RETRIES + 1):
        peaks = sample_peaks(config, rng)
        nrb_params = sample_nrb(config, rng, grid)
        sigma = float(rng.uniform(0.0, config.noise.sigma_max)) if config.noise.sigma_max > 0 else 0.0
        chi = eval_resonant_susceptibility(peaks, grid)
        if config.resonant_scale == "max":
            chi = chi / np.abs(chi).max()
        nrb = eval_nrb(nrb_params, grid)
        try:
            intensity = cars_intensity(chi, nrb, sigma, rng)
            lo, hi = intensity.min(), intensity.max()
            cars = minmax_normalize(intensity)
            raman = minmax_normalize(chi.imag)
        except DegenerateRangeError as err:
            last_err = err
            continue
        # background intensity mapped through the same affine normalization as cars
        nrb_true = np.maximum((nrb**2 - lo) / (hi - lo), 0.0)
        return PairDraw(peaks, nrb_params, sigma, chi, nrb, SpectralPair(cars, raman, nrb_true))
    raise DegenerateRangeError(f"degenerate spectrum after {MAX_RETRIES} retries: {last_err}")


def sample_pair(config: SynthConfig, rng: np.random.Generator, grid: WavenumberGrid | None = None) -> SpectralPair:
    return draw_pair(config, rng, grid or make_grid()).pair


@dataclass(frozen=True)
class Dataset:
    pairs: tuple[SpectralPair, ...]
    train_idx: np.ndarray
    eval_idx: np.ndarray
    seed: int

    def __len__(self):
        return len(self.pairs)

    def stack(self, idx=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(cars, raman_true, nrb_true)`` arrays of shape (n, n_channels)."""
        sel = range(len(self.pairs)) if idx is None else idx
        pairs = [self.pairs[i] for i in sel]
        return (
            np.stack([p.cars for p in pairs]),
            np.stack([p.raman_true for p in pairs]),
            np.stack([p.nrb_true for p in pairs]),
        )

    @property
    def train(self):
        return self.stack(self.train_idx)

    @property
    def eval(self):
        return self.stack(self.eval_idx)


def split_indices(n: int, seed: int, train_fraction: float = 0.8) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic train/eval split by a seeded permutation."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(2**32 - 1,))))
    perm = rng.permutation(n)
    n_train = int(round(train_fraction * n))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def generate_dataset(n: int, config: SynthConfig, grid: WavenumberGrid | None = None) -> Dataset:
    if n < 1:
        raise ConfigError(f"dataset size must be >= 1, got {n}")
    grid = grid or make_grid()
    pairs = tuple(sample_pair(config, pair_rng(config.seed, i), grid) for i in range(n))
    train_idx, eval_idx = split_indices(n, config.seed)
    return Dataset(pairs, train_idx, eval_idx, config.seed)
