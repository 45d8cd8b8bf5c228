import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from carskit.errors import ConfigError, DataError
from carskit.spectrum import make_grid
from carskit.synth import (
    LorentzianPeak,
    NoiseConfig,
    PeakSet,
    PolynomialNrb,
    SigmoidNrb,
    SynthConfig,
    cars_intensity,
    draw_pair,
    eval_nrb,
    eval_resonant_susceptibility,
    generate_dataset,
    pair_rng,
    sample_pair,
    split_indices,
    synth_cars,
)


class _Grid:
    """A grid holding arbitrary sample points, for closed-form checks."""

    def __init__(self, omega):
        self.omega = np.asarray(omega, dtype=np.float64)
        self.n_channels = len(self.omega)


def test_on_resonance_value():
    chi = eval_resonant_susceptibility(PeakSet((LorentzianPeak(1.0, 0.5, 0.01),)), _Grid([0.5, 0.51]))
    assert chi[0] == pytest.approx(100j)
    assert chi[1] == pytest.approx(-50 + 50j)


def test_peaks_add_channelwise():
    g = make_grid(64)
    p1 = PeakSet((LorentzianPeak(0.3, 0.2, 0.01),))
    p2 = PeakSet((LorentzianPeak(0.9, 0.7, 0.004),))
    np.testing.assert_allclose(
        eval_resonant_susceptibility(p1 | p2, g),
        eval_resonant_susceptibility(p1, g) + eval_resonant_susceptibility(p2, g),
    )


@given(st.floats(0.01, 1), st.floats(0.05, 0.95), st.floats(0.002, 0.05))
def test_imaginary_part_positive(a, om, gam):
    chi = eval_resonant_susceptibility(PeakSet((LorentzianPeak(a, om, gam),)), make_grid(128))
    assert np.all(chi.imag > 0)


@pytest.mark.parametrize("kw", [dict(amplitude=0, center=0.5, linewidth=0.01),
                                dict(amplitude=1, center=1.0, linewidth=0.01),
                                dict(amplitude=1, center=0.5, linewidth=0)])
def test_peak_invariants(kw):
    with pytest.raises(ConfigError):
        LorentzianPeak(**kw)


def test_nrb_examples():
    assert eval_nrb(SigmoidNrb(10, 0.2, 10, 0.8), _Grid([0.2]))[0] == pytest.approx(0.5 / (1 + math.exp(-6)))
    assert 0.5 / (1 + math.exp(-6)) == pytest.approx(0.49876, abs=1e-5)
    np.testing.assert_allclose(eval_nrb(PolynomialNrb(0, 0, 0, 0, 0.7), make_grid(16)), 0.7)
    # e - w crosses zero: the negative tail is clamped
    out = eval_nrb(PolynomialNrb(0, 0, 0, -1.0, 0.5), make_grid(16))
    assert out.min() == 0.0 and np.all(out[make_grid(16).omega > 0.5] == 0.0)


def test_sigmoid_invariants():
    with pytest.raises(ConfigError):
        SigmoidNrb(10, 0.8, 10, 0.2)
    with pytest.raises(ConfigError):
        SigmoidNrb(0, 0.1, 10, 0.9)
    with pytest.raises(ConfigError):
        NoiseConfig(-0.1)


def test_intensity_examples():
    n = np.linspace(0.1, 1.0, 8)
    np.testing.assert_allclose(cars_intensity(np.zeros(8, complex), n), n**2)
    chi = np.zeros(8, complex)
    chi[3] = 100j
    assert cars_intensity(chi, np.zeros(8))[3] == pytest.approx(10000)
    rng = np.random.default_rng(3)
    chi = rng.normal(size=8) + 1j * rng.normal(size=8)
    np.testing.assert_allclose(cars_intensity(chi, n), (chi.real + n) ** 2 + chi.imag**2)
    np.testing.assert_allclose(cars_intensity(chi, n), np.abs(chi + n) ** 2)
    with pytest.raises(DataError):
        cars_intensity(chi, n[:5])


def test_synth_cars_normalized():
    chi = eval_resonant_susceptibility(PeakSet((LorentzianPeak(0.5, 0.4, 0.01),)), make_grid(64))
    out = synth_cars(chi, np.ones(64))
    assert out.min() == 0.0 and out.max() == 1.0


def test_pair_determinism_and_invariants():
    cfg, g = SynthConfig(), make_grid(128)
    a = sample_pair(cfg, pair_rng(7, 3), g)
    b = sample_pair(cfg, pair_rng(7, 3), g)
    np.testing.assert_array_equal(a.cars, b.cars)
    np.testing.assert_array_equal(a.raman_true, b.raman_true)
    for arr in (a.cars, a.raman_true):
        assert arr.min() == 0.0 and arr.max() == 1.0
    assert a.nrb_true.min() >= 0.0


def test_noiseless_reproducible():
    cfg = SynthConfig(noise=NoiseConfig(0.0))
    g = make_grid(64)
    a = [sample_pair(cfg, pair_rng(1, i), g).cars for i in range(3)]
    b = [sample_pair(cfg, pair_rng(1, i), g).cars for i in range(3)]
    for x, y in zip(a, b):
        assert x.tobytes() == y.tobytes()


def _count_peaks(y):
    half = 0.5 * y.max()
    interior = (y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:]) & (y[1:-1] > half)
    return int(interior.sum())


def test_single_peak_label_has_one_maximum():
    cfg = SynthConfig(n_peaks_range=(1, 1))
    g = make_grid(640)
    for i in range(20):
        assert _count_peaks(sample_pair(cfg, pair_rng(11, i), g).raman_true) == 1


def test_draw_records_parameters():
    d = draw_pair(SynthConfig(resonant_scale="none"), pair_rng(0, 0), make_grid(64))
    np.testing.assert_allclose(d.chi_r, eval_resonant_susceptibility(d.peaks, make_grid(64)))
    assert 1 <= len(d.peaks) <= 15


def test_split_counts():
    tr, ev = split_indices(2000, 0)
    assert len(tr) == 1600 and len(ev) == 400
    assert len(np.intersect1d(tr, ev)) == 0
    assert np.array_equal(np.union1d(tr, ev), np.arange(2000))


def test_dataset_determinism_and_seed_sensitivity():
    g = make_grid(64)
    a = generate_dataset(10, SynthConfig(seed=4), g)
    b = generate_dataset(10, SynthConfig(seed=4), g)
    for p, q in zip(a.pairs, b.pairs):
        assert p.cars.tobytes() == q.cars.tobytes()
    c = generate_dataset(5, SynthConfig(seed=5), g)
    assert max(np.abs(p.cars - q.cars).max() for p, q in zip(a.pairs[:5], c.pairs)) > 0


def test_pair_streams_order_independent():
    g = make_grid(64)
    full = generate_dataset(6, SynthConfig(seed=9), g)
    alone = sample_pair(SynthConfig(seed=9), pair_rng(9, 4), g)
    np.testing.assert_array_equal(full.pairs[4].cars, alone.cars)


def test_config_round_trip_and_errors():
    cfg = SynthConfig(n_peaks_range=(2, 4), seed=3)
    assert SynthConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        SynthConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        SynthConfig(amplitude_range=(1.0, 0.5))
    with pytest.raises(ConfigError):
        SynthConfig(p_sigmoid=1.5)
    with pytest.raises(ConfigError):
        generate_dataset(0, SynthConfig())
