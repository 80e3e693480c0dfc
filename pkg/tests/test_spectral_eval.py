"""
Tests for PSD estimation, residual noise and the noise ratio
"""
import numpy as np
import pytest

from dsp.noise_synth import NoiseSpec, calibrate_noise_gain, synthesize_mcg
from dsp.signal_core import EcgCycle, SampledSignal, moving_average, precondition_cycle
from dsp.spectral_eval import (
    NoiseRatioCurve,
    PsdEstimate,
    PsdSettings,
    average_psds,
    averaged_noise_psd,
    band_mean,
    knee_frequency,
    loglog_slope,
    noise_ratio,
    psd_estimate,
    residual_noise,
)
from utils.error_handler import (
    EXIT_GRID_MISMATCH,
    AppException,
    EmptyBand,
    GridMismatch,
    InsufficientBins,
    LengthMismatch,
    NonpositiveDensity,
    SignalTooShort,
)

FS = 2000.0


def _estimate(freqs, density, fs=FS):
    return PsdEstimate(frequencies=np.asarray(freqs, dtype=float), density=np.asarray(density, dtype=float),
                       sample_rate=fs, segment_length=512, window="hann", overlap=0.5)


class TestPsdEstimate:
    """Welch estimates of known signals"""

    def test_sine_power(self):
        t = np.arange(3008) / FS
        est = psd_estimate(SampledSignal(np.sin(2 * np.pi * 250.0 * t), FS))
        assert est.total_power() == pytest.approx(0.5, rel=0.05)
        assert est.frequencies[np.argmax(est.density)] == pytest.approx(250.0)

    def test_white_noise_level(self):
        rng = np.random.default_rng(1)
        level = 2.0 / FS
        total = None
        for _ in range(100):
            est = psd_estimate(SampledSignal(rng.standard_normal(3008), FS))
            total = est.density.copy() if total is None else total + est.density
        inner = total[1:-1] / 100
        assert np.median(inner) == pytest.approx(level, rel=0.10)
        assert np.all(np.abs(inner / level - 1.0) < 0.25)

    def test_integral_matches_variance(self):
        x = np.random.default_rng(2).standard_normal(2 ** 16)
        est = psd_estimate(SampledSignal(x, FS), PsdSettings(segment_length=1024))
        assert est.total_power() == pytest.approx(np.var(x), rel=0.03)

    def test_grid(self):
        est = psd_estimate(SampledSignal(np.ones(1024), FS))
        assert est.frequencies.size == 257
        assert est.frequencies[-1] == FS / 2
        assert est.normalized_frequencies[-1] == 0.5
        assert (est.segment_length, est.window, est.overlap) == (512, "hann", 0.5)

    def test_too_short(self):
        with pytest.raises(SignalTooShort):
            psd_estimate(SampledSignal(np.ones(100), FS))

    def test_invalid_settings(self):
        with pytest.raises(ValueError):
            PsdSettings(overlap=1.0)
        with pytest.raises(ValueError):
            PsdSettings(segment_length=4)

    def test_negative_density_rejected(self):
        with pytest.raises(AppException):
            _estimate([0.0, 1.0], [1.0, -1.0])


class TestResidualNoise:
    """Output minus aligned truth"""

    def test_alignment(self):
        truth = EcgCycle(SampledSignal(np.arange(10.0), FS), "row000000")
        out = residual_noise(SampledSignal([5.0, 6.0, 7.0], FS), truth, alignment=4)
        assert out.samples.tolist() == [1.0, 1.0, 1.0]

    def test_output_outside_truth(self):
        truth = EcgCycle(SampledSignal(np.arange(10.0), FS), "row000000")
        with pytest.raises(LengthMismatch):
            residual_noise(SampledSignal(np.zeros(8), FS), truth, alignment=3)

    def test_averaged_noise_psd(self):
        rng = np.random.default_rng(3)
        pairs = []
        expected = []
        for k in range(3):
            truth = EcgCycle(SampledSignal(np.sin(np.arange(1100) / 30.0), FS), f"row{k:06d}")
            noise = rng.standard_normal(1100 - 49)
            output = SampledSignal(truth.signal.samples[49:] + noise, FS)
            pairs.append((output, truth))
            expected.append(psd_estimate(SampledSignal(noise, FS)))
        avg = averaged_noise_psd(pairs, alignment=49)
        np.testing.assert_allclose(avg.density, average_psds(expected).density, rtol=1e-9, atol=1e-15)

    def test_order_does_not_matter(self, rng):
        pairs = []
        for k in range(4):
            truth = EcgCycle(SampledSignal(rng.normal(size=700), FS), f"row{k:06d}")
            pairs.append((SampledSignal(rng.normal(size=600), FS), truth))
        settings = PsdSettings(segment_length=128)
        forward = averaged_noise_psd(pairs, 50, settings)
        backward = averaged_noise_psd(pairs[::-1], 50, settings)
        np.testing.assert_allclose(forward.density, backward.density, rtol=1e-12, atol=0)

    def test_duplicates_equal_single_copy(self, rng):
        truth = EcgCycle(SampledSignal(rng.normal(size=700), FS), "row000000")
        pair = (SampledSignal(rng.normal(size=650), FS), truth)
        settings = PsdSettings(segment_length=128)
        single = averaged_noise_psd([pair], 10, settings)
        repeated = averaged_noise_psd([pair] * 10, 10, settings)
        np.testing.assert_allclose(repeated.density, single.density, rtol=1e-12, atol=0)

    def test_flat_residuals_average_to_known_level(self, rng):
        sigma2 = 1e-15
        truth = EcgCycle(SampledSignal(np.sin(np.arange(4096) / 40.0), FS), "row000000")
        pairs = [(truth.signal.with_samples(truth.signal.samples + rng.normal(scale=np.sqrt(sigma2), size=4096)), truth)
                 for _ in range(200)]
        avg = averaged_noise_psd(pairs, 0)
        inner = avg.density[1:-1]
        assert np.all(np.abs(inner / (2.0 * sigma2 / FS) - 1.0) < 0.10)

    def test_unequal_lengths(self):
        truth = EcgCycle(SampledSignal(np.zeros(2000), FS), "row000000")
        pairs = [(SampledSignal(np.ones(1000), FS), truth), (SampledSignal(np.ones(1001), FS), truth)]
        with pytest.raises(LengthMismatch):
            averaged_noise_psd(pairs, alignment=0)


class TestNoiseRatio:
    """Ratio curve and its band mean"""

    def test_ratio_and_undefined_bins(self):
        pred = _estimate([0.0, 100.0, 200.0], [1.0, 2.0, 3.0])
        ma = _estimate([0.0, 100.0, 200.0], [0.0, 4.0, 3.0])
        curve = noise_ratio(pred, ma)
        assert np.isnan(curve.ratio[0])
        assert curve.ratio[1:].tolist() == [0.5, 1.0]
        assert curve.f_norm.tolist() == [0.0, 0.05, 0.1]

    def test_self_ratio_is_one(self):
        est = _estimate([10.0, 20.0, 30.0], [0.3, 0.2, 0.1])
        assert np.all(noise_ratio(est, est).ratio == 1.0)

    def test_grid_mismatch(self):
        a = _estimate([0.0, 1.0], [1.0, 1.0])
        b = _estimate([0.0, 2.0], [1.0, 1.0])
        with pytest.raises(GridMismatch) as exc:
            noise_ratio(a, b)
        assert exc.value.exit_code == EXIT_GRID_MISMATCH
        with pytest.raises(GridMismatch):
            average_psds([a, b])

    def test_band_mean(self):
        curve = NoiseRatioCurve(f_norm=np.array([0.01, 0.02, 0.03, 0.05, 0.06]),
                                ratio=np.array([9.0, 1.0, np.nan, 3.0, 9.0]))
        assert band_mean(curve, 0.02, 0.05) == 2.0

    def test_band_errors(self):
        curve = NoiseRatioCurve(f_norm=np.array([0.01, 0.2]), ratio=np.array([1.0, 1.0]))
        with pytest.raises(EmptyBand):
            band_mean(curve, 0.05, 0.02)
        with pytest.raises(EmptyBand):
            band_mean(curve, 0.02, 0.05)


class TestSlopeAndKnee:
    """Log-log slope fit and knee location"""

    def test_exact_power_law(self):
        f = np.arange(1.0, 101.0)
        assert loglog_slope(_estimate(f, 3.0 / f), 2.5, 25.0) == pytest.approx(-1.0, abs=1e-12)

    def test_too_few_bins(self):
        f = np.arange(1.0, 101.0)
        with pytest.raises(InsufficientBins):
            loglog_slope(_estimate(f, 1.0 / f), 2.5, 5.0)

    def test_zero_density(self):
        f = np.arange(1.0, 101.0)
        density = 1.0 / f
        density[10] = 0.0
        with pytest.raises(NonpositiveDensity):
            loglog_slope(_estimate(f, density), 2.5, 25.0)

    def test_knee(self):
        f = np.arange(1.0, 1001.0)
        est = _estimate(f, np.maximum(100.0 / f, 1.0))
        assert knee_frequency(est, plateau_lo=500.0, tolerance=0.1) == 91.0

    def test_knee_without_plateau(self):
        f = np.arange(1.0, 100.0)
        assert knee_frequency(_estimate(f, 1.0 / f), plateau_lo=500.0) is None

    def test_flat_spectrum_knee_is_first_bin(self):
        f = np.arange(1.0, 1001.0)
        assert knee_frequency(_estimate(f, np.ones(f.size)), plateau_lo=500.0) == 1.0


class TestBandComparison:
    """Where the moving average loses: sharp QRS energy in f/fs in [0.02, 0.05]"""

    def test_unfiltered_input_beats_moving_average_in_band(self, make_beat):
        ecg = precondition_cycle(make_beat(400, qrs_width=0.003, next_r=0.9), "row000000")
        spec = NoiseSpec(rms_ratio=0.05, seed=3)
        spec = spec.model_copy(update={"noise_gain": calibrate_noise_gain([ecg], spec)})
        identity, averaged = [], []
        for realization in range(5):
            mcg = synthesize_mcg(ecg, spec, realization=realization)
            identity.append((mcg.signal.with_samples(mcg.signal.samples[49:]), ecg))
            averaged.append((moving_average(mcg.signal, 50), ecg))
        curve = noise_ratio(averaged_noise_psd(identity, 49), averaged_noise_psd(averaged, 49))
        assert band_mean(curve, 0.02, 0.05) < 0.5
