"""
Tests for white noise generation, knee shaping and MCG synthesis
"""
import numpy as np
import pytest

from dsp.noise_synth import (
    NoiseSpec,
    bin_frequencies,
    calibrate_noise_gain,
    expected_shaped_variance,
    gaussian_white,
    generate_dataset,
    resolve_noise_gain,
    shape_noise,
    synthesize_mcg,
    transfer_gain,
)
from dsp.signal_core import SampledSignal, rms
from dsp.spectral_eval import PsdEstimate, PsdSettings, loglog_slope, psd_estimate
from utils.error_handler import BadLength, InvalidSignal
from utils.seeding import cycle_noise_seed

FS = 2000.0
N = 3008
# sigma = 1 at FS
UNIT_PSD = 2.0 / FS


class TestTransferGain:
    """Knee transfer function values"""

    def test_value_below_knee(self):
        assert transfer_gain(25.0, 0.5, 250.0) == pytest.approx(np.sqrt(10.0), rel=1e-12)

    def test_unity_at_dc_knee_and_above(self):
        gains = transfer_gain(np.array([0.0, 250.0, 251.0, 1000.0]), 0.5, 250.0)
        assert gains.tolist() == [1.0, 1.0, 1.0, 1.0]

    def test_beta_zero_is_flat(self):
        gains = transfer_gain(np.linspace(0.0, 1000.0, 50), 0.0, 250.0)
        assert np.all(gains == 1.0)

    def test_negative_frequency_rejected(self):
        with pytest.raises(InvalidSignal):
            transfer_gain(-1.0, 0.5, 250.0)


class TestGaussianWhite:
    """White noise variance and determinism"""

    def test_variance_matches_psd(self):
        psd = 1e-18
        white = gaussian_white(1_000_000, FS, psd, seed=11)
        expected = psd * FS / 2.0
        assert np.var(white.samples) == pytest.approx(expected, rel=0.01)
        assert abs(np.mean(white.samples)) < 5 * np.sqrt(expected / 1_000_000)

    def test_same_seed_same_samples(self):
        a = gaussian_white(500, FS, UNIT_PSD, seed=3)
        b = gaussian_white(500, FS, UNIT_PSD, seed=3)
        assert np.array_equal(a.samples, b.samples)

    def test_zero_psd_gives_zeros(self):
        assert np.all(gaussian_white(64, FS, 0.0, seed=1).samples == 0.0)

    def test_bad_length(self):
        with pytest.raises(BadLength):
            gaussian_white(0, FS, UNIT_PSD, seed=1)


class TestShapeNoise:
    """Fourier-domain shaping"""

    def test_beta_zero_is_identity(self):
        white = gaussian_white(N, FS, UNIT_PSD, seed=5)
        shaped = shape_noise(white, NoiseSpec(beta=0.0))
        assert np.max(np.abs(shaped.samples - white.samples)) <= 1e-12

    def test_output_is_real_and_same_length(self):
        for n in (N, N + 1):
            white = gaussian_white(n, FS, UNIT_PSD, seed=9)
            shaped = shape_noise(white, NoiseSpec())
            assert len(shaped) == n
            assert shaped.samples.dtype == np.float64
            assert shaped.sample_rate == FS

    def test_dc_preserved(self):
        white = gaussian_white(N, FS, UNIT_PSD, seed=21)
        shaped = shape_noise(white, NoiseSpec())
        assert np.sum(shaped.samples) == pytest.approx(np.sum(white.samples), abs=1e-9)

    def test_bin_gains_are_exact(self):
        white = gaussian_white(N, FS, UNIT_PSD, seed=4)
        spec = NoiseSpec(beta=0.5, f_knee=250.0)
        shaped = shape_noise(white, spec)
        ratio = np.abs(np.fft.rfft(shaped.samples)) / np.abs(np.fft.rfft(white.samples))
        expected = transfer_gain(np.fft.rfftfreq(N, d=1.0 / FS), 0.5, 250.0)
        np.testing.assert_allclose(ratio, expected, rtol=1e-9)

    def test_too_short(self):
        with pytest.raises(BadLength):
            shape_noise(SampledSignal([1.0], FS), NoiseSpec())

    def test_low_frequency_slope(self):
        """Averaged periodogram below the knee falls as 1/f for beta = 0.5"""
        spec = NoiseSpec(beta=0.5, f_knee=250.0)
        freqs = np.fft.rfftfreq(N, d=1.0 / FS)
        total = np.zeros(freqs.size)
        for seed in range(200):
            shaped = shape_noise(gaussian_white(N, FS, UNIT_PSD, seed=seed), spec)
            total += np.abs(np.fft.rfft(shaped.samples)) ** 2
        density = total / 200 * 2.0 / (FS * N)
        est = PsdEstimate(frequencies=freqs, density=density, sample_rate=FS,
                          segment_length=N, window="boxcar", overlap=0.0)
        assert loglog_slope(est, 2.5, 25.0) == pytest.approx(-1.0, abs=0.1)

    def test_flat_above_knee(self):
        spec = NoiseSpec(beta=0.5, f_knee=250.0)
        settings = PsdSettings(segment_length=512)
        total = None
        for seed in range(200):
            shaped = shape_noise(gaussian_white(N, FS, UNIT_PSD, seed=100 + seed), spec)
            est = psd_estimate(shaped, settings)
            total = est.density.copy() if total is None else total + est.density
        band = (est.frequencies > 300.0) & (est.frequencies < 900.0)
        mean_psd = total[band] / 200
        assert np.median(mean_psd) == pytest.approx(UNIT_PSD, rel=0.10)
        assert np.all(np.abs(mean_psd / UNIT_PSD - 1.0) < 0.15)

    def test_expected_variance(self):
        spec = NoiseSpec(beta=0.5, f_knee=250.0, psd_white=UNIT_PSD)
        energy = 0.0
        for seed in range(100):
            shaped = shape_noise(gaussian_white(N, FS, UNIT_PSD, seed=500 + seed), spec)
            energy += float(np.mean(shaped.samples ** 2))
        assert energy / 100 == pytest.approx(expected_shaped_variance(N, FS, spec), rel=0.05)


class TestBinFrequencies:
    """Mirrored DFT bin frequencies"""

    def test_even_length(self):
        freqs = bin_frequencies(8, 8.0)
        assert freqs.tolist() == [0.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0]


class TestNoiseGain:
    """Calibration against the ECG RMS"""

    def test_calibrated_gain_hits_target_ratio(self, make_ecg):
        ecgs = [make_ecg(256, jitter=0.01 * k, source_id=f"row{k:06d}") for k in range(3)]
        spec = NoiseSpec(psd_white=1e-18, rms_ratio=0.3)
        gain = calibrate_noise_gain(ecgs, spec)
        noise_rms = gain * np.sqrt(expected_shaped_variance(256, 2000.0, spec))
        ecg_rms = np.mean([rms(c.signal.samples) for c in ecgs])
        assert noise_rms == pytest.approx(0.3 * ecg_rms, rel=1e-12)

    def test_zero_psd_gives_zero_gain(self, make_ecg):
        assert calibrate_noise_gain([make_ecg()], NoiseSpec(psd_white=0.0)) == 0.0

    def test_explicit_gain_kept(self, make_ecg):
        spec = NoiseSpec(noise_gain=2.5)
        assert resolve_noise_gain([make_ecg()], spec) is spec

    def test_auto_string_means_calibrate(self):
        assert NoiseSpec(noise_gain="auto").noise_gain is None


class TestSynthesizeMcg:
    """Per-cycle noise addition"""

    def test_deterministic(self, make_ecg):
        ecg = make_ecg()
        spec = NoiseSpec(noise_gain=1e8, seed=42)
        a = synthesize_mcg(ecg, spec, realization=3)
        b = synthesize_mcg(ecg, spec, realization=3)
        assert np.array_equal(a.signal.samples, b.signal.samples)
        assert a.noise_seed == cycle_noise_seed(42, ecg.source_id, 3)
        assert a.cycle_id == "row000000/r003"
        assert a.ecg_ref == ecg.source_id

    def test_realizations_differ(self, make_ecg):
        ecg = make_ecg()
        spec = NoiseSpec(noise_gain=1e8, seed=42)
        a = synthesize_mcg(ecg, spec, realization=0)
        b = synthesize_mcg(ecg, spec, realization=1)
        assert not np.array_equal(a.signal.samples, b.signal.samples)

    def test_zero_gain_is_clean(self, make_ecg):
        ecg = make_ecg()
        mcg = synthesize_mcg(ecg, NoiseSpec(noise_gain=0.0))
        assert np.array_equal(mcg.signal.samples, ecg.signal.samples)

    def test_noise_energy_grows_with_gain(self, make_ecg):
        ecg = make_ecg()
        gains = [0.0, 1e7, 3e7, 1e8, 1e9]
        energies = []
        for gain in gains:
            mcg = synthesize_mcg(ecg, NoiseSpec(noise_gain=gain, seed=8))
            residual = mcg.signal.samples - ecg.signal.samples
            energies.append(float(np.sum(residual * residual)))
        assert energies[0] == 0.0
        assert all(a < b for a, b in zip(energies, energies[1:]))
        assert energies[-1] / energies[1] == pytest.approx(1e4, rel=1e-6)

    def test_noise_is_additive(self, make_ecg):
        ecg = make_ecg()
        spec = NoiseSpec(noise_gain=1e8, seed=1)
        mcg = synthesize_mcg(ecg, spec)
        white = gaussian_white(256, 2000.0, spec.psd_white, mcg.noise_seed)
        expected = ecg.signal.samples + 1e8 * shape_noise(white, spec).samples
        np.testing.assert_allclose(mcg.signal.samples, expected, rtol=0, atol=1e-12)


class TestGenerateDataset:
    """Dataset generation over all cycles and realizations"""

    def test_order_and_count(self, make_ecg):
        ecgs = [make_ecg(source_id=f"row{k:06d}") for k in range(2)]
        cycles = generate_dataset(ecgs, NoiseSpec(seed=5), realizations=3)
        assert [c.cycle_id for c in cycles] == [
            "row000000/r000", "row000000/r001", "row000000/r002",
            "row000001/r000", "row000001/r001", "row000001/r002",
        ]

    def test_workers_do_not_change_output(self, make_ecg):
        ecgs = [make_ecg(jitter=0.01 * k, source_id=f"row{k:06d}") for k in range(3)]
        spec = NoiseSpec(seed=77)
        serial = generate_dataset(ecgs, spec, realizations=4, workers=1)
        threaded = generate_dataset(ecgs, spec, realizations=4, workers=2)
        for a, b in zip(serial, threaded):
            assert a.cycle_id == b.cycle_id
            assert np.array_equal(a.signal.samples, b.signal.samples)

    def test_realizations_must_be_positive(self, make_ecg):
        with pytest.raises(BadLength):
            generate_dataset([make_ecg()], NoiseSpec(), realizations=0)
