"""
Sensor Noise Synthesis
======================
Gaussian white noise of a given one-sided PSD, shaped by a knee transfer
function in the Fourier domain, added to ECG cycles to produce synthetic
MCG cycles.

Transfer function on the complex amplitude:

    H(f) = 1                  f = 0
         = (f_knee / f)^beta  0 < f <= f_knee
         = 1                  f > f_knee

so the shaped PSD below the knee falls as f^(-2*beta).
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from dsp.signal_core import EcgCycle, McgCycle, SampledSignal, UNIT_VOLT, rms
from utils.error_handler import AppException, BadLength, InvalidSignal
from utils.performance_monitor import monitor_performance
from utils.seeding import RNG_ALGORITHM, cycle_noise_seed, make_rng

logger = logging.getLogger(__name__)

# Relative bound on the imaginary residue of the inverse transform
IMAG_TOLERANCE = 1e-12


class NoiseSpec(BaseModel):
    """Parameters of the synthetic sensor noise"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    psd_white: float = Field(default=1e-18, ge=0, description="White-noise one-sided PSD, V^2/Hz")
    beta: float = Field(default=0.5, ge=0, description="Amplitude transfer exponent")
    f_knee: float = Field(default=250.0, gt=0, description="Knee frequency, Hz")
    noise_gain: Optional[float] = Field(default=None, ge=0, description="None calibrates from the ECG RMS")
    rms_ratio: float = Field(default=0.3, ge=0, description="Target shaped-noise RMS over ECG RMS")
    seed: int = Field(default=0, ge=0, lt=2**64)

    @field_validator('noise_gain', mode='before')
    @classmethod
    def parse_auto_gain(cls, v):
        if isinstance(v, str) and v.strip().lower() in ("auto", "none", ""):
            return None
        return v


def gaussian_white(length: int, sample_rate: float, psd_white: float, seed: int) -> SampledSignal:
    """
    i.i.d. zero-mean Gaussian samples with variance psd_white * sample_rate / 2,
    which makes the one-sided PSD flat at psd_white.
    """
    length = int(length)
    if length < 1:
        raise BadLength("White noise needs at least one sample", details={"length": length})
    if psd_white < 0:
        raise InvalidSignal("PSD level must be non-negative", details={"psd_white": psd_white})
    sigma = np.sqrt(psd_white * sample_rate / 2.0)
    samples = make_rng(seed).standard_normal(length) * sigma
    return SampledSignal(samples, sample_rate, UNIT_VOLT)


def transfer_gain(f: Union[float, np.ndarray], beta: float, f_knee: float) -> Union[float, np.ndarray]:
    """Amplitude gain of the knee transfer function at frequency f (Hz)"""
    freqs = np.asarray(f, dtype=np.float64)
    if np.any(freqs < 0):
        raise InvalidSignal("Frequency must be non-negative")
    inside = (freqs > 0) & (freqs <= f_knee)
    safe = np.where(freqs > 0, freqs, 1.0)
    gain = np.where(inside, (f_knee / safe) ** beta, 1.0)
    if gain.ndim == 0:
        return float(gain)
    return gain


def bin_frequencies(length: int, sample_rate: float) -> np.ndarray:
    """|f| of each full-DFT bin; upper bins mirror the lower ones, Nyquist is fs/2"""
    return np.abs(np.fft.fftfreq(int(length), d=1.0 / sample_rate))


def _enforce_hermitian(spectrum: np.ndarray) -> np.ndarray:
    out = spectrum.copy()
    n = out.size
    out[0] = out[0].real
    half = (n - 1) // 2
    if half > 0:
        out[n - half:] = np.conj(out[1:half + 1][::-1])
    if n % 2 == 0:
        out[n // 2] = out[n // 2].real
    return out


def shape_noise(white: SampledSignal, spec: NoiseSpec) -> SampledSignal:
    """Multiply each DFT bin by transfer_gain(|f|) and return to the time domain"""
    n = len(white)
    if n < 2:
        raise BadLength("Noise shaping needs at least two samples", details={"length": n})

    spectrum = np.fft.fft(white.samples)
    gains = transfer_gain(bin_frequencies(n, white.sample_rate), spec.beta, spec.f_knee)
    shaped = np.fft.ifft(_enforce_hermitian(spectrum * gains))

    residue = float(np.max(np.abs(shaped.imag)))
    scale = float(np.max(np.abs(shaped.real)))
    if residue > IMAG_TOLERANCE * scale:
        raise AppException(
            "Inverse transform is not real after Hermitian enforcement",
            error_code="NON_REAL_SPECTRUM",
            details={"imag_residue": residue, "scale": scale}
        )
    return white.with_samples(shaped.real)


def expected_shaped_variance(length: int, sample_rate: float, spec: NoiseSpec) -> float:
    """Expected variance of shape_noise output: sigma^2 * mean over bins of H(f)^2"""
    gains = transfer_gain(bin_frequencies(length, sample_rate), spec.beta, spec.f_knee)
    return float(spec.psd_white * sample_rate / 2.0 * np.mean(gains * gains))


def calibrate_noise_gain(ecgs: Sequence[EcgCycle], spec: NoiseSpec) -> float:
    """Gain that makes the shaped-noise RMS equal rms_ratio times the mean ECG RMS"""
    if not ecgs:
        return 0.0
    ecg_rms = float(np.mean([rms(c.signal.samples) for c in ecgs]))
    noise_var = float(np.mean([
        expected_shaped_variance(len(c.signal), c.signal.sample_rate, spec) for c in ecgs
    ]))
    if noise_var <= 0.0:
        logger.warning("Shaped noise has zero variance; noise gain set to 0",
                       extra={"psd_white": spec.psd_white})
        return 0.0
    return spec.rms_ratio * ecg_rms / float(np.sqrt(noise_var))


def resolve_noise_gain(ecgs: Sequence[EcgCycle], spec: NoiseSpec) -> NoiseSpec:
    """Return spec with a concrete noise_gain, calibrating once if it is unset"""
    if spec.noise_gain is not None:
        return spec
    gain = calibrate_noise_gain(ecgs, spec)
    logger.info(
        "Calibrated noise gain",
        extra={"noise_gain": gain, "rms_ratio": spec.rms_ratio, "cycles": len(ecgs)}
    )
    return spec.model_copy(update={"noise_gain": gain})


def synthesize_mcg(
    ecg: EcgCycle,
    spec: NoiseSpec,
    realization: int = 0,
    noise_seed: Optional[int] = None,
) -> McgCycle:
    """ECG cycle plus noise_gain times shaped noise from a per-cycle seed"""
    if spec.noise_gain is None:
        spec = resolve_noise_gain([ecg], spec)
    seed = noise_seed if noise_seed is not None else cycle_noise_seed(spec.seed, ecg.source_id, realization)

    signal = ecg.signal
    white = gaussian_white(len(signal), signal.sample_rate, spec.psd_white, seed)
    noise = shape_noise(white, spec)
    samples = signal.samples + spec.noise_gain * noise.samples
    return McgCycle(
        signal=signal.with_samples(samples),
        ecg_ref=ecg.source_id,
        noise_seed=int(seed),
        realization=int(realization),
    )


@monitor_performance(stage="synth")
def generate_dataset(
    ecgs: Sequence[EcgCycle],
    spec: NoiseSpec,
    realizations: int,
    workers: int = 1,
) -> List[McgCycle]:
    """`realizations` MCG cycles per ECG cycle, ordered by ECG then realization"""
    realizations = int(realizations)
    if realizations < 1:
        raise BadLength("At least one realization per cycle is required",
                        details={"realizations": realizations})
    spec = resolve_noise_gain(ecgs, spec)

    jobs = [(ecg, k) for ecg in ecgs for k in range(realizations)]

    def _run(job):
        ecg, k = job
        return synthesize_mcg(ecg, spec, realization=k)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cycles = list(pool.map(_run, jobs))
    else:
        cycles = [_run(job) for job in jobs]

    logger.info(
        "Synthesized MCG dataset",
        extra={"ecg_cycles": len(ecgs), "realizations": realizations,
               "mcg_cycles": len(cycles), "rng": RNG_ALGORITHM}
    )
    return cycles
