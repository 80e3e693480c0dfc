"""
Spectral Evaluation
===================
Welch PSD estimation, residual-noise extraction against the ground-truth ECG,
averaging over held-out cycles and the prediction / moving-average noise
ratio.
"""
import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import signal as sp_signal

from dsp.signal_core import EcgCycle, SampledSignal
from utils.error_handler import (
    AppException,
    EmptyBand,
    GridMismatch,
    InsufficientBins,
    LengthMismatch,
    NonpositiveDensity,
    SignalTooShort,
)

logger = logging.getLogger(__name__)

MIN_SEGMENT_LENGTH = 8
MIN_SLOPE_BINS = 4


class PsdSettings(BaseModel):
    """Welch estimator settings"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    segment_length: int = Field(default=512, ge=MIN_SEGMENT_LENGTH)
    overlap: float = Field(default=0.5, ge=0.0, lt=1.0)
    window: str = Field(default="hann")


@dataclass(frozen=True, eq=False)
class PsdEstimate:
    """One-sided PSD with estimation metadata"""
    frequencies: np.ndarray
    density: np.ndarray
    sample_rate: float
    segment_length: int
    window: str
    overlap: float
    units: str = "normalized^2/Hz"

    def __post_init__(self):
        freqs = np.asarray(self.frequencies, dtype=np.float64)
        dens = np.asarray(self.density, dtype=np.float64)
        if freqs.shape != dens.shape:
            raise GridMismatch("Frequency and density grids differ in length",
                               details={"frequencies": freqs.size, "density": dens.size})
        if freqs.size > 1 and np.any(np.diff(freqs) <= 0):
            raise AppException("PSD frequencies must be strictly increasing", error_code="INVALID_PSD")
        if np.any(dens < 0):
            raise AppException("PSD density must be non-negative", error_code="INVALID_PSD")
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "density", dens)

    @property
    def normalized_frequencies(self) -> np.ndarray:
        return self.frequencies / self.sample_rate

    def total_power(self) -> float:
        """Integral of the density over the one-sided grid"""
        if self.frequencies.size < 2:
            return 0.0
        return float(np.sum(self.density) * (self.frequencies[1] - self.frequencies[0]))


@dataclass(frozen=True, eq=False)
class NoiseRatioCurve:
    """Bin-wise prediction PSD over moving-average PSD; NaN marks undefined bins"""
    f_norm: np.ndarray
    ratio: np.ndarray

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.ratio)


def psd_estimate(signal: SampledSignal, settings: Optional[PsdSettings] = None) -> PsdEstimate:
    """
    Averaged-periodogram PSD (Hann window by default, constant detrend).

    Density scaling uses the window power, so the integral over frequency
    recovers the signal variance.
    """
    settings = settings or PsdSettings()
    seg = settings.segment_length
    if seg < MIN_SEGMENT_LENGTH or len(signal) < seg:
        raise SignalTooShort(details={"length": len(signal), "segment_length": seg})

    freqs, density = sp_signal.welch(
        signal.samples,
        fs=signal.sample_rate,
        window=settings.window,
        nperseg=seg,
        noverlap=int(settings.overlap * seg),
        detrend="constant",
        return_onesided=True,
        scaling="density",
        average="mean",
    )
    return PsdEstimate(
        frequencies=freqs,
        density=density,
        sample_rate=signal.sample_rate,
        segment_length=seg,
        window=settings.window,
        overlap=settings.overlap,
        units=f"{signal.unit}^2/Hz",
    )


def residual_noise(output: SampledSignal, truth_ecg: EcgCycle, alignment: int) -> SampledSignal:
    """
    output - truth, where output index i is paired with truth index i + alignment.

    With the causal convention and window N the alignment is N - 1.
    """
    alignment = int(alignment)
    truth = truth_ecg.signal.samples
    end = alignment + len(output)
    if alignment < 0 or end > truth.size:
        raise LengthMismatch(
            "Output does not fit inside the truth cycle after alignment",
            details={"output_length": len(output), "alignment": alignment, "truth_length": int(truth.size)}
        )
    return output.with_samples(output.samples - truth[alignment:end])


def _check_same_grid(a: PsdEstimate, b: PsdEstimate) -> None:
    if a.frequencies.shape != b.frequencies.shape or not np.array_equal(a.frequencies, b.frequencies):
        raise GridMismatch(details={"left_bins": int(a.frequencies.size), "right_bins": int(b.frequencies.size)})


def average_psds(estimates: Sequence[PsdEstimate]) -> PsdEstimate:
    """Bin-wise mean of PSD estimates sharing one grid, reduced in input order"""
    if not estimates:
        raise AppException("Cannot average an empty collection of PSDs", error_code="EMPTY_COLLECTION")
    first = estimates[0]
    total = np.zeros_like(first.density)
    for est in estimates:
        _check_same_grid(first, est)
        total += est.density
    return PsdEstimate(
        frequencies=first.frequencies,
        density=total / len(estimates),
        sample_rate=first.sample_rate,
        segment_length=first.segment_length,
        window=first.window,
        overlap=first.overlap,
        units=first.units,
    )


def averaged_noise_psd(
    outputs: Iterable[Tuple[SampledSignal, EcgCycle]],
    alignment: int,
    settings: Optional[PsdSettings] = None,
) -> PsdEstimate:
    """Mean PSD of the residuals of (output, truth) pairs"""
    pairs = list(outputs)
    if not pairs:
        raise AppException("No (output, truth) pairs to average", error_code="EMPTY_COLLECTION")
    lengths = {len(out) for out, _ in pairs}
    if len(lengths) != 1:
        raise LengthMismatch("Outputs must share one length", details={"lengths": sorted(lengths)})
    estimates = [psd_estimate(residual_noise(out, truth, alignment), settings) for out, truth in pairs]
    return average_psds(estimates)


def noise_ratio(pred_psd: PsdEstimate, ma_psd: PsdEstimate) -> NoiseRatioCurve:
    """pred / ma per bin on the f/fs axis; bins with zero ma density are NaN"""
    _check_same_grid(pred_psd, ma_psd)
    ratio = np.full(pred_psd.density.shape, np.nan)
    defined = ma_psd.density > 0
    ratio[defined] = pred_psd.density[defined] / ma_psd.density[defined]
    return NoiseRatioCurve(f_norm=pred_psd.normalized_frequencies, ratio=ratio)


def band_mean(curve: NoiseRatioCurve, lo: float, hi: float) -> float:
    """Mean ratio over defined bins with lo <= f/fs <= hi"""
    if not lo < hi:
        raise EmptyBand("Band lower edge must be below the upper edge", details={"lo": lo, "hi": hi})
    in_band = (curve.f_norm >= lo) & (curve.f_norm <= hi) & curve.defined
    if not np.any(in_band):
        raise EmptyBand(details={"lo": lo, "hi": hi})
    return float(np.mean(curve.ratio[in_band]))


def loglog_slope(psd: PsdEstimate, f_lo: float, f_hi: float) -> float:
    """Least-squares slope of log10 density against log10 frequency over [f_lo, f_hi]"""
    in_range = (psd.frequencies >= f_lo) & (psd.frequencies <= f_hi) & (psd.frequencies > 0)
    count = int(np.count_nonzero(in_range))
    if count < MIN_SLOPE_BINS:
        raise InsufficientBins(details={"bins": count, "f_lo": f_lo, "f_hi": f_hi})
    dens = psd.density[in_range]
    if np.any(dens <= 0):
        raise NonpositiveDensity(details={"f_lo": f_lo, "f_hi": f_hi})
    slope, _ = np.polyfit(np.log10(psd.frequencies[in_range]), np.log10(dens), 1)
    return float(slope)


def knee_frequency(psd: PsdEstimate, plateau_lo: float, tolerance: float = 0.1) -> Optional[float]:
    """
    Lowest frequency from which the density stays within `tolerance` of the
    plateau (median density above plateau_lo). None when the plateau is empty.
    """
    plateau_bins = psd.frequencies >= plateau_lo
    if not np.any(plateau_bins):
        return None
    plateau = float(np.median(psd.density[plateau_bins]))
    excess = psd.density > plateau * (1.0 + tolerance)
    above = np.flatnonzero(excess & (psd.frequencies < plateau_lo))
    if above.size == 0:
        return float(psd.frequencies[0])
    last = above[-1]
    if last + 1 >= psd.frequencies.size:
        return None
    return float(psd.frequencies[last + 1])
