"""
Signal Core
===========
Sampled-signal types, ECG-cycle preconditioning (padding removal and
resampling) and the moving-average baseline filter.

All functions are pure: inputs are never mutated and returned arrays are
read-only copies.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from utils.error_handler import AllZeroSignal, BadLength, InvalidSignal, WindowTooLarge

logger = logging.getLogger(__name__)

UNIT_NORMALIZED = "normalized"
UNIT_VOLT = "V"

DEFAULT_CYCLE_LENGTH = 3008
DEFAULT_SAMPLE_RATE = 2000.0
DEFAULT_INPUT_RATE = 125.0


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class SampledSignal:
    """Uniformly sampled real-valued series with its sample rate and unit tag"""
    samples: np.ndarray
    sample_rate: float
    unit: str = UNIT_NORMALIZED

    def __post_init__(self):
        samples = _frozen_array(self.samples)
        if samples.size < 1:
            raise InvalidSignal("Signal must contain at least one sample")
        if not np.all(np.isfinite(samples)):
            raise InvalidSignal("Signal contains NaN or Inf samples",
                                details={"non_finite": int(np.count_nonzero(~np.isfinite(samples)))})
        if not (np.isfinite(self.sample_rate) and self.sample_rate > 0):
            raise InvalidSignal("Sample rate must be positive", details={"sample_rate": self.sample_rate})
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def with_samples(self, samples) -> "SampledSignal":
        """Same rate and unit, new samples"""
        return SampledSignal(samples, self.sample_rate, self.unit)


@dataclass(frozen=True, eq=False)
class EcgCycle:
    """One preconditioned heartbeat cycle"""
    signal: SampledSignal
    source_id: str


@dataclass(frozen=True, eq=False)
class McgCycle:
    """ECG cycle plus shaped sensor noise"""
    signal: SampledSignal
    ecg_ref: str
    noise_seed: int
    cycle_id: str = field(default="")
    realization: int = 0

    def __post_init__(self):
        if not self.cycle_id:
            object.__setattr__(self, "cycle_id", f"{self.ecg_ref}/r{self.realization:03d}")


def strip_padding(raw) -> np.ndarray:
    """Remove the maximal trailing run of exact zeros"""
    values = np.asarray(raw, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise BadLength("Cannot strip padding from an empty sequence")
    nonzero = np.flatnonzero(values != 0.0)
    if nonzero.size == 0:
        raise AllZeroSignal(details={"length": int(values.size)})
    return values[: nonzero[-1] + 1].copy()


def resample(signal: SampledSignal, target_len: int, target_rate: float) -> SampledSignal:
    """
    Linear interpolation onto target_len points spanning the same index support.

    Sample j of the output sits at normalized position j/(target_len-1) of the
    input's index axis, so first and last samples are preserved exactly.
    """
    n = len(signal)
    if n < 2 or target_len < 2:
        raise BadLength(
            "Resampling needs at least two input and two output samples",
            details={"input_length": n, "target_len": int(target_len)}
        )
    if n == target_len and float(target_rate) == signal.sample_rate:
        return SampledSignal(signal.samples, signal.sample_rate, signal.unit)

    positions = np.linspace(0.0, n - 1, int(target_len))
    values = np.interp(positions, np.arange(n, dtype=np.float64), signal.samples)
    return SampledSignal(values, float(target_rate), signal.unit)


def precondition_cycle(
    raw,
    source_id: str,
    input_rate: float = DEFAULT_INPUT_RATE,
    cycle_length: int = DEFAULT_CYCLE_LENGTH,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
) -> EcgCycle:
    """Strip padding then resample to the fixed cycle length and rate"""
    stripped = strip_padding(raw)
    signal = SampledSignal(stripped, input_rate, UNIT_NORMALIZED)
    resampled = resample(signal, cycle_length, sample_rate)
    logger.debug("Preconditioned cycle", extra={"source_id": source_id,
                                                "raw_length": int(np.size(raw)),
                                                "stripped_length": len(signal)})
    return EcgCycle(resampled, source_id)


def moving_average(signal: SampledSignal, window: int) -> SampledSignal:
    """
    Trailing-window mean: output[i] = mean(signal[i .. i+window-1]).

    Output index i pairs with ECG index i+window-1 under the causal label
    convention and i+window//2 under the centered one.
    """
    window = int(window)
    if window < 1:
        raise BadLength("Moving-average window must be positive", details={"window": window})
    if window > len(signal):
        raise WindowTooLarge(details={"window": window, "length": len(signal)})
    windows = np.lib.stride_tricks.sliding_window_view(signal.samples, window)
    return signal.with_samples(windows.mean(axis=1))


def rms(values) -> float:
    arr = np.asarray(values, dtype=np.float64)
    return float(np.sqrt(np.mean(arr * arr)))
