"""
Shared fixtures: synthetic heartbeat waveforms, small models and ECG CSV files.
"""
import logging
from typing import Optional

import numpy as np
import pandas as pd
import pytest

from dsp.signal_core import EcgCycle, SampledSignal
from neural.model import DenoiserModel, ModelArch


def _qrs(t: np.ndarray, center: float, width: float) -> np.ndarray:
    scale = width / 0.012
    r = np.exp(-((t - center) / width) ** 2)
    s = -0.25 * np.exp(-((t - center - 0.04 * scale) / (0.015 * scale)) ** 2)
    return r + s


def beat_waveform(length: int, jitter: float = 0.0, qrs_width: float = 0.012,
                  next_r: Optional[float] = None) -> np.ndarray:
    """
    R-S-T-P shape starting at the R peak, values in normalized units. Widths and
    positions are fractions of the cycle; next_r adds the following beat's QRS.
    """
    t = np.linspace(0.0, 1.0, length)
    tw = 0.35 * np.exp(-((t - 0.35 - jitter) / 0.06) ** 2)
    p = 0.15 * np.exp(-((t - 0.8 - jitter) / 0.04) ** 2)
    wave = 0.3 + _qrs(t, 0.02 + jitter, qrs_width) + tw + p
    if next_r is not None:
        wave = wave + _qrs(t, next_r + jitter, qrs_width)
    return wave


@pytest.fixture
def make_beat():
    return beat_waveform


@pytest.fixture
def make_ecg():
    def _make(length: int = 256, sample_rate: float = 2000.0, jitter: float = 0.0, source_id: str = "row000000"):
        return EcgCycle(SampledSignal(beat_waveform(length, jitter), sample_rate), source_id)
    return _make


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def tiny_arch():
    return ModelArch(window=6, taps=3, filters=2, hidden=2)


@pytest.fixture
def tiny_model(tiny_arch):
    return DenoiserModel.initialize(tiny_arch, seed=7)


def write_ecg_csv(path, rows, label: bool = True) -> str:
    """One row per cycle, zero padded to a common width, optional integer label column"""
    width = max(len(r) for r in rows) + 5
    with open(path, "w", encoding="utf-8") as fh:
        for k, row in enumerate(rows):
            values = list(row) + [0.0] * (width - len(row))
            cells = [repr(float(v)) for v in values]
            if label:
                cells.append(f"{k % 2}.0")
            fh.write(",".join(cells) + "\n")
    return str(path)


@pytest.fixture
def ecg_csv(tmp_path):
    """Three padded beats of different lengths, with a label column"""
    rows = [beat_waveform(n, jitter=0.01 * k) for k, n in enumerate((150, 170, 188))]
    return write_ecg_csv(tmp_path / "ecg.csv", rows)


@pytest.fixture
def ecg_csv_writer():
    return write_ecg_csv


def central_difference(fn, array: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of scalar fn() with respect to every entry of array, perturbed in place"""
    grad = np.zeros_like(array)
    for idx in np.ndindex(array.shape):
        saved = array[idx]
        array[idx] = saved + step
        up = fn()
        array[idx] = saved - step
        down = fn()
        array[idx] = saved
        grad[idx] = (up - down) / (2 * step)
    return grad


@pytest.fixture
def numeric_grad():
    return central_difference


def read_report_csv(path) -> dict:
    """Columns of a report CSV keyed by header name, values parsed exactly"""
    frame = pd.read_csv(path, float_precision="round_trip")
    return {name: frame[name].to_numpy(dtype=np.float64) for name in frame.columns}


@pytest.fixture
def read_curve():
    return read_report_csv


@pytest.fixture(autouse=True)
def isolated_logging():
    """The CLI reconfigures the root logger; put it back after each test"""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)
