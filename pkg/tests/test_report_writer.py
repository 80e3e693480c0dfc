"""
Tests for CSV and JSON report output
"""
import json

import numpy as np

from data_utils.report_writer import (
    write_history_csv,
    write_json,
    write_psd_csv,
    write_ratio_csv,
    write_trace_csv,
)
from dsp.spectral_eval import NoiseRatioCurve, PsdEstimate
from neural.trainer import EpochRecord


class TestCurves:
    """Two-column curve files"""

    def test_psd_csv(self, tmp_path):
        psd = PsdEstimate(frequencies=np.array([0.0, 500.0]), density=np.array([0.1, 1e-18]),
                          sample_rate=2000.0, segment_length=512, window="hann", overlap=0.5)
        path = tmp_path / "psd.csv"
        write_psd_csv(str(path), psd)
        assert path.read_text() == "f_norm,psd\n0.0,0.1\n0.25,1e-18\n"

    def test_ratio_csv_writes_nan(self, tmp_path, read_curve):
        path = tmp_path / "ratio.csv"
        write_ratio_csv(str(path), NoiseRatioCurve(f_norm=np.array([0.0, 0.1]), ratio=np.array([np.nan, 0.5])))
        assert path.read_text().splitlines() == ["f_norm,ratio", "0.0,nan", "0.1,0.5"]
        curve = read_curve(str(path))
        assert np.isnan(curve["ratio"][0]) and curve["ratio"][1] == 0.5

    def test_values_round_trip_exactly(self, tmp_path, read_curve):
        values = np.random.default_rng(0).normal(size=20)
        path = tmp_path / "trace.csv"
        write_trace_csv(str(path), np.arange(3, 23), {"x": values})
        columns = read_curve(str(path))
        assert np.array_equal(columns["x"], values)
        assert columns["index"].tolist() == list(range(3, 23))


class TestHistoryAndSummary:
    """Loss history and JSON summaries"""

    def test_history_without_validation(self, tmp_path):
        path = tmp_path / "history.csv"
        write_history_csv(str(path), [EpochRecord(1, 0.5, None), EpochRecord(2, 0.25, 0.3)])
        assert path.read_text() == "epoch,train_mse,val_mse\n1,0.5,\n2,0.25,0.3\n"

    def test_json_is_sorted(self, tmp_path):
        path = tmp_path / "summary.json"
        write_json(str(path), {"b": 1, "a": [0.5, None]})
        text = path.read_text()
        assert text.endswith("\n")
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(text) == {"a": [0.5, None], "b": 1}
