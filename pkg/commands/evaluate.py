"""
eval: residual-noise PSDs of the model and the moving-average baseline on
held-out cycles, their ratio curve and a JSON summary.

With eval.self_compare the prediction path is replaced by the moving average
itself, so the ratio curve is identically one. This checks the harness
without a trained model.
"""
import logging
import os
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from commands.common import dataset_dir, model_path, run_directory, split_ids
from data_utils.dataset_store import load_dataset
from data_utils.report_writer import write_json, write_psd_csv, write_ratio_csv
from data_utils.windowing import label_offset
from dsp.signal_core import EcgCycle, McgCycle, SampledSignal, moving_average
from dsp.spectral_eval import (
    PsdEstimate,
    averaged_noise_psd,
    band_mean,
    knee_frequency,
    loglog_slope,
    noise_ratio,
)
from neural.persistence import load_model
from neural.trainer import predict_cycle
from utils.error_handler import ConfigError, InsufficientBins, NonpositiveDensity
from utils.logger import PerfLogger
from utils.performance_monitor import monitor_performance
from utils.run_config import RunConfig

logger = logging.getLogger(__name__)

PSD_PREDICTION_NAME = "psd_prediction.csv"
PSD_MOVING_AVERAGE_NAME = "psd_moving_average.csv"
PSD_INPUT_NAME = "psd_input.csv"
RATIO_NAME = "noise_ratio.csv"
SUMMARY_NAME = "eval_summary.json"

Pair = Tuple[SampledSignal, EcgCycle]


def select_pairs(config: RunConfig, stored) -> List[Tuple[McgCycle, EcgCycle]]:
    if config.eval.split == "all":
        pairs = stored.pairs()
    else:
        train_ids, val_ids, test_ids = split_ids(config, stored)
        ids = {"train": train_ids, "val": val_ids, "test": test_ids}[config.eval.split]
        pairs = stored.pairs(ids)
    if config.eval.max_cycles is not None:
        pairs = pairs[: config.eval.max_cycles]
    if not pairs:
        raise ConfigError("No cycles to evaluate", details={"split": config.eval.split})
    return pairs


def _time_mse(pairs: List[Pair], alignment: int) -> float:
    total = 0.0
    count = 0
    for output, truth in pairs:
        diff = output.samples - truth.signal.samples[alignment:alignment + len(output)]
        total += float(np.sum(diff * diff))
        count += diff.size
    return total / count


def _slope(psd: PsdEstimate, lo: float, hi: float) -> Optional[float]:
    try:
        return loglog_slope(psd, lo, hi)
    except (InsufficientBins, NonpositiveDensity) as e:
        logger.warning("Slope fit skipped", extra={"error_code": e.error_code, "details": e.details})
        return None


def _knee(psd: PsdEstimate, plateau: float, tolerance: float) -> Optional[float]:
    knee = knee_frequency(psd, plateau * psd.sample_rate, tolerance)
    return None if knee is None else knee / psd.sample_rate


@monitor_performance(stage="eval")
def run_evaluation(config: RunConfig, pairs: List[Tuple[McgCycle, EcgCycle]], model=None) -> Dict[str, Any]:
    """PSDs, ratio curve and summary numbers; model is unused in self-compare mode"""
    ev = config.eval
    psd_settings = ev.psd_settings()
    alignment = config.window.alignment if model is None else model.arch.label_alignment
    ma_shift = label_offset(ev.ma_window, alignment)

    ma_pairs: List[Pair] = []
    pred_pairs: List[Pair] = []
    input_pairs: List[Pair] = []
    with PerfLogger("denoise evaluation cycles"):
        for mcg, ecg in pairs:
            averaged = moving_average(mcg.signal, ev.ma_window)
            ma_pairs.append((averaged, ecg))
            input_pairs.append((mcg.signal, ecg))
            if not ev.self_compare:
                pred_pairs.append((predict_cycle(model, mcg), ecg))

    if ev.self_compare:
        pred_pairs, pred_shift = ma_pairs, ma_shift
    else:
        pred_shift = label_offset(model.arch.window, model.arch.label_alignment)

    pred_psd = averaged_noise_psd(pred_pairs, pred_shift, psd_settings)
    ma_psd = averaged_noise_psd(ma_pairs, ma_shift, psd_settings)
    input_psd = averaged_noise_psd(input_pairs, 0, psd_settings)
    curve = noise_ratio(pred_psd, ma_psd)
    band = band_mean(curve, ev.band_lo, ev.band_hi)

    summary = {
        "band": [ev.band_lo, ev.band_hi],
        "band_mean_ratio": band,
        "cycles": len(pairs),
        "self_compare": ev.self_compare,
        "psd": psd_settings.model_dump(),
        "mse": {
            "prediction": _time_mse(pred_pairs, pred_shift),
            "moving_average": _time_mse(ma_pairs, ma_shift),
            "noisy_input": _time_mse(input_pairs, 0),
        },
        "slope": {
            "range_hz": [ev.slope_lo, ev.slope_hi],
            "prediction": _slope(pred_psd, ev.slope_lo, ev.slope_hi),
            "moving_average": _slope(ma_psd, ev.slope_lo, ev.slope_hi),
            "input": _slope(input_psd, ev.slope_lo, ev.slope_hi),
        },
        "residual_power": {
            "prediction": pred_psd.total_power(),
            "moving_average": ma_psd.total_power(),
            "input": input_psd.total_power(),
        },
        "knee_f_norm": {
            "prediction": _knee(pred_psd, ev.knee_plateau, ev.knee_tolerance),
            "moving_average": _knee(ma_psd, ev.knee_plateau, ev.knee_tolerance),
            "input": _knee(input_psd, ev.knee_plateau, ev.knee_tolerance),
        },
    }
    logger.info("Band-mean summary", extra={"band_mean_ratio": band, "band": summary["band"],
                                            "cycles": len(pairs), "mse": summary["mse"]})
    return {"prediction": pred_psd, "moving_average": ma_psd, "input": input_psd,
            "ratio": curve, "summary": summary}


def cmd_eval(config: RunConfig) -> Dict[str, Any]:
    stored = load_dataset(dataset_dir(config))
    pairs = select_pairs(config, stored)
    model = None if config.eval.self_compare else load_model(model_path(config))

    with run_directory(config, "eval") as out_dir:
        result = run_evaluation(config, pairs, model)
        write_psd_csv(os.path.join(out_dir, PSD_PREDICTION_NAME), result["prediction"])
        write_psd_csv(os.path.join(out_dir, PSD_MOVING_AVERAGE_NAME), result["moving_average"])
        write_psd_csv(os.path.join(out_dir, PSD_INPUT_NAME), result["input"])
        write_ratio_csv(os.path.join(out_dir, RATIO_NAME), result["ratio"])
        write_json(os.path.join(out_dir, SUMMARY_NAME), result["summary"])
        return result["summary"]
