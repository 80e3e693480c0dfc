"""denoise: one stored MCG cycle -> per-sample trace CSV"""
import logging
import os
from typing import Any, Dict

import numpy as np

from commands.common import dataset_dir, model_path, run_directory
from data_utils.dataset_store import load_dataset
from data_utils.report_writer import write_trace_csv
from data_utils.windowing import label_offset
from dsp.signal_core import moving_average
from neural.persistence import load_model
from neural.trainer import predict_cycle
from utils.error_handler import ConfigError
from utils.run_config import RunConfig

logger = logging.getLogger(__name__)

TRACE_NAME = "denoised.csv"


def cmd_denoise(config: RunConfig) -> Dict[str, Any]:
    """
    Rows cover the ECG sample indices for which both the prediction and the
    moving average exist; the first stored cycle is used when data.cycle_id
    is unset.
    """
    stored = load_dataset(dataset_dir(config))
    model = load_model(model_path(config))
    if not stored.mcgs:
        raise ConfigError("Dataset has no MCG cycles", details={"dir": dataset_dir(config)})
    cycle_id = config.data.cycle_id or stored.mcgs[0].cycle_id
    matches = [m for m in stored.mcgs if m.cycle_id == cycle_id]
    if not matches:
        raise ConfigError(f"Unknown cycle id {cycle_id!r}", details={"key": "data.cycle_id"})
    mcg = matches[0]
    ecg = stored.ecg_by_id()[mcg.ecg_ref]

    window = model.arch.window
    ma_window = config.eval.ma_window
    pred_shift = label_offset(window, model.arch.label_alignment)
    ma_shift = label_offset(ma_window, model.arch.label_alignment)

    with run_directory(config, "denoise") as out_dir:
        prediction = predict_cycle(model, mcg, window).samples
        averaged = moving_average(mcg.signal, ma_window).samples

        length = len(mcg.signal)
        start = max(pred_shift, ma_shift)
        stop = min(pred_shift + prediction.size, ma_shift + averaged.size, length)
        index = np.arange(start, stop)
        columns = {
            "time_s": index / mcg.signal.sample_rate,
            "mcg": mcg.signal.samples[index],
            "moving_average": averaged[index - ma_shift],
            "prediction": prediction[index - pred_shift],
            "ecg": ecg.signal.samples[index],
        }
        path = os.path.join(out_dir, TRACE_NAME)
        write_trace_csv(path, index, columns)
        logger.info("Denoised cycle", extra={"cycle_id": cycle_id, "rows": int(index.size), "path": path})
        return {"cycle_id": cycle_id, "rows": int(index.size), "path": path}
