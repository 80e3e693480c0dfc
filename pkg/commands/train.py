"""train: stored dataset -> best-validation model, loss history and summary"""
import logging
import os
from typing import Any, Dict, Optional

import numpy as np

from commands.common import MODEL_NAME, dataset_dir, run_directory, split_ids
from data_utils.dataset_store import load_dataset
from data_utils.report_writer import write_history_csv, write_json
from data_utils.windowing import SegmentDataset, build_dataset
from neural.model import DenoiserModel
from neural.persistence import save_model
from neural.trainer import train
from utils.error_handler import EmptyBatch
from utils.run_config import RunConfig

logger = logging.getLogger(__name__)

HISTORY_NAME = "history.csv"
SUMMARY_NAME = "train_summary.json"


def noisy_input_mse(dataset: SegmentDataset) -> Optional[float]:
    """MSE of the raw MCG sample at the label position against the ECG label"""
    if len(dataset) == 0:
        return None
    noisy, labels = dataset.aligned_samples()
    diff = noisy - labels
    return float(np.mean(diff * diff))


def cmd_train(config: RunConfig) -> Dict[str, Any]:
    stored = load_dataset(dataset_dir(config))
    train_ids, val_ids, test_ids = split_ids(config, stored)
    window = config.window
    train_set = build_dataset(stored.pairs(train_ids), window.size, window.stride, window.alignment)
    val_set = build_dataset(stored.pairs(val_ids), window.size, window.stride, window.alignment)
    if len(train_set) == 0:
        raise EmptyBatch("No training examples after the split", details={"train_cycles": len(train_ids)})

    with run_directory(config, "train") as out_dir:
        arch = config.model_arch()
        train_config = config.train_config()
        model = DenoiserModel.initialize(arch, config.init_seed)
        logger.info("Training started", extra={"train_examples": len(train_set), "val_examples": len(val_set),
                                               "arch": arch.model_dump(), "seed": train_config.seed})

        result = train(model, train_set, val_set if len(val_set) else None, train_config)

        save_model(result.model, os.path.join(out_dir, MODEL_NAME))
        write_history_csv(os.path.join(out_dir, HISTORY_NAME), result.history)
        summary = {
            "best_epoch": result.best_epoch,
            "best_val_mse": result.best_val_mse,
            "initial_train_mse": result.initial_train_mse,
            "final_train_mse": result.history[-1].train_mse if result.history else None,
            "noisy_input_val_mse": noisy_input_mse(val_set),
            "epochs": train_config.epochs,
            "examples": {"train": len(train_set), "val": len(val_set)},
            "label_index": train_set.label_index,
            "split": {"train": train_ids, "val": val_ids, "test": test_ids},
            "arch": arch.model_dump(),
        }
        write_json(os.path.join(out_dir, SUMMARY_NAME), summary)
        return summary
