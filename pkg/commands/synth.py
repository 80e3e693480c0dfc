"""synth: ECG CSV -> preconditioned ECG cycles + synthesized MCG cycles"""
import logging
from typing import Any, Dict

from commands.common import require, run_directory
from data_utils.dataset_store import save_dataset
from data_utils.ecg_loader import load_ecg_csv
from dsp.noise_synth import generate_dataset, resolve_noise_gain
from utils.run_config import RunConfig

logger = logging.getLogger(__name__)


def cmd_synth(config: RunConfig) -> Dict[str, Any]:
    ecg_csv = require(config.data.ecg_csv, "data.ecg_csv")
    with run_directory(config, "synth") as out_dir:
        ingest = config.ingest
        ecgs = load_ecg_csv(
            ecg_csv,
            input_rate=ingest.input_rate,
            cycle_length=ingest.cycle_length,
            sample_rate=ingest.sample_rate,
            label_column=ingest.label_column,
            limit=ingest.limit,
        )
        spec = resolve_noise_gain(ecgs, config.noise_spec())
        mcgs = generate_dataset(ecgs, spec, config.synth.realizations, workers=config.synth.workers)
        manifest = save_dataset(
            out_dir, ecgs, mcgs, spec,
            fmt=config.synth.format,
            extra={"seed": config.seed, "realizations": config.synth.realizations,
                   "ingest": ingest.model_dump(), "source_csv": ecg_csv},
        )
        logger.info("Dataset counts", extra=manifest["counts"])
        return manifest
