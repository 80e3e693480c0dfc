"""
Shared plumbing for the commands: output directory with a lock file, the
per-run log file and the effective-config dump.
"""
import logging
import os
from contextlib import contextmanager
from typing import Iterator, List, Tuple

from data_utils.dataset_store import StoredDataset
from data_utils.windowing import split_by_cycle
from utils.error_handler import ConfigError, RunLocked, StorageError
from utils.logger import attach_run_log, detach_run_log, get_run_id
from utils.run_config import RunConfig, dump_effective_config

logger = logging.getLogger(__name__)

LOCK_NAME = ".lock"
MODEL_NAME = "model.mcgm"


def _acquire_lock(out_dir: str) -> str:
    path = os.path.join(out_dir, LOCK_NAME)
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RunLocked(details={"lock": path})
    except OSError as e:
        raise StorageError(f"Cannot create lock file: {e}", details={"lock": path})
    with os.fdopen(fd, "w") as fh:
        fh.write(f"{os.getpid()} {get_run_id()}\n")
    return path


@contextmanager
def run_directory(config: RunConfig, command: str) -> Iterator[str]:
    """Lock config.out for the duration of a command and mirror logs into it"""
    out_dir = config.out
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise StorageError(f"Cannot create output directory: {e}", details={"out": out_dir})
    lock = _acquire_lock(out_dir)
    handler = attach_run_log(out_dir)
    try:
        dump_effective_config(config, out_dir)
        logger.info("Command started", extra={"command": command, "out": out_dir, "seed": config.seed})
        yield out_dir
        logger.info("Command finished", extra={"command": command, "out": out_dir})
    finally:
        detach_run_log(handler)
        try:
            os.remove(lock)
        except FileNotFoundError:
            pass


def dataset_dir(config: RunConfig) -> str:
    return config.data.dataset_dir or config.out


def model_path(config: RunConfig) -> str:
    return config.data.model_path or os.path.join(config.out, MODEL_NAME)


def require(value, key: str):
    if value is None:
        raise ConfigError(f"{key} must be set", details={"key": key})
    return value


def split_ids(config: RunConfig, stored: StoredDataset) -> Tuple[List[str], List[str], List[str]]:
    """Train / validation / test ECG source ids"""
    ids = [c.source_id for c in stored.ecgs]
    return split_by_cycle(ids, config.split.fractions, config.split_seed)
