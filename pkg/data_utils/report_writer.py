"""
Evaluation and training artifacts: two-column curve CSVs, the loss history
CSV, per-sample trace CSVs and JSON summaries. Floats are written with repr
precision so reruns are byte-identical.
"""
import json
import logging
import os
from typing import Any, Dict, Iterable, Sequence

import numpy as np

from dsp.spectral_eval import NoiseRatioCurve, PsdEstimate
from utils.error_handler import handle_errors

logger = logging.getLogger(__name__)


def _fmt(value) -> str:
    if value is None:
        return ""
    value = float(value)
    if np.isnan(value):
        return "nan"
    return repr(value)


def _write_table(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _fmt(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


@handle_errors("write_psd_csv")
def write_psd_csv(path: str, psd: PsdEstimate) -> None:
    """Columns f_norm, psd"""
    _write_table(path, ("f_norm", "psd"), zip(psd.normalized_frequencies, psd.density))


@handle_errors("write_ratio_csv")
def write_ratio_csv(path: str, curve: NoiseRatioCurve) -> None:
    """Columns f_norm, ratio; undefined bins are written as nan"""
    _write_table(path, ("f_norm", "ratio"), zip(curve.f_norm, curve.ratio))


@handle_errors("write_history_csv")
def write_history_csv(path: str, history) -> None:
    _write_table(path, ("epoch", "train_mse", "val_mse"),
                 ((str(r.epoch), r.train_mse, r.val_mse) for r in history))


@handle_errors("write_trace_csv")
def write_trace_csv(path: str, index: np.ndarray, columns: Dict[str, np.ndarray]) -> None:
    """One row per sample index; every column has one value per index"""
    names = list(columns)
    rows = ((str(int(i)), *(columns[n][row] for n in names)) for row, i in enumerate(index))
    _write_table(path, ("index", *names), rows)


@handle_errors("write_json")
def write_json(path: str, payload: Dict[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    logger.debug("Wrote JSON report", extra={"path": os.path.basename(path)})

