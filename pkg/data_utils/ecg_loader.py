"""
ECG CSV ingestion.

One cycle per row, comma separated decimal samples. Rows may differ in length.
The public per-beat datasets append an integer class label as the last
column; in `auto` mode it is dropped when the final value of every row is
integral.
"""
import logging
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from dsp.signal_core import (
    DEFAULT_CYCLE_LENGTH,
    DEFAULT_INPUT_RATE,
    DEFAULT_SAMPLE_RATE,
    EcgCycle,
    precondition_cycle,
)
from utils.error_handler import AllZeroSignal, BadLength, MalformedInput, handle_errors

logger = logging.getLogger(__name__)

LABEL_MODES = ("auto", "present", "absent")


def source_id_for_row(index: int) -> str:
    return f"row{index:06d}"


def _cell_text(frame: pd.DataFrame) -> pd.DataFrame:
    return frame.fillna("").astype(str).apply(lambda col: col.str.strip())


def parse_frame(frame: pd.DataFrame) -> List[np.ndarray]:
    """
    Numeric rows from a frame of raw cell text. Trailing empty cells are the
    padding of shorter rows; the row index of the first bad value is reported.
    """
    rows = []
    for index, cells in enumerate(_cell_text(frame).to_numpy(dtype=str)):
        filled = np.flatnonzero(cells != "")
        if filled.size == 0:
            raise MalformedInput("Empty row", details={"row": index})
        try:
            values = cells[: filled[-1] + 1].astype(np.float64)
        except ValueError:
            raise MalformedInput("Row contains a non-numeric value", details={"row": index})
        if not np.all(np.isfinite(values)):
            raise MalformedInput("Row contains NaN or Inf", details={"row": index})
        rows.append(values)
    return rows


def parse_rows(lines: Sequence[Sequence[str]]) -> List[np.ndarray]:
    """Numeric rows from already split cell lists"""
    return parse_frame(pd.DataFrame([list(fields) for fields in lines]))


def has_label_column(rows: Sequence[np.ndarray]) -> bool:
    return bool(rows) and all(row.size >= 2 and float(row[-1]).is_integer() for row in rows)


def drop_label_column(rows: Sequence[np.ndarray], mode: str = "auto") -> List[np.ndarray]:
    if mode not in LABEL_MODES:
        raise MalformedInput(f"Unknown label column mode {mode!r}", details={"allowed": list(LABEL_MODES)})
    drop = mode == "present" or (mode == "auto" and has_label_column(rows))
    if drop:
        logger.debug("Dropping trailing label column", extra={"rows": len(rows)})
        return [row[:-1] for row in rows]
    return list(rows)


def precondition_rows(
    rows: Sequence[np.ndarray],
    input_rate: float = DEFAULT_INPUT_RATE,
    cycle_length: int = DEFAULT_CYCLE_LENGTH,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
) -> List[EcgCycle]:
    cycles = []
    for index, row in enumerate(rows):
        try:
            cycles.append(precondition_cycle(row, source_id_for_row(index), input_rate, cycle_length, sample_rate))
        except AllZeroSignal:
            raise MalformedInput("Row contains only zeros", details={"row": index})
        except BadLength as e:
            raise MalformedInput(f"Row is too short to resample: {e.message}", details={"row": index})
    return cycles


def _field_count(path: str) -> int:
    with open(path, encoding="utf-8") as fh:
        return max((line.count(",") + 1 for line in fh if line.strip()), default=0)


@handle_errors("load_ecg_csv")
def load_ecg_csv(
    path: str,
    input_rate: float = DEFAULT_INPUT_RATE,
    cycle_length: int = DEFAULT_CYCLE_LENGTH,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    label_column: str = "auto",
    limit: Optional[int] = None,
) -> List[EcgCycle]:
    """Read, strip and resample every row (or the first `limit` rows)"""
    width = _field_count(path)
    if width == 0:
        raise MalformedInput("ECG file has no data rows", details={"path": path})
    frame = pd.read_csv(path, header=None, names=range(width), dtype=str,
                        keep_default_na=False, skip_blank_lines=True)
    frame = frame[(_cell_text(frame) != "").any(axis=1)].reset_index(drop=True)
    if limit is not None:
        frame = frame.head(limit)
    if frame.empty:
        raise MalformedInput("ECG file has no data rows", details={"path": path})

    rows = drop_label_column(parse_frame(frame), label_column)
    cycles = precondition_rows(rows, input_rate, cycle_length, sample_rate)
    logger.info("Loaded ECG cycles", extra={"path": path, "cycles": len(cycles),
                                            "cycle_length": cycle_length, "sample_rate": sample_rate})
    return cycles


