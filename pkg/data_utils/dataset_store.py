"""
Synthesized dataset storage.

A dataset directory holds the preconditioned ECG cycles, the synthesized MCG
cycles and `manifest.json`. Cycles are stored either in the binary container

    4 bytes   magic b"MCG1"
    uint32    cycle count
    uint32    cycle length
    float64   sample rate, Hz
    ...       count * length samples as '<f8', one cycle after another

or as CSV with one cycle per row at 17 significant digits. The manifest keeps
the only wall-clock value under its `created_at` key.
"""
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from dsp.noise_synth import NoiseSpec
from dsp.signal_core import EcgCycle, McgCycle, SampledSignal, UNIT_NORMALIZED
from utils.error_handler import BadMagic, LengthMismatch, MalformedInput, TruncatedFile, handle_errors
from utils.seeding import RNG_ALGORITHM

logger = logging.getLogger(__name__)

CONTAINER_MAGIC = b"MCG1"
_HEADER = struct.Struct("<4sIId")

FORMATS = ("binary", "csv")
MANIFEST_NAME = "manifest.json"
SEED_SCHEME = "noise.seed XOR blake2b64(f'{ecg_ref}:{realization}')"

_FILES = {
    "binary": {"ecg": "ecg.bin", "mcg": "mcg.bin"},
    "csv": {"ecg": "ecg.csv", "mcg": "mcg.csv"},
}


@dataclass
class StoredDataset:
    ecgs: List[EcgCycle]
    mcgs: List[McgCycle]
    manifest: Dict[str, Any] = field(default_factory=dict)

    def ecg_by_id(self) -> Dict[str, EcgCycle]:
        return {c.source_id: c for c in self.ecgs}

    def pairs(self, cycle_ids=None) -> List[Tuple[McgCycle, EcgCycle]]:
        """(mcg, source ecg) pairs in stored order, optionally restricted to source ids"""
        by_id = self.ecg_by_id()
        wanted = None if cycle_ids is None else set(cycle_ids)
        return [(m, by_id[m.ecg_ref]) for m in self.mcgs if wanted is None or m.ecg_ref in wanted]


# ============== Binary container ==============

def _as_matrix(signals: Sequence[SampledSignal]) -> Tuple[np.ndarray, float]:
    if not signals:
        return np.empty((0, 0)), 0.0
    lengths = {len(s) for s in signals}
    rates = {s.sample_rate for s in signals}
    if len(lengths) != 1 or len(rates) != 1:
        raise LengthMismatch("Stored cycles must share one length and rate",
                             details={"lengths": sorted(lengths), "rates": sorted(rates)})
    return np.stack([s.samples for s in signals]), rates.pop()


def encode_container(signals: Sequence[SampledSignal]) -> bytes:
    matrix, rate = _as_matrix(signals)
    count, length = matrix.shape
    header = _HEADER.pack(CONTAINER_MAGIC, count, length, rate)
    return header + np.ascontiguousarray(matrix, dtype="<f8").tobytes()


def decode_container(blob: bytes) -> Tuple[np.ndarray, float]:
    """(count, length) float64 matrix and the sample rate"""
    if blob[:4] != CONTAINER_MAGIC:
        raise BadMagic(details={"found": blob[:4].hex(), "expected": CONTAINER_MAGIC.decode()})
    if len(blob) < _HEADER.size:
        raise TruncatedFile("Container header is incomplete", details={"size": len(blob)})
    _, count, length, rate = _HEADER.unpack_from(blob, 0)
    expected = _HEADER.size + 8 * count * length
    if len(blob) != expected:
        raise TruncatedFile(details={"expected_bytes": expected, "size": len(blob)})
    data = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    return data.reshape(count, length), float(rate)


# ============== CSV ==============

def write_cycles_csv(path: str, signals: Sequence[SampledSignal]) -> None:
    matrix, _ = _as_matrix(signals)
    pd.DataFrame(matrix).to_csv(path, header=False, index=False, float_format="%.17g")


def read_cycles_csv(path: str) -> np.ndarray:
    try:
        frame = pd.read_csv(path, header=None, dtype=np.float64, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        return np.empty((0, 0))
    except ValueError as e:
        raise MalformedInput(f"Cycle CSV is malformed: {e}", details={"path": path})
    matrix = frame.to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(matrix)):
        rows = np.flatnonzero(~np.isfinite(matrix).all(axis=1))
        raise MalformedInput("Cycle CSV has missing or non-finite values",
                             details={"path": path, "row": int(rows[0])})
    return matrix


# ============== Manifest ==============

def build_manifest(
    ecgs: Sequence[EcgCycle],
    mcgs: Sequence[McgCycle],
    spec: NoiseSpec,
    fmt: str,
    extra: Dict[str, Any] = None,
) -> Dict[str, Any]:
    first = ecgs[0].signal if ecgs else None
    manifest = {
        "created_at": datetime.now(timezone.utc).isoformat(),
        "format": fmt,
        "files": _FILES[fmt],
        "rng": RNG_ALGORITHM,
        "seed_scheme": SEED_SCHEME,
        "noise": spec.model_dump(),
        "sample_rate": first.sample_rate if first else None,
        "cycle_length": len(first) if first else None,
        "counts": {"ecg": len(ecgs), "mcg": len(mcgs)},
        "ecg_ids": [c.source_id for c in ecgs],
        "mcg": [
            {"cycle_id": m.cycle_id, "ecg_ref": m.ecg_ref, "realization": m.realization, "noise_seed": m.noise_seed}
            for m in mcgs
        ],
    }
    manifest.update(extra or {})
    return manifest


def _write_bytes(path: str, data: bytes) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


@handle_errors("save_dataset")
def save_dataset(
    out_dir: str,
    ecgs: Sequence[EcgCycle],
    mcgs: Sequence[McgCycle],
    spec: NoiseSpec,
    fmt: str = "binary",
    extra: Dict[str, Any] = None,
) -> Dict[str, Any]:
    """Write cycles and manifest into out_dir; returns the manifest"""
    if fmt not in FORMATS:
        raise MalformedInput(f"Unknown dataset format {fmt!r}", details={"allowed": list(FORMATS)})
    os.makedirs(out_dir, exist_ok=True)
    files = _FILES[fmt]
    ecg_signals = [c.signal for c in ecgs]
    mcg_signals = [c.signal for c in mcgs]
    if fmt == "binary":
        _write_bytes(os.path.join(out_dir, files["ecg"]), encode_container(ecg_signals))
        _write_bytes(os.path.join(out_dir, files["mcg"]), encode_container(mcg_signals))
    else:
        write_cycles_csv(os.path.join(out_dir, files["ecg"]), ecg_signals)
        write_cycles_csv(os.path.join(out_dir, files["mcg"]), mcg_signals)

    manifest = build_manifest(ecgs, mcgs, spec, fmt, extra)
    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    logger.info("Saved dataset", extra={"out_dir": out_dir, "format": fmt, **manifest["counts"]})
    return manifest


@handle_errors("load_dataset")
def load_dataset(data_dir: str) -> StoredDataset:
    with open(os.path.join(data_dir, MANIFEST_NAME), encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as e:
            raise MalformedInput(f"Manifest is not valid JSON: {e}", details={"dir": data_dir})

    fmt = manifest.get("format")
    if fmt not in FORMATS:
        raise MalformedInput("Manifest names an unknown format", details={"format": fmt})
    files = manifest["files"]
    rate = float(manifest["sample_rate"] or 0.0)
    if fmt == "binary":
        with open(os.path.join(data_dir, files["ecg"]), "rb") as fh:
            ecg_matrix, rate = decode_container(fh.read())
        with open(os.path.join(data_dir, files["mcg"]), "rb") as fh:
            mcg_matrix, _ = decode_container(fh.read())
    else:
        ecg_matrix = read_cycles_csv(os.path.join(data_dir, files["ecg"]))
        mcg_matrix = read_cycles_csv(os.path.join(data_dir, files["mcg"]))

    ecg_ids = manifest["ecg_ids"]
    entries = manifest["mcg"]
    if len(ecg_ids) != ecg_matrix.shape[0] or len(entries) != mcg_matrix.shape[0]:
        raise MalformedInput("Manifest counts disagree with stored cycles",
                             details={"ecg_ids": len(ecg_ids), "ecg_rows": int(ecg_matrix.shape[0]),
                                      "mcg_entries": len(entries), "mcg_rows": int(mcg_matrix.shape[0])})

    ecgs = [EcgCycle(SampledSignal(row, rate, UNIT_NORMALIZED), sid) for row, sid in zip(ecg_matrix, ecg_ids)]
    mcgs = [
        McgCycle(
            signal=SampledSignal(row, rate, UNIT_NORMALIZED),
            ecg_ref=entry["ecg_ref"],
            noise_seed=int(entry["noise_seed"]),
            cycle_id=entry["cycle_id"],
            realization=int(entry["realization"]),
        )
        for row, entry in zip(mcg_matrix, entries)
    ]
    logger.info("Loaded dataset", extra={"dir": data_dir, "ecg": len(ecgs), "mcg": len(mcgs)})
    return StoredDataset(ecgs, mcgs, manifest)
