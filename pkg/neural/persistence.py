"""
Model file container.

Layout (all integers little endian):

    4 bytes   magic b"MCGM"
    uint16    format version
    uint32    byte length A of the architecture block
    A bytes   architecture as UTF-8 JSON, sorted keys
    ...       every tensor in PARAM_ORDER as '<f8', C order, shapes implied
              by the architecture
"""
import json
import logging
import os
import struct
from typing import Union

import numpy as np
from pydantic import ValidationError

from neural.model import FORMAT_VERSION, PARAM_ORDER, DenoiserModel, ModelArch
from utils.error_handler import ArchMismatch, BadMagic, TruncatedFile, UnsupportedVersion, handle_errors

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"MCGM"
_HEADER = struct.Struct("<4sHI")

PathLike = Union[str, os.PathLike]


def encode_model(model: DenoiserModel) -> bytes:
    arch_block = json.dumps(model.arch.model_dump(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [_HEADER.pack(MODEL_MAGIC, FORMAT_VERSION, len(arch_block)), arch_block]
    for name, value in model.parameters().items():
        parts.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    return b"".join(parts)


def decode_model(blob: bytes) -> DenoiserModel:
    if len(blob) < 4 or blob[:4] != MODEL_MAGIC:
        raise BadMagic(details={"found": blob[:4].hex()})
    if len(blob) < _HEADER.size:
        raise TruncatedFile("Model header is incomplete", details={"size": len(blob)})
    _, version, arch_len = _HEADER.unpack_from(blob, 0)
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(details={"version": version, "supported": FORMAT_VERSION})

    offset = _HEADER.size
    if len(blob) < offset + arch_len:
        raise TruncatedFile("Architecture block is incomplete", details={"expected": arch_len})
    try:
        arch = ModelArch(**json.loads(blob[offset:offset + arch_len].decode("utf-8")))
    except (ValueError, TypeError, ValidationError) as e:
        raise ArchMismatch(f"Architecture block is invalid: {e}")
    if arch.format_version != version:
        raise ArchMismatch("Architecture block disagrees with header version",
                           details={"header": version, "block": arch.format_version})
    offset += arch_len

    shapes = arch.param_shapes()
    params = {}
    for name in PARAM_ORDER:
        count = int(np.prod(shapes[name]))
        end = offset + 8 * count
        if end > len(blob):
            raise TruncatedFile(details={"parameter": name, "expected_bytes": end, "size": len(blob)})
        params[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).astype(np.float64).reshape(shapes[name])
        offset = end
    if offset != len(blob):
        raise ArchMismatch("Trailing bytes after the last tensor",
                           details={"trailing_bytes": len(blob) - offset})
    return DenoiserModel.from_parameters(arch, params)


@handle_errors("save_model")
def save_model(model: DenoiserModel, path: PathLike) -> None:
    """Write atomically: a temp file beside the target is renamed over it"""
    path = os.fspath(path)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(encode_model(model))
    os.replace(tmp, path)
    logger.info("Saved model", extra={"path": path, "arch": model.arch.model_dump()})


@handle_errors("load_model")
def load_model(path: PathLike) -> DenoiserModel:
    with open(os.fspath(path), "rb") as fh:
        blob = fh.read()
    return decode_model(blob)
