"""Named-tensor checkpoint archive.

Layout: magic ``NTCKPT1\\n``, a little-endian uint64 header length, a JSON
header listing tensors as ``{"name", "shape", "offset", "nbytes"}`` (offsets
relative to the data section), then the raw buffers. Values are stored as
little-endian float32 regardless of the in-memory dtype; loading returns
float32 arrays and consumers cast back. Byte output is deterministic.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError, IoError

MAGIC = b"NTCKPT1\n"


def save_checkpoint(tensors: dict, path) -> Path:
    """Write named arrays/tensors; names are sorted for deterministic bytes."""
    path = Path(path)
    entries = []
    buffers = []
    offset = 0
    for name in sorted(tensors):
        value = tensors[name]
        if hasattr(value, "detach"):  # torch tensor
            value = value.detach().cpu().numpy()
        arr = np.asarray(value).astype("<f4", copy=False)
        raw = arr.tobytes()  # C-order bytes; preserves 0-dim shapes
        entries.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        )
        buffers.append(raw)
        offset += len(raw)
    header = json.dumps({"tensors": entries}, sort_keys=True).encode("utf-8")
    try:
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<Q", len(header)))
            f.write(header)
            for raw in buffers:
                f.write(raw)
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a checkpoint back as {name: float32 array}."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"incompatible checkpoint: {path} is not a tensor archive")
    (header_len,) = struct.unpack_from("<Q", raw, len(MAGIC))
    header_start = len(MAGIC) + 8
    data_start = header_start + header_len
    if data_start > len(raw):
        raise CheckpointError(f"incompatible checkpoint: {path} is truncated")
    try:
        header = json.loads(raw[header_start:data_start].decode("utf-8"))
        entries = header["tensors"]
    except (ValueError, KeyError) as exc:
        raise CheckpointError(f"incompatible checkpoint: {path} has a corrupt header") from exc

    tensors: dict[str, np.ndarray] = {}
    for entry in entries:
        start = data_start + int(entry["offset"])
        end = start + int(entry["nbytes"])
        if end > len(raw):
            raise CheckpointError(f"incompatible checkpoint: {path} data section truncated")
        arr = np.frombuffer(raw[start:end], dtype="<f4").reshape(entry["shape"])
        tensors[str(entry["name"])] = np.array(arr)
    return tensors
