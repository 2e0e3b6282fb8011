"""Tensor and checkpoint serialization.

Tensor files ("M3T1"): the four magic bytes, an unsigned 32-bit
little-endian rank, rank unsigned 32-bit little-endian extents, then the
float64 little-endian payload in row-major order.

Checkpoint files ("M3C1"): the four magic bytes, an unsigned 32-bit
little-endian length of a UTF-8 JSON index, the index itself, then a payload
of concatenated M3T1 blobs.  The index holds {"meta": {...}, "tensors":
{name: {"offset": byte offset into the payload, "shape": [...]}}} with
sorted keys, so identical contents always serialize to identical bytes.

Images can additionally be exported as 8-bit binary PGM (P5) for eyeballing.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError

TENSOR_MAGIC = b"M3T1"
CHECKPOINT_MAGIC = b"M3C1"


def tensor_bytes(arr: np.ndarray) -> bytes:
    """Serialize one array to M3T1 bytes."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)
    head = TENSOR_MAGIC + struct.pack("<I", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
    return head + arr.tobytes(order="C")


def tensor_from_bytes(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Parse one M3T1 blob, returning the array and the offset past it."""
    if buf[offset : offset + 4] != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic at offset {offset}")
    pos = offset + 4
    if len(buf) < pos + 4:
        raise FormatError("truncated tensor header")
    (ndim,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    if ndim > 32:
        raise FormatError(f"implausible tensor rank {ndim}")
    if len(buf) < pos + 4 * ndim:
        raise FormatError("truncated tensor extents")
    shape = struct.unpack_from(f"<{ndim}I", buf, pos) if ndim else ()
    pos += 4 * ndim
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    nbytes = count * 8
    if len(buf) < pos + nbytes:
        raise FormatError("truncated tensor payload")
    arr = np.frombuffer(buf[pos : pos + nbytes], dtype="<f8").reshape(shape).copy()
    return arr, pos + nbytes


def write_tensor(path, arr: np.ndarray) -> None:
    Path(path).write_bytes(tensor_bytes(arr))


def read_tensor(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    arr, end = tensor_from_bytes(buf)
    if end != len(buf):
        raise FormatError(f"{path}: {len(buf) - end} trailing bytes")
    return arr


def write_pgm(path, img: np.ndarray) -> None:
    """Export an image in [0, 1] as binary 8-bit PGM.

    Accepts (H, W), (H, W, 1), or (H, W, 3); multi-channel input is averaged
    to one gray channel.  Values are clipped to [0, 1] and rounded.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        img = img.mean(axis=2)
    if img.ndim != 2:
        raise FormatError(f"write_pgm expects an image, got shape {img.shape}")
    h, w = img.shape
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes(order="C"))


def _index_json(meta: dict, entries: dict) -> bytes:
    doc = {"meta": meta, "tensors": entries}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    """Write named tensors plus a JSON metadata block as one container file.

    Tensor names are stored in sorted order; identical inputs produce
    byte-identical files.
    """
    blobs: list[bytes] = []
    entries: dict[str, dict] = {}
    offset = 0
    for name in sorted(tensors):
        blob = tensor_bytes(tensors[name])
        entries[name] = {
            "offset": offset,
            "shape": [int(s) for s in np.asarray(tensors[name]).shape],
        }
        blobs.append(blob)
        offset += len(blob)
    index = _index_json(meta, entries)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(index)))
        fh.write(index)
        for blob in blobs:
            fh.write(blob)


def read_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Load a checkpoint container, returning (tensors, meta)."""
    buf = Path(path).read_bytes()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic")
    if len(buf) < 8:
        raise FormatError(f"{path}: truncated checkpoint header")
    (jlen,) = struct.unpack_from("<I", buf, 4)
    if len(buf) < 8 + jlen:
        raise FormatError(f"{path}: truncated checkpoint index")
    try:
        doc = json.loads(buf[8 : 8 + jlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable checkpoint index: {exc}") from exc
    if not isinstance(doc, dict) or "tensors" not in doc or "meta" not in doc:
        raise FormatError(f"{path}: checkpoint index missing required keys")
    payload_start = 8 + jlen
    tensors: dict[str, np.ndarray] = {}
    for name, entry in doc["tensors"].items():
        arr, _ = tensor_from_bytes(buf, payload_start + int(entry["offset"]))
        if list(arr.shape) != [int(s) for s in entry["shape"]]:
            raise FormatError(f"{path}: shape mismatch for tensor {name!r}")
        tensors[name] = arr
    return tensors, doc["meta"]
