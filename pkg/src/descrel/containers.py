"""Shared on-disk container helpers.

Each persisted artifact is a directory holding a canonical JSON manifest plus
one raw binary blob of little-endian float32 values. Blobs start with a
16-byte header:

    bytes 0..7   magic (8 ASCII bytes, identifies the artifact kind)
    bytes 8..11  u32 little-endian count   (artifact-specific row count)
    bytes 12..15 u32 little-endian dim     (artifact-specific width)

followed by the payload floats. Writers emit sorted-key JSON with a trailing
newline and no timestamps, so saving the same object twice produces
byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

PACK_MAGIC = b"SSDPACK1"
DATA_MAGIC = b"SSDDATA1"
CKPT_MAGIC = b"SSDCKPT1"

HEADER_LEN = 16
_HEADER_FMT = "<8sII"


def canonical_json(obj) -> str:
    """Stable serialization: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path: Path, obj) -> None:
    path.write_text(canonical_json(obj), encoding="utf-8")


def read_json(path: Path):
    if not path.is_file():
        raise FormatError("missing manifest", path=str(path))
    text = path.read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"bad JSON: {e.msg}", path=str(path), offset=e.pos) from None


def write_blob(path: Path, magic: bytes, count: int, dim: int, floats: np.ndarray) -> None:
    """Write header + float32 payload. floats may be any shape; stored flat."""
    if len(magic) != 8:
        raise FormatError(f"magic must be 8 bytes, got {len(magic)}")
    payload = np.ascontiguousarray(floats, dtype="<f4").tobytes()
    header = struct.pack(_HEADER_FMT, magic, int(count), int(dim))
    path.write_bytes(header + payload)


def read_blob(path: Path, magic: bytes,
              expected_floats: int | None = None) -> tuple[int, int, np.ndarray]:
    """Read and check a blob. Returns (count, dim, flat float32 array).

    Errors carry the byte offset of the first inconsistency: 0 for a bad
    magic, 8/12 for header fields, HEADER_LEN for payload-length mismatches.
    """
    if not path.is_file():
        raise FormatError("missing blob", path=str(path))
    raw = path.read_bytes()
    if len(raw) < HEADER_LEN:
        raise FormatError(
            f"blob shorter than {HEADER_LEN}-byte header ({len(raw)} bytes)",
            path=str(path), offset=len(raw))
    got_magic, count, dim = struct.unpack(_HEADER_FMT, raw[:HEADER_LEN])
    if got_magic != magic:
        raise FormatError(
            f"bad magic {got_magic!r}, expected {magic!r}", path=str(path), offset=0)
    payload = raw[HEADER_LEN:]
    if len(payload) % 4 != 0:
        raise FormatError(
            f"payload length {len(payload)} is not a multiple of 4",
            path=str(path), offset=HEADER_LEN + len(payload) - len(payload) % 4)
    flat = np.frombuffer(payload, dtype="<f4")
    if expected_floats is not None and flat.size != expected_floats:
        raise FormatError(
            f"payload holds {flat.size} floats, expected {expected_floats} "
            f"for count={count} dim={dim}",
            path=str(path), offset=HEADER_LEN)
    return count, dim, flat
