"""Binary checkpoint container: config JSON + named float32 tensors + CRC.

Layout (all integers little-endian):

    bytes 0..3    magic b"LGNC"
    u32           container version (1)
    u32           header length
    header        UTF-8 JSON: {"config": ..., "meta": ..., "tensors": [...]}
    data          concatenated raw little-endian float32 tensor payloads
    u32           CRC-32 of every preceding byte

Tensors are written sorted by name so identical state always produces
identical bytes.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

MAGIC = b"LGNC"
CONTAINER_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable checkpoint: bad magic, version, structure, or checksum."""


def save_container(path: str, config: dict, meta: dict, tensors: dict[str, np.ndarray]) -> None:
    names = sorted(tensors)
    entries = []
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "f32"})
        blobs.append(arr.tobytes())

    header = json.dumps(
        {"config": config, "meta": meta, "tensors": entries},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")

    body = MAGIC + struct.pack("<II", CONTAINER_VERSION, len(header)) + header + b"".join(blobs)
    crc = zlib.crc32(body) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(body + struct.pack("<I", crc))


def load_container(path: str) -> tuple[dict, dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise CheckpointError("file too short to be a checkpoint")
    if raw[:4] != MAGIC:
        raise CheckpointError(f"bad magic: expected {MAGIC!r}, got {raw[:4]!r}")

    stored_crc = struct.unpack_from("<I", raw, len(raw) - 4)[0]
    actual_crc = zlib.crc32(raw[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise CheckpointError(
            f"checksum mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )

    version, header_len = struct.unpack_from("<II", raw, 4)
    if version != CONTAINER_VERSION:
        raise CheckpointError(f"unsupported container version {version}")

    header_end = 12 + header_len
    if header_end > len(raw) - 4:
        raise CheckpointError("truncated header")
    try:
        header = json.loads(raw[12:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable header: {exc}") from exc

    tensors: dict[str, np.ndarray] = {}
    pos = header_end
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        if pos + nbytes > len(raw) - 4:
            raise CheckpointError(f"tensor '{entry['name']}' extends past end of file")
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=pos).reshape(shape)
        tensors[entry["name"]] = arr.copy()
        pos += nbytes
    if pos != len(raw) - 4:
        raise CheckpointError("trailing bytes after last tensor")

    return header["config"], header["meta"], tensors
