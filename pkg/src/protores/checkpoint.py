"""Checkpoint file format.

Layout: magic b"PRCK", u32 version, u64 manifest length, manifest (JSON), then
a raw payload of little-endian 32-bit floats. The manifest records the model
config, model type, and the name/shape/byte-offset of every tensor, so a
round trip is bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .errors import FormatError

MAGIC = b"PRCK"
VERSION = 1
_HEADER = struct.Struct("<4sIQ")


def save_checkpoint(params: dict[str, np.ndarray], config: ModelConfig,
                    path: str | Path, model_type: str = "protores") -> None:
    tensors = []
    chunks = []
    offset = 0
    for name, value in params.items():
        arr = np.ascontiguousarray(np.asarray(value, dtype="<f4"))
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    manifest = json.dumps(
        {"model_type": model_type, "config": config.to_dict(), "tensors": tensors},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(manifest)))
        fh.write(manifest)
        for chunk in chunks:
            fh.write(chunk)


def read_manifest(path: str | Path) -> dict:
    """Parse and validate the checkpoint header and manifest without the payload."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise FormatError("checkpoint file too short for header")
        magic, version, manifest_len = _HEADER.unpack(header)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        manifest_bytes = fh.read(manifest_len)
        if len(manifest_bytes) != manifest_len:
            raise FormatError("checkpoint file truncated inside manifest")
    try:
        manifest = json.loads(manifest_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"manifest is not valid JSON: {exc}") from exc
    for key in ("model_type", "config", "tensors"):
        if key not in manifest:
            raise FormatError(f"manifest missing key {key!r}")
    return manifest


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], ModelConfig, str]:
    """Returns (params, config, model_type)."""
    manifest = read_manifest(path)
    with open(path, "rb") as fh:
        fh.seek(0, 2)
        file_size = fh.tell()
        _, _, manifest_len = _HEADER.unpack_from(_read_at(fh, 0, _HEADER.size))
        payload_start = _HEADER.size + manifest_len
        payload_size = file_size - payload_start
        expected = 0
        for entry in manifest["tensors"]:
            count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
            end = entry["offset"] + 4 * count
            if entry["offset"] != expected:
                raise FormatError(
                    f"tensor {entry['name']!r}: offset {entry['offset']} != expected {expected}"
                )
            expected = end
        if payload_size != expected:
            raise FormatError(
                f"payload size {payload_size} does not match manifest total {expected}"
            )
        fh.seek(payload_start)
        payload = fh.read(payload_size)
    params: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=start)
        params[entry["name"]] = arr.reshape(shape).copy()
    try:
        config = ModelConfig.from_dict(manifest["config"])
    except TypeError as exc:
        raise FormatError(f"manifest config invalid: {exc}") from exc
    return params, config, manifest["model_type"]


def _read_at(fh, offset: int, size: int) -> bytes:
    fh.seek(offset)
    return fh.read(size)
