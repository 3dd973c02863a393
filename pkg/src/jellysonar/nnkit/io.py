"""Model directory format.

``model.json``::

    {"format_version": 1,
     "entries": [{"name": ..., "shape": [...], "dtype": "f32le", "byte_offset": ...}, ...]}

``weights.bin`` holds the tensors as little-endian float32, concatenated in
manifest order with no padding.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import (
    DuplicateNameError,
    FormatError,
    MissingFileError,
    OffsetError,
    SizeMismatchError,
    TruncatedDataError,
    UnknownDtypeError,
    VersionMismatchError,
)
from .model import ModelParams

FORMAT_VERSION = 1
MANIFEST = "model.json"
BLOB = "weights.bin"
_F32LE = np.dtype("<f4")


def save_model(params: ModelParams, path, extra: dict | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for name in params:
        arr = np.asarray(params[name], dtype=_F32LE, order="C")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "f32le", "byte_offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    manifest = {"format_version": FORMAT_VERSION, "entries": entries}
    if extra:
        manifest["meta"] = extra
    (path / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    (path / BLOB).write_bytes(b"".join(chunks))
    return path


def read_model_meta(path) -> dict:
    return _read_manifest(Path(path)).get("meta", {})


def _read_manifest(path: Path) -> dict:
    mpath = path / MANIFEST
    if not mpath.is_file():
        raise MissingFileError(f"missing {mpath}")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{mpath}: invalid JSON ({exc})") from None
    if manifest.get("format_version") != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{mpath}: format_version {manifest.get('format_version')!r}, expected {FORMAT_VERSION}"
        )
    return manifest


def load_model(path) -> ModelParams:
    path = Path(path)
    manifest = _read_manifest(path)
    bpath = path / BLOB
    if not bpath.is_file():
        raise MissingFileError(f"missing {bpath}")
    blob = bpath.read_bytes()

    seen, entries, expected = set(), {}, 0
    for rec in manifest.get("entries", []):
        name = rec["name"]
        if name in seen:
            raise DuplicateNameError(f"duplicate tensor name {name!r}")
        seen.add(name)
        if rec.get("dtype") != "f32le":
            raise UnknownDtypeError(f"{name}: unknown dtype {rec.get('dtype')!r}")
        shape = tuple(int(s) for s in rec["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        if rec["byte_offset"] != expected:
            raise OffsetError(f"{name}: byte_offset {rec['byte_offset']} but expected {expected}")
        if expected + nbytes > len(blob):
            raise TruncatedDataError(f"{name}: needs bytes up to {expected + nbytes}, blob has {len(blob)}")
        entries[name] = np.frombuffer(blob, dtype=_F32LE, count=nbytes // 4, offset=expected).reshape(shape)
        expected += nbytes
    if expected != len(blob):
        raise SizeMismatchError(f"{bpath}: {len(blob)} bytes but manifest accounts for {expected}")
    return ModelParams(entries, dtype=np.float32)
