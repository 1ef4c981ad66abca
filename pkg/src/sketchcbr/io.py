"""File formats: grayscale PNG, landmark/region-map JSON, EFLD displacement fields."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, FormatError, IoError, VersionError
from .geometry import N_LANDMARKS, RegionMap, to_uint8

EFLD_MAGIC = b"EFLD"
EFLD_VERSION = 1
_EFLD_HEADER = struct.Struct("<4sBII")


def _require(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise IoError(f"missing file: {path}")
    return path


def read_png(path) -> np.ndarray:
    path = _require(path)
    try:
        with Image.open(path) as im:
            return np.array(im.convert("L"), dtype=np.uint8)
    except OSError as exc:
        raise FormatError(f"{path}: not a readable image ({exc})") from None


def write_png(path, img) -> None:
    Image.fromarray(to_uint8(img), mode="L").save(Path(path), format="PNG", optimize=False)


def read_landmarks(path, n=N_LANDMARKS) -> np.ndarray:
    """Read a JSON array of ``n`` ``[x, y]`` pairs."""
    path = _require(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if (not isinstance(data, list)
            or not all(isinstance(p, list) and len(p) == 2 for p in data)
            or not all(isinstance(c, (int, float)) for p in data for c in p)):
        raise FormatError(f"{path}: expected a JSON array of [x, y] number pairs")
    if len(data) != n:
        raise FormatError(f"{path}: expected {n} landmarks, found {len(data)}")
    return np.asarray(data, dtype=np.float64)


def write_landmarks(path, pts) -> None:
    pts = np.asarray(pts, dtype=np.float64)
    Path(path).write_text(json.dumps([[float(x), float(y)] for x, y in pts]) + "\n")


def read_region_map(path) -> RegionMap:
    path = _require(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: region map must be a JSON object")
    return RegionMap(data)


def write_region_map(path, region_map: RegionMap) -> None:
    Path(path).write_text(json.dumps(region_map.to_json_obj(), indent=1) + "\n")


def encode_field(field) -> bytes:
    field = np.asarray(field)
    h, w, two = field.shape
    assert two == 2
    body = np.ascontiguousarray(field, dtype="<f4").tobytes()
    return _EFLD_HEADER.pack(EFLD_MAGIC, EFLD_VERSION, w, h) + body


def decode_field(blob: bytes, source="<bytes>") -> np.ndarray:
    if len(blob) < _EFLD_HEADER.size:
        raise FormatError(f"{source}: truncated EFLD header")
    magic, version, w, h = _EFLD_HEADER.unpack_from(blob)
    if magic != EFLD_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}, expected {EFLD_MAGIC!r}")
    if version != EFLD_VERSION:
        raise VersionError(f"{source}: EFLD version {version} unsupported (want {EFLD_VERSION})")
    expected = _EFLD_HEADER.size + w * h * 2 * 4
    if len(blob) != expected:
        raise FormatError(f"{source}: EFLD payload is {len(blob)} bytes, expected {expected}")
    data = np.frombuffer(blob, dtype="<f4", offset=_EFLD_HEADER.size)
    return data.reshape(h, w, 2).astype(np.float32)


def write_field(path, field) -> None:
    Path(path).write_bytes(encode_field(field))


def read_field(path) -> np.ndarray:
    path = _require(path)
    return decode_field(path.read_bytes(), str(path))
