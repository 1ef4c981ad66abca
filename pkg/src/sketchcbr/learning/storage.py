"""Binary files for training samples (STSM) and fitted models (SMDL)."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, IoError, VersionError
from .oracle import SampleSet
from .selection import RegionModels
from .zoo import TARGETS, ZOO, Regressor

STSM_MAGIC = b"STSM"
STSM_VERSION = 1
_STSM_HEAD = struct.Struct("<4sBHIIQ")  # magic, version, region, dims, count, seed

SMDL_MAGIC = b"SMDL"
SMDL_VERSION = 1
_SMDL_HEAD = struct.Struct("<4sBBBHQdII")  # magic, version, kind, target, region, seed, cv_error, dim, n_sel
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i4")}


class _Reader:
    def __init__(self, blob, source):
        self.blob = blob
        self.pos = 0
        self.source = source

    def take(self, n) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(f"{self.source}: truncated file")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))

    def array(self, dtype, count):
        dtype = np.dtype(dtype)
        return np.frombuffer(self.take(dtype.itemsize * count), dtype=dtype).copy()

    def done(self):
        if self.pos != len(self.blob):
            raise FormatError(f"{self.source}: {len(self.blob) - self.pos} trailing bytes")


def _check_header(magic, version, want_magic, want_version, source):
    if magic != want_magic:
        raise FormatError(f"{source}: bad magic {magic!r}, expected {want_magic!r}")
    if version != want_version:
        raise VersionError(f"{source}: version {version} unsupported (want {want_version})")


def _read_bytes(path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise IoError(f"missing file: {path}")
    return path.read_bytes()


def _sample_dtype(dims):
    return np.dtype([("input", "<f4", (dims,)), ("theta", "<f4"), ("omega", "<f4"),
                     ("x", "<u4"), ("i", "<u4"), ("h", "<u2")])


def encode_samples(s: SampleSet) -> bytes:
    parts = [_STSM_HEAD.pack(STSM_MAGIC, STSM_VERSION, s.region, s.dim, len(s), s.seed)]
    parts.append(struct.pack("<I", len(s.case_ids)))
    for cid in s.case_ids:
        raw = str(cid).encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
    rec = np.zeros(len(s), dtype=_sample_dtype(s.dim))
    rec["input"] = s.X
    rec["theta"] = s.theta
    rec["omega"] = s.omega
    rec["x"] = s.x_index
    rec["i"] = s.i_index
    rec["h"] = s.iteration
    parts.append(rec.tobytes())
    return b"".join(parts)


def decode_samples(blob: bytes, source="<bytes>") -> SampleSet:
    r = _Reader(blob, source)
    magic, version, region, dims, count, seed = r.unpack(_STSM_HEAD)
    _check_header(magic, version, STSM_MAGIC, STSM_VERSION, source)
    (n_ids,) = r.unpack(struct.Struct("<I"))
    ids = []
    for _ in range(n_ids):
        (length,) = r.unpack(struct.Struct("<H"))
        ids.append(r.take(length).decode("utf-8"))
    rec = np.frombuffer(r.take(_sample_dtype(dims).itemsize * count), dtype=_sample_dtype(dims))
    r.done()
    if count and (rec["x"].max() >= n_ids or rec["i"].max() >= n_ids):
        raise FormatError(f"{source}: provenance index outside the id table")
    return SampleSet(region, rec["input"], rec["theta"], rec["omega"], rec["x"], rec["i"], rec["h"], ids, seed)


def write_samples(path, samples: SampleSet) -> None:
    Path(path).write_bytes(encode_samples(samples))


def read_samples(path) -> SampleSet:
    return decode_samples(_read_bytes(path), str(path))


def encode_model(m: Regressor) -> bytes:
    parts = [_SMDL_HEAD.pack(SMDL_MAGIC, SMDL_VERSION, ZOO.index(m.kind), TARGETS.index(m.target),
                             m.region, m.seed, m.cv_error, m.dim, m.selected.size)]
    parts.append(m.selected.astype("<i4").tobytes())
    parts.append(struct.pack("<H", len(m.params)))
    for name in sorted(m.params):
        arr = np.asarray(m.params[name])
        code = 1 if np.issubdtype(arr.dtype, np.integer) else 0
        raw = name.encode("ascii")
        parts.append(struct.pack("<B", len(raw)) + raw + struct.pack("<BB", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    return b"".join(parts)


def decode_model(blob: bytes, source="<bytes>") -> Regressor:
    r = _Reader(blob, source)
    magic, version, kind, target, region, seed, cv_error, dim, n_sel = r.unpack(_SMDL_HEAD)
    _check_header(magic, version, SMDL_MAGIC, SMDL_VERSION, source)
    if kind >= len(ZOO) or target >= len(TARGETS):
        raise FormatError(f"{source}: unknown model kind {kind} or target {target}")
    selected = r.array("<i4", n_sel).astype(np.int64)
    (n_arrays,) = r.unpack(struct.Struct("<H"))
    params = {}
    for _ in range(n_arrays):
        (length,) = r.unpack(struct.Struct("<B"))
        name = r.take(length).decode("ascii")
        code, ndim = r.unpack(struct.Struct("<BB"))
        if code not in _DTYPES:
            raise FormatError(f"{source}: unknown array type {code}")
        shape = r.unpack(struct.Struct(f"<{ndim}I"))
        params[name] = r.array(_DTYPES[code], int(np.prod(shape))).reshape(shape)
    r.done()
    try:
        return Regressor(ZOO[kind], TARGETS[target], selected, params, dim, region, cv_error, seed)
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from None


def write_model(path, model: Regressor) -> None:
    Path(path).write_bytes(encode_model(model))


def read_model(path) -> Regressor:
    return decode_model(_read_bytes(path), str(path))


def save_models(out_dir, models: dict) -> Path:
    """Write ``region_<r>_fe.smdl`` / ``region_<r>_pe.smdl`` and a JSON selection report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = {"schema_version": 1, "regions": {}}
    for region in sorted(models):
        rm = models[region]
        write_model(out / f"region_{region}_fe.smdl", rm.fe)
        write_model(out / f"region_{region}_pe.smdl", rm.pe)
        report["regions"][str(region)] = rm.report
    (out / "selection_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return out


def load_models(model_dir) -> dict:
    d = Path(model_dir)
    if not d.is_dir():
        raise IoError(f"missing model directory: {d}")
    out = {}
    for fe_path in sorted(d.glob("region_*_fe.smdl")):
        region = int(fe_path.name.split("_")[1])
        fe = read_model(fe_path)
        pe = read_model(d / f"region_{region}_pe.smdl")
        out[region] = RegionModels(region, fe, pe)
    if not out:
        raise IoError(f"{d}: no region models found")
    return out
