"""Sketch-synthesis cases: exaggeration field, neutral sketch, library persistence."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .errors import DimensionError, FormatError, IoError, ValidationError, VersionError
from .geometry import (
    RegionMap,
    apply_field,
    default_region_map,
    mls_field,
    to_uint8,
    validate_landmarks,
)

LIBRARY_VERSION = 1


@dataclass(eq=False)
class Case:
    """One exemplar: photo, stylised sketch, neutral sketch, exaggeration field, landmarks.

    Images are uint8 arrays; the exaggeration field is a float32
    ``(height, width, 2)`` array.
    """

    id: str
    photo: np.ndarray
    sketch: np.ndarray
    neutral_sketch: np.ndarray
    exaggeration_field: np.ndarray
    photo_landmarks: np.ndarray
    sketch_landmarks: np.ndarray
    neutral_landmarks: np.ndarray

    @property
    def shape(self):
        return self.photo.shape

    def same_as(self, other: "Case") -> bool:
        """Bit-exact equality of every field."""
        names = ("photo", "sketch", "neutral_sketch", "exaggeration_field",
                 "photo_landmarks", "sketch_landmarks", "neutral_landmarks")
        return self.id == other.id and all(
            getattr(self, n).dtype == getattr(other, n).dtype
            and np.array_equal(getattr(self, n), getattr(other, n)) for n in names)


@dataclass(eq=False)
class CaseLibrary:
    style_id: str
    cases: list
    region_map: RegionMap = field(default_factory=default_region_map)

    def __post_init__(self):
        if not self.cases:
            raise ValidationError("a case library needs at least one case")
        shape = self.cases[0].shape
        for c in self.cases:
            if c.shape != shape:
                raise ValidationError(f"case {c.id} has shape {c.shape}, library uses {shape}")
        ids = [c.id for c in self.cases]
        if len(set(ids)) != len(ids):
            raise ValidationError("case ids must be unique")

    def __len__(self):
        return len(self.cases)

    def __iter__(self):
        return iter(self.cases)

    @property
    def height(self):
        return self.cases[0].shape[0]

    @property
    def width(self):
        return self.cases[0].shape[1]

    def ids(self):
        return [c.id for c in self.cases]

    def index(self, case_id) -> int:
        return self.ids().index(case_id)

    def without(self, case_id) -> "CaseLibrary":
        return CaseLibrary(self.style_id, [c for c in self.cases if c.id != case_id], self.region_map)

    def subset(self, ids) -> "CaseLibrary":
        keep = set(ids)
        return CaseLibrary(self.style_id, [c for c in self.cases if c.id in keep], self.region_map)


def build_case(photo, sketch, q_photo, q_sketch, case_id="case") -> Case:
    """Build one case from a photo/sketch pair and their landmarks.

    The exaggeration field is the MLS displacement from the photo layout to
    the sketch layout.  The neutral sketch is the sketch remapped by the
    reverse deformation, which puts its landmarks on the photo layout.
    """
    photo = np.asarray(photo)
    sketch = np.asarray(sketch)
    if photo.ndim != 2 or photo.shape != sketch.shape:
        raise DimensionError(f"photo {photo.shape} and sketch {sketch.shape} must be equal 2-D shapes")
    h, w = photo.shape
    q_photo = validate_landmarks(q_photo, w, h)
    q_sketch = validate_landmarks(q_sketch, w, h)
    field_fwd = mls_field(q_photo, q_sketch, w, h)
    if np.array_equal(q_photo, q_sketch):
        neutral = to_uint8(sketch)
    else:
        neutral = to_uint8(apply_field(sketch, mls_field(q_sketch, q_photo, w, h)))
    return Case(
        id=str(case_id),
        photo=to_uint8(photo),
        sketch=to_uint8(sketch),
        neutral_sketch=neutral,
        exaggeration_field=field_fwd.astype(np.float32),
        photo_landmarks=q_photo.copy(),
        sketch_landmarks=q_sketch.copy(),
        neutral_landmarks=q_photo.copy(),
    )


_MANIFEST_KEYS = ("id", "photo", "sketch", "photo_landmarks", "sketch_landmarks")


def read_manifest(manifest_path) -> list:
    path = Path(manifest_path)
    if not path.exists():
        raise IoError(f"missing manifest: {path}")
    try:
        entries = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(entries, list):
        raise FormatError(f"{path}: manifest must be a JSON list")
    for k, e in enumerate(entries):
        missing = [key for key in _MANIFEST_KEYS if not isinstance(e, dict) or key not in e]
        if missing:
            raise FormatError(f"{path}: entry {k} lacks {missing}")
    return entries


def ingest_dataset(manifest_path, region_map: RegionMap | None = None, style_id=None) -> CaseLibrary:
    """Read a dataset manifest and build every case, in manifest order."""
    path = Path(manifest_path)
    entries = read_manifest(path)
    if not entries:
        raise ValidationError(f"{path}: manifest lists no pairs")
    root = path.parent
    cases = []
    shape = None
    for e in entries:
        photo = io.read_png(root / e["photo"])
        sketch = io.read_png(root / e["sketch"])
        q_photo = io.read_landmarks(root / e["photo_landmarks"])
        q_sketch = io.read_landmarks(root / e["sketch_landmarks"])
        if photo.shape != sketch.shape:
            raise ValidationError(f"{e['id']}: photo {photo.shape} and sketch {sketch.shape} differ")
        if shape is None:
            shape = photo.shape
        elif photo.shape != shape:
            raise ValidationError(f"{e['id']}: image shape {photo.shape} differs from {shape}")
        try:
            cases.append(build_case(photo, sketch, q_photo, q_sketch, e["id"]))
        except ValidationError as exc:
            raise ValidationError(f"{e['id']}: {exc}") from None
    return CaseLibrary(style_id or path.parent.name, cases, region_map or default_region_map())


def save_library(lib: CaseLibrary, out_dir) -> Path:
    """Write ``library.json`` plus one directory per case."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for k, c in enumerate(lib.cases):
        sub = f"case_{k:04d}"
        d = out / sub
        d.mkdir(exist_ok=True)
        io.write_png(d / "photo.png", c.photo)
        io.write_png(d / "sketch.png", c.sketch)
        io.write_png(d / "neutral.png", c.neutral_sketch)
        io.write_field(d / "field.efld", c.exaggeration_field)
        io.write_landmarks(d / "landmarks_photo.json", c.photo_landmarks)
        io.write_landmarks(d / "landmarks_sketch.json", c.sketch_landmarks)
        io.write_landmarks(d / "landmarks_neutral.json", c.neutral_landmarks)
        index.append({"id": c.id, "dir": sub})
    meta = {
        "format_version": LIBRARY_VERSION,
        "style_id": lib.style_id,
        "width": lib.width,
        "height": lib.height,
        "region_map": lib.region_map.to_json_obj(),
        "cases": index,
    }
    (out / "library.json").write_text(json.dumps(meta, indent=2) + "\n")
    return out


def load_library(lib_dir) -> CaseLibrary:
    d = Path(lib_dir)
    meta_path = d / "library.json"
    if not meta_path.exists():
        raise IoError(f"{d}: no library.json (not a saved case library)")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{meta_path}: invalid JSON ({exc})") from None
    version = meta.get("format_version")
    if version != LIBRARY_VERSION:
        raise VersionError(f"{meta_path}: library version {version} unsupported (want {LIBRARY_VERSION})")
    cases = []
    for entry in meta["cases"]:
        sub = d / entry["dir"]
        field_ = io.read_field(sub / "field.efld")
        c = Case(
            id=entry["id"],
            photo=io.read_png(sub / "photo.png"),
            sketch=io.read_png(sub / "sketch.png"),
            neutral_sketch=io.read_png(sub / "neutral.png"),
            exaggeration_field=field_,
            photo_landmarks=io.read_landmarks(sub / "landmarks_photo.json"),
            sketch_landmarks=io.read_landmarks(sub / "landmarks_sketch.json"),
            neutral_landmarks=io.read_landmarks(sub / "landmarks_neutral.json"),
        )
        if c.shape != (meta["height"], meta["width"]) or field_.shape[:2] != c.shape:
            raise FormatError(f"{sub}: stored dimensions disagree with library.json")
        cases.append(c)
    return CaseLibrary(meta["style_id"], cases, RegionMap(meta["region_map"]))
