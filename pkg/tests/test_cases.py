import json
import shutil

import numpy as np
import pytest

from sketchcbr import io
from sketchcbr.cases import CaseLibrary, build_case, ingest_dataset, load_library, save_library
from sketchcbr.errors import DimensionError, FormatError, IoError, ValidationError, VersionError
from sketchcbr.geometry import default_region_map, mls_field, sample_field, warp_image
from sketchcbr.synthetic import make_dataset, make_pair, write_dataset

NOSE = default_region_map().indices(5)


@pytest.fixture(scope="module")
def pair():
    return make_pair(4, seed=9, width=80, height=100, exaggerate=False)


def test_unexaggerated_pair_is_neutral(pair):
    c = build_case(pair.photo, pair.sketch, pair.photo_landmarks, pair.photo_landmarks)
    assert np.array_equal(c.neutral_sketch, c.sketch)
    assert not np.any(c.exaggeration_field)
    assert np.array_equal(c.neutral_landmarks, c.photo_landmarks)


def test_nose_shift_recovered():
    # full resolution: at 80x100 the nose points sit too close for 0.5 px bilinear accuracy
    p = make_pair(4, seed=9, width=200, height=250, exaggerate=False)
    q = p.photo_landmarks
    qs = q.copy()
    qs[NOSE] += [10.0, 0.0]
    sketch = warp_image(p.sketch, q, qs)
    c = build_case(p.photo, sketch, q, qs)
    v = sample_field(c.exaggeration_field, q[NOSE])
    assert np.abs(v - [10.0, 0.0]).max() <= 0.5


def test_landmark_round_trip():
    p = make_pair(5, seed=9, width=80, height=100)
    c = build_case(p.photo, p.sketch, p.photo_landmarks, p.sketch_landmarks)
    moved = c.neutral_landmarks + sample_field(c.exaggeration_field, c.neutral_landmarks)
    assert np.hypot(*(moved - c.sketch_landmarks).T).max() <= 0.5


def test_field_matches_mls(pair):
    p = make_pair(6, seed=9, width=80, height=100)
    c = build_case(p.photo, p.sketch, p.photo_landmarks, p.sketch_landmarks)
    ref = mls_field(p.photo_landmarks, p.sketch_landmarks, 80, 100).astype(np.float32)
    assert np.array_equal(c.exaggeration_field, ref)


def test_build_case_dimension_mismatch(pair):
    with pytest.raises(DimensionError):
        build_case(pair.photo, pair.sketch[:-1], pair.photo_landmarks, pair.photo_landmarks)


def test_ingest_counts_and_order(small_lib, small_manifest):
    entries = json.loads(small_manifest.read_text())
    assert len(small_lib) == len(entries) == 12
    assert small_lib.ids() == [e["id"] for e in entries]


def test_ingest_empty_manifest(tmp_path):
    m = tmp_path / "manifest.json"
    m.write_text("[]")
    with pytest.raises(ValidationError):
        ingest_dataset(m)


def test_ingest_66_points_names_file(tmp_path):
    m = write_dataset(tmp_path, make_dataset(n=2, seed=0, width=60, height=75))
    entry = json.loads(m.read_text())[1]
    bad = tmp_path / entry["photo_landmarks"]
    bad.write_text(json.dumps(json.loads(bad.read_text())[:66]))
    with pytest.raises(FormatError, match=bad.name):
        ingest_dataset(m)


def test_ingest_missing_file(tmp_path):
    m = write_dataset(tmp_path, make_dataset(n=2, seed=0, width=60, height=75))
    (tmp_path / json.loads(m.read_text())[0]["sketch"]).unlink()
    with pytest.raises(IoError):
        ingest_dataset(m)


def test_save_load_round_trip(tmp_path, small_lib):
    lib = small_lib.subset(small_lib.ids()[:3])
    save_library(lib, tmp_path / "lib")
    back = load_library(tmp_path / "lib")
    assert back.style_id == lib.style_id
    assert back.region_map == lib.region_map
    for a, b in zip(lib.cases, back.cases):
        assert a.same_as(b)
        assert io.encode_field(a.exaggeration_field) == io.encode_field(b.exaggeration_field)


def test_load_errors(tmp_path, small_lib):
    with pytest.raises(IoError):
        load_library(tmp_path)
    lib = small_lib.subset(small_lib.ids()[:2])
    d = save_library(lib, tmp_path / "lib")
    efld = d / "case_0001" / "field.efld"
    blob = bytearray(efld.read_bytes())
    blob[:4] = b"XXXX"
    efld.write_bytes(bytes(blob))
    with pytest.raises(FormatError):
        load_library(d)
    shutil.rmtree(d)
    d = save_library(lib, tmp_path / "lib")
    meta = json.loads((d / "library.json").read_text())
    meta["format_version"] = 99
    (d / "library.json").write_text(json.dumps(meta))
    with pytest.raises(VersionError):
        load_library(d)


def test_efld_layout():
    f = np.arange(2 * 3 * 2, dtype=np.float32).reshape(2, 3, 2)
    blob = io.encode_field(f)
    assert blob[:4] == b"EFLD" and blob[4] == 1
    assert int.from_bytes(blob[5:9], "little") == 3 and int.from_bytes(blob[9:13], "little") == 2
    assert np.array_equal(np.frombuffer(blob[13:], "<f4"), f.ravel())
    assert np.array_equal(io.decode_field(blob), f)


def test_library_rejects_mixed_shapes(small_lib):
    other = make_pair(0, seed=0, width=60, height=75)
    c = build_case(other.photo, other.sketch, other.photo_landmarks, other.sketch_landmarks, "odd")
    with pytest.raises(ValidationError):
        CaseLibrary("x", [small_lib.cases[0], c])
