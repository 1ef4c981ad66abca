import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sketchcbr.errors import DegenerateGeometryError, EmptyRegionError, PatchTooSmallError, RegionMismatchError
from sketchcbr.features import (
    composite_length,
    compose_input,
    gradient_direction_histogram,
    gray_histogram,
    region_features,
    shape_context,
    surf_descriptor,
)
from sketchcbr.geometry import RegionPatch, default_region_map, segment_regions
from sketchcbr.synthetic import make_pair


def patch_of(img, landmarks=None, mask=None, region=1):
    img = np.asarray(img, float)
    h, w = img.shape
    if mask is None:
        mask = np.ones((h, w), bool)
    if landmarks is None:
        landmarks = np.array([[1.0, 1.0], [w - 2.0, 1.0], [w / 2, h - 2.0]])
    return RegionPatch(region, (0, 0, w, h), mask, img, np.asarray(landmarks, float))


def test_surf_constant_is_zero():
    v = surf_descriptor(patch_of(np.full((16, 16), 90.0)))
    assert v.shape == (64,) and np.all(v == 0)


def test_surf_vertical_edge_dx_dominates():
    img = np.zeros((16, 16))
    img[:, 8:] = 255.0
    v = surf_descriptor(patch_of(img)).reshape(16, 4)
    # brute-force 2x2 Haar responses per 4x4 cell
    for cell in range(16):
        r, c = divmod(cell, 4)
        sub = img[4 * r:4 * r + 4, 4 * c:4 * c + 5] if c < 3 else img[4 * r:4 * r + 4, 12:16]
        if np.ptp(sub) > 0:
            assert v[cell, 2] > v[cell, 3]
    assert abs(np.linalg.norm(v) - 1) < 1e-12


def test_surf_too_small():
    with pytest.raises(PatchTooSmallError):
        surf_descriptor(patch_of(np.zeros((3, 8))))


def test_gray_histogram_examples(rng):
    assert np.array_equal(gray_histogram(patch_of(np.zeros((5, 5)))), np.eye(32)[0])
    h = gray_histogram(patch_of(rng.uniform(0, 256, size=(100, 100))))
    sigma = np.sqrt(1e4 * (1 / 32) * (31 / 32)) / 1e4
    assert np.all(np.abs(h - 1 / 32) <= 3 * sigma)
    assert abs(h.sum() - 1) <= 1e-9
    with pytest.raises(EmptyRegionError):
        gray_histogram(patch_of(np.zeros((5, 5)), mask=np.zeros((5, 5), bool)))


def test_direction_ramp_peaks_at_zero():
    img = np.tile(np.arange(8) * 30.0, (8, 1))
    h = gradient_direction_histogram(patch_of(img))
    zero_bin = int(np.floor(np.pi * 32 / (2 * np.pi)))
    assert np.argmax(h) == zero_bin
    assert h[zero_bin] > 0.99


def test_direction_constant_uniform():
    h = gradient_direction_histogram(patch_of(np.full((6, 6), 3.0)))
    assert np.allclose(h, 1 / 32)


def test_direction_rotation_shifts_eight_bins():
    ys, xs = np.mgrid[0:21, 0:21]
    img = 3.0 * (xs * np.cos(0.3) + ys * np.sin(0.3))
    h = gradient_direction_histogram(patch_of(img))
    hr = gradient_direction_histogram(patch_of(np.rot90(img)))
    assert np.allclose(hr, np.roll(h, 8)) or np.allclose(hr, np.roll(h, -8))


def test_shape_context_circle_uniform():
    t = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    pts = np.column_stack([50 + 20 * np.cos(t), 50 + 20 * np.sin(t)])
    v = shape_context(pts, reference=[[50.0, 50.0]])
    assert v.shape == (8,)
    assert np.allclose(v, 1 / 8, atol=0.02)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 11), st.integers(0, 10_000), st.floats(-40, 40), st.floats(-40, 40))
def test_shape_context_length_and_translation(n, seed, tx, ty):
    pts = np.random.default_rng(seed).uniform(0, 50, size=(n, 2))
    v = shape_context(pts)
    assert v.shape == (8 * n,)
    assert np.allclose(v.reshape(n, 8).sum(axis=1), 1.0)
    assert np.allclose(shape_context(pts + [tx, ty]), v, atol=1e-6)


def test_shape_context_duplicates():
    with pytest.raises(DegenerateGeometryError):
        shape_context([[0, 0], [0, 0], [1, 1]])


@pytest.fixture(scope="module")
def patches():
    pair = make_pair(1, seed=2, width=80, height=100)
    return segment_regions(pair.photo, pair.photo_landmarks, default_region_map())


def test_region_feature_blocks(patches):
    for p in patches:
        fv = region_features(p)
        n = len(p.landmarks)
        assert len(fv.values) == 128 + 8 * n
        b = fv.blocks()
        assert abs(b["gray"].sum() - 1) <= 1e-9 and abs(b["dir"].sum() - 1) <= 1e-9
        assert np.all(fv.values[64:] >= 0)


def test_descriptors_translation_invariant(patches):
    p = patches[4]
    img = np.full((p.shape[0] + 7, p.shape[1] + 5), 255.0)
    mask = np.zeros(img.shape, bool)
    img[3:3 + p.shape[0], 2:2 + p.shape[1]] = p.image
    mask[3:3 + p.shape[0], 2:2 + p.shape[1]] = p.mask
    moved = patch_of(img, p.landmarks + [2, 3], mask, region=p.region)
    a = region_features(p).blocks()
    b = region_features(moved).blocks()
    for name in ("gray", "context"):
        assert np.abs(a[name] - b[name]).max() <= 1e-6


def test_composite_lengths(patches):
    assert composite_length(6) == 528
    assert composite_length(11) == 648
    rm = default_region_map()
    for p in patches:
        f = region_features(p)
        ci = compose_input(f, f, f)
        assert len(ci) == 384 + 24 * len(rm.indices(p.region))
        n = len(f.values)
        assert np.array_equal(ci.values[:n], ci.values[n:2 * n])


def test_compose_region_mismatch(patches):
    a, b = region_features(patches[0]), region_features(patches[1])
    with pytest.raises(RegionMismatchError):
        compose_input(a, b, a)
