import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sketchcbr.errors import CorrespondenceError, DimensionError
from sketchcbr.metrics import nmi, point_set_distance


def nmi_brute(a, b, bins=64):
    """Joint histogram by explicit loops."""
    a = np.asarray(a, float).ravel()
    b = np.asarray(b, float).ravel()
    joint = np.zeros((bins, bins))
    for x, y in zip(a, b):
        i = min(int(x * bins // 256), bins - 1)
        j = min(int(y * bins // 256), bins - 1)
        joint[i, j] += 1
    p = joint / joint.sum()

    def ent(q):
        q = q[q > 0]
        return -(q * np.log(q)).sum()

    hab = ent(p)
    if hab == 0:
        return 1.0
    return (ent(p.sum(1)) + ent(p.sum(0))) / hab


images = arrays(np.float64, (12, 9), elements=st.integers(0, 255).map(float))


def test_nmi_self_is_two(rng):
    a = rng.integers(0, 256, size=(50, 40))
    assert abs(nmi(a, a) - 2.0) <= 1e-9


def test_nmi_constant_is_one(rng):
    a = rng.integers(0, 256, size=(10, 10))
    assert nmi(a, np.full((10, 10), 7)) == 1.0


def test_nmi_independent_near_one(rng):
    a = rng.integers(0, 256, size=(100, 100))
    b = rng.integers(0, 256, size=(100, 100))
    v = nmi(a, b)
    assert abs(v - 1.0) <= 0.05
    assert abs(v - nmi_brute(a, b)) < 1e-12


def test_nmi_matches_brute_force(rng):
    for _ in range(5):
        a = rng.integers(0, 256, size=(17, 13))
        b = np.clip(a + rng.normal(0, 30, size=a.shape), 0, 255)
        assert abs(nmi(a, b) - nmi_brute(a, b)) < 1e-12


def test_nmi_mask_restricts_pixels(rng):
    a = rng.integers(0, 256, size=(20, 20)).astype(float)
    b = rng.integers(0, 256, size=(20, 20)).astype(float)
    mask = np.zeros((20, 20), bool)
    mask[5:15, 2:18] = True
    assert abs(nmi(a, b, mask) - nmi_brute(a[mask], b[mask])) < 1e-12


def test_nmi_dimension_mismatch():
    with pytest.raises(DimensionError):
        nmi(np.zeros((3, 3)), np.zeros((3, 4)))


@settings(max_examples=60, deadline=None)
@given(images, images)
def test_nmi_symmetric_and_bounded(a, b):
    v = nmi(a, b)
    assert v == nmi(b, a)
    assert 1.0 - 1e-12 <= v <= 2.0 + 1e-12


@settings(max_examples=40, deadline=None)
@given(images, images, st.integers(0, 10_000))
def test_nmi_invariant_to_bin_permutation(a, b, seed):
    # permute whole 4-level bins of both images with one permutation
    perm = np.random.default_rng(seed).permutation(64)

    def remap(x):
        x = x.astype(int)
        return perm[x // 4] * 4 + x % 4

    assert abs(nmi(a, b) - nmi(remap(a), remap(b))) < 1e-12


def test_point_set_distance_examples():
    q = np.random.default_rng(0).uniform(0, 100, size=(67, 2))
    assert point_set_distance(q, q) == 0.0
    assert point_set_distance([[0, 0]], [[3, 4]]) == 25.0
    assert point_set_distance(q, q + [1.0, 0.0]) == pytest.approx(67.0)
    with pytest.raises(CorrespondenceError):
        point_set_distance(q, q[:-1])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 2), elements=st.floats(-100, 100)),
       arrays(np.float64, (6, 2), elements=st.floats(-100, 100)),
       st.tuples(st.floats(-50, 50), st.floats(-50, 50)))
def test_point_set_distance_translation(qa, qb, t):
    d = point_set_distance(qa, qb)
    assert d >= 0
    assert (d == 0) == np.array_equal(qa, qb)
    assert point_set_distance(qa + t, qb + t) == pytest.approx(d, rel=1e-9, abs=1e-6)
