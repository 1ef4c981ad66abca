"""Per-region descriptors and the composite inputs of the fitness/parameter models.

A region descriptor concatenates four blocks: an upright SURF-style Haar
descriptor (64), a gray-level histogram (32), a gradient-direction histogram
(32) and simplified shape contexts (8 per region landmark).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateGeometryError, EmptyRegionError, PatchTooSmallError, RegionMismatchError
from .geometry import RegionPatch, as_points

SURF_DIM = 64
GRAY_BINS = 32
DIR_BINS = 32
CONTEXT_BINS = 8
OUTLINE_SAMPLES = 100
BASE_DIM = SURF_DIM + GRAY_BINS + DIR_BINS


def descriptor_length(n_points: int) -> int:
    return BASE_DIM + CONTEXT_BINS * n_points


def composite_length(n_points: int) -> int:
    return 3 * descriptor_length(n_points)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    region: int
    n_points: int

    def blocks(self) -> dict:
        v = self.values
        return {
            "surf": v[:SURF_DIM],
            "gray": v[SURF_DIM:SURF_DIM + GRAY_BINS],
            "dir": v[SURF_DIM + GRAY_BINS:BASE_DIM],
            "context": v[BASE_DIM:],
        }


@dataclass(frozen=True)
class CompositeInput:
    """Photo(target) | photo(candidate) | sketch(interim) descriptors, concatenated."""

    values: np.ndarray
    region: int
    boundaries: tuple

    def __len__(self):
        return len(self.values)


def _haar_responses(img):
    p = np.pad(img, ((0, 1), (0, 1)), mode="edge")
    dx = p[:-1, 1:] + p[1:, 1:] - p[:-1, :-1] - p[1:, :-1]
    dy = p[1:, :-1] + p[1:, 1:] - p[:-1, :-1] - p[:-1, 1:]
    return dx, dy


def surf_descriptor(patch: RegionPatch) -> np.ndarray:
    """Upright SURF-like descriptor over a fixed 4x4 grid on the patch box.

    Each cell contributes (sum dx, sum dy, sum |dx|, sum |dy|) of 2x2 Haar
    responses; the 64-vector is L2-normalised, or all-zero for a flat patch.
    """
    img = np.asarray(patch.image, dtype=np.float64)
    h, w = img.shape
    if h < 4 or w < 4:
        raise PatchTooSmallError(f"SURF needs a patch of at least 4x4 pixels, got {w}x{h}")
    dx, dy = _haar_responses(img)
    rows = np.array_split(np.arange(h), 4)
    cols = np.array_split(np.arange(w), 4)
    out = np.empty(SURF_DIM)
    k = 0
    for r in rows:
        for c in cols:
            cx = dx[r[0]:r[-1] + 1, c[0]:c[-1] + 1]
            cy = dy[r[0]:r[-1] + 1, c[0]:c[-1] + 1]
            out[k:k + 4] = cx.sum(), cy.sum(), np.abs(cx).sum(), np.abs(cy).sum()
            k += 4
    norm = np.linalg.norm(out)
    if norm < 1e-12:
        return np.zeros(SURF_DIM)
    return out / norm


def gray_histogram(patch: RegionPatch) -> np.ndarray:
    """Normalised 32-bin histogram of masked gray values over [0, 255]."""
    vals = np.asarray(patch.image, dtype=np.float64)[patch.mask]
    if vals.size == 0:
        raise EmptyRegionError(f"region {patch.region} has an empty mask")
    idx = np.clip(np.floor(vals * (GRAY_BINS / 256.0)).astype(np.intp), 0, GRAY_BINS - 1)
    return np.bincount(idx, minlength=GRAY_BINS) / vals.size


def gradient_direction_histogram(patch: RegionPatch) -> np.ndarray:
    """Magnitude-weighted 32-bin histogram of Sobel directions over [-pi, pi).

    A patch without any gradient gives the uniform vector.
    """
    img = np.asarray(patch.image, dtype=np.float64)
    if img.shape[0] < 3 or img.shape[1] < 3:
        raise PatchTooSmallError(f"Sobel needs a patch of at least 3x3 pixels, got {img.shape}")
    gx = ndimage.sobel(img, axis=1, mode="nearest")
    gy = ndimage.sobel(img, axis=0, mode="nearest")
    mag = np.hypot(gx, gy)[patch.mask]
    ang = np.arctan2(gy, gx)[patch.mask]
    keep = mag > 1e-9
    if not keep.any():
        return np.full(DIR_BINS, 1.0 / DIR_BINS)
    idx = np.floor((ang[keep] + np.pi) * (DIR_BINS / (2 * np.pi))).astype(np.intp) % DIR_BINS
    hist = np.bincount(idx, weights=mag[keep], minlength=DIR_BINS)
    return hist / hist.sum()


def resample_outline(points, n=OUTLINE_SAMPLES) -> np.ndarray:
    """``n`` vertices spaced uniformly along the closed polyline through ``points``."""
    pts = as_points(points)
    if len(pts) < 2:
        raise DegenerateGeometryError("an outline needs at least 2 points")
    if len(np.unique(pts, axis=0)) < len(pts):
        raise DegenerateGeometryError("outline has coincident duplicate points")
    closed = np.vstack([pts, pts[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.arange(n) * (arc[-1] / n)
    return np.column_stack([np.interp(t, arc, closed[:, 0]), np.interp(t, arc, closed[:, 1])])


def shape_context(points, reference=None) -> np.ndarray:
    """Angular (1 radial x 8 angular bin) shape contexts of a region outline.

    The outline through ``points`` is resampled to 100 vertices and one
    normalised 8-bin histogram is built per reference point (default: the
    region points themselves, in order).
    """
    outline = resample_outline(points)
    refs = as_points(points if reference is None else reference)
    out = []
    for ref in refs:
        v = outline - ref
        keep = np.hypot(v[:, 0], v[:, 1]) > 1e-9
        ang = np.arctan2(v[keep, 1], v[keep, 0])
        idx = np.floor((ang + np.pi) * (CONTEXT_BINS / (2 * np.pi))).astype(np.intp) % CONTEXT_BINS
        hist = np.bincount(idx, minlength=CONTEXT_BINS).astype(np.float64)
        out.append(hist / hist.sum())
    return np.concatenate(out)


def region_features(patch: RegionPatch, image=None) -> FeatureVector:
    """Full descriptor of a region; ``image`` (full size) overrides the patch pixels."""
    if image is not None:
        patch = patch.with_image(patch.crop(image))
    values = np.concatenate([
        surf_descriptor(patch),
        gray_histogram(patch),
        gradient_direction_histogram(patch),
        shape_context(patch.landmarks),
    ])
    return FeatureVector(values, patch.region, len(patch.landmarks))


def compose_input(fx: FeatureVector, fi: FeatureVector, sx: FeatureVector) -> CompositeInput:
    """Concatenate target-photo, candidate-photo and interim-sketch descriptors."""
    if not (fx.region == fi.region == sx.region):
        raise RegionMismatchError(f"region ids differ: {fx.region}, {fi.region}, {sx.region}")
    if not (fx.n_points == fi.n_points == sx.n_points):
        raise RegionMismatchError("descriptors disagree on the number of region landmarks")
    n = len(fx.values)
    return CompositeInput(np.concatenate([fx.values, fi.values, sx.values]), fx.region, (n, 2 * n, 3 * n))
