"""Landmarks, facial regions, MLS deformation fields and image remapping.

Images are plain 2-D numpy arrays indexed ``[row, col]`` with luminance in
[0, 255].  Point sets are ``(n, 2)`` float arrays of ``(x, y)`` pixel
coordinates with the origin at the top-left pixel centre, so ``x`` is the
column and ``y`` the row.  Displacement fields are ``(height, width, 2)``
arrays holding ``(dx, dy)`` per pixel.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import (
    ConfigError,
    ControlPointError,
    CorrespondenceError,
    DegenerateGeometryError,
    DimensionError,
    EmptyRegionError,
    ValidationError,
)

N_LANDMARKS = 67
N_REGIONS = 9
BACKGROUND = 255.0

# pixels per chunk when evaluating MLS maps, bounds the (m, n) weight matrix
_CHUNK = 65536


def as_image(img) -> np.ndarray:
    """Return ``img`` as a validated 2-D float64 array."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"expected a non-empty 2-D grayscale image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("image contains non-finite values")
    return arr


def to_uint8(img) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img, dtype=np.float64)), 0, 255).astype(np.uint8)


def as_points(pts, name="points") -> np.ndarray:
    arr = np.asarray(pts, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise CorrespondenceError(f"{name} must have shape (n, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite coordinates")
    return arr


def validate_landmarks(pts, width=None, height=None, n=N_LANDMARKS) -> np.ndarray:
    """Check a landmark set: exactly ``n`` points, inside the image if dims are given."""
    arr = as_points(pts, "landmarks")
    if arr.shape[0] != n:
        raise ValidationError(f"expected {n} landmarks, got {arr.shape[0]}")
    if width is not None and height is not None:
        x, y = arr[:, 0], arr[:, 1]
        if np.any(x < 0) or np.any(y < 0) or np.any(x > width - 1) or np.any(y > height - 1):
            raise ValidationError(f"landmarks fall outside the {width}x{height} image")
    return arr


@dataclass(frozen=True)
class RegionMap:
    """Assignment of landmark indices to the nine facial regions (ids 1..9)."""

    regions: dict

    def __post_init__(self):
        regions = {int(k): tuple(int(i) for i in v) for k, v in self.regions.items()}
        if sorted(regions) != list(range(1, N_REGIONS + 1)):
            raise ConfigError(f"region map must define ids 1..{N_REGIONS}, got {sorted(regions)}")
        for rid, idx in regions.items():
            if not idx:
                raise ConfigError(f"region {rid} has no landmarks")
        flat = sorted(i for idx in regions.values() for i in idx)
        if flat != list(range(len(flat))):
            raise ConfigError("region map indices must partition 0..n-1 with each index used once")
        object.__setattr__(self, "regions", regions)

    @property
    def n_landmarks(self) -> int:
        return sum(len(v) for v in self.regions.values())

    @property
    def region_ids(self):
        return list(range(1, N_REGIONS + 1))

    def indices(self, region: int) -> np.ndarray:
        return np.asarray(self.regions[region], dtype=np.intp)

    def region_of(self) -> np.ndarray:
        """Array mapping landmark index -> region id."""
        out = np.zeros(self.n_landmarks, dtype=np.intp)
        for rid, idx in self.regions.items():
            out[list(idx)] = rid
        return out

    def to_json_obj(self) -> dict:
        return {str(k): list(v) for k, v in sorted(self.regions.items())}


def default_region_map() -> RegionMap:
    """The shipped 67-point region map (see docs/landmarks.md)."""
    import json
    from importlib import resources

    text = resources.files("sketchcbr").joinpath("data/default_regions.json").read_text()
    return RegionMap(json.loads(text))


@dataclass
class RegionPatch:
    """One facial region cropped out of a parent image.

    ``mask`` and ``image`` are both cropped to ``bbox = (x0, y0, x1, y1)``
    (exclusive upper bounds, parent coordinates); ``landmarks`` are the
    region's points in patch-local coordinates.
    """

    region: int
    bbox: tuple
    mask: np.ndarray
    image: np.ndarray
    landmarks: np.ndarray
    indices: np.ndarray = field(default=None, repr=False)

    @property
    def shape(self):
        return self.mask.shape

    @property
    def offset(self) -> np.ndarray:
        return np.array([self.bbox[0], self.bbox[1]], dtype=np.float64)

    def global_landmarks(self) -> np.ndarray:
        return self.landmarks + self.offset

    def full_mask(self, height, width) -> np.ndarray:
        out = np.zeros((height, width), dtype=bool)
        x0, y0, x1, y1 = self.bbox
        out[y0:y1, x0:x1] = self.mask
        return out

    def with_image(self, image, landmarks=None) -> "RegionPatch":
        image = np.asarray(image, dtype=np.float64)
        if image.shape != self.mask.shape:
            raise DimensionError(f"patch image {image.shape} does not match mask {self.mask.shape}")
        return RegionPatch(
            self.region,
            self.bbox,
            self.mask,
            image,
            self.landmarks if landmarks is None else np.asarray(landmarks, dtype=np.float64),
            self.indices,
        )

    def crop(self, parent) -> np.ndarray:
        """Crop ``parent`` (full-size image) to this patch's bounding box."""
        x0, y0, x1, y1 = self.bbox
        return np.asarray(parent, dtype=np.float64)[y0:y1, x0:x1]


# --------------------------------------------------------------------------
# moving least squares (similarity variant)


def _check_control_points(src, dst):
    src = as_points(src, "src")
    dst = as_points(dst, "dst")
    if src.shape != dst.shape:
        raise CorrespondenceError(f"src has {len(src)} points but dst has {len(dst)}")
    if len(src) < 3:
        raise ControlPointError(f"MLS needs at least 3 control points, got {len(src)}")
    centred = src - src.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1.0):
        raise DegenerateGeometryError("control points are collinear")
    return src, dst


def mls_map(src, dst, pts, alpha=1.0) -> np.ndarray:
    """Evaluate the similarity MLS deformation taking ``src`` onto ``dst`` at ``pts``.

    Parameters
    ----------
    src, dst : (n, 2) array
        Control points and their deformed positions.
    pts : (m, 2) array
        Query positions.
    alpha : float
        Weight exponent, ``w_i = 1 / |p_i - v|^(2 alpha)``.

    Returns
    -------
    (m, 2) array of deformed positions.
    """
    src, dst = _check_control_points(src, dst)
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    if np.array_equal(src, dst):
        return pts.copy()
    # centre on the control points to limit cancellation in the expanded sums
    origin = src.mean(axis=0)
    s = src - origin
    d = dst - origin
    sd_dot = (s * d).sum(axis=1)
    sd_cross = s[:, 0] * d[:, 1] - s[:, 1] * d[:, 0]
    s_sq = (s * s).sum(axis=1)

    out = np.empty_like(pts)
    for start in range(0, len(pts), _CHUNK):
        v = pts[start:start + _CHUNK] - origin
        d2 = ((v[:, None, :] - s[None, :, :]) ** 2).sum(axis=2)
        hit = d2 < 1e-18
        d2[hit] = 1.0
        w = 1.0 / d2 ** alpha
        W = w.sum(axis=1)
        pstar = (w @ s) / W[:, None]
        qstar = (w @ d) / W[:, None]
        # C = sum w (q^ . p^), S = sum w (q^ x p^ in the p^perp sense), mu = sum w |p^|^2
        C = w @ sd_dot - W * (qstar * pstar).sum(axis=1)
        S = -(w @ sd_cross) - W * (qstar[:, 0] * pstar[:, 1] - qstar[:, 1] * pstar[:, 0])
        mu = w @ s_sq - W * (pstar * pstar).sum(axis=1)
        b = v - pstar
        mapped = np.empty_like(v)
        mapped[:, 0] = (C * b[:, 0] + S * b[:, 1]) / mu + qstar[:, 0]
        mapped[:, 1] = (C * b[:, 1] - S * b[:, 0]) / mu + qstar[:, 1]
        rows, cols = np.nonzero(hit)
        mapped[rows] = d[cols]
        out[start:start + _CHUNK] = mapped + origin
    return out


def pixel_grid(width, height) -> np.ndarray:
    """(height*width, 2) array of pixel-centre (x, y) coordinates, row-major."""
    ys, xs = np.mgrid[0:height, 0:width]
    return np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64)


def mls_field(src, dst, width: int, height: int, alpha=1.0) -> np.ndarray:
    """Dense displacement field of the MLS deformation ``src -> dst``.

    Returns a ``(height, width, 2)`` array whose entry at pixel ``v`` is
    ``f(v) - v``.
    """
    src, dst = _check_control_points(src, dst)
    if width < 1 or height < 1:
        raise DimensionError(f"invalid field size {width}x{height}")
    if np.array_equal(src, dst):
        return np.zeros((height, width, 2))
    grid = pixel_grid(width, height)
    return (mls_map(src, dst, grid, alpha) - grid).reshape(height, width, 2)


def bilinear_sample(img, xs, ys, fill=BACKGROUND) -> np.ndarray:
    """Sample ``img`` at fractional positions; positions off the image get ``fill``."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    tol = 1e-9
    inside = (xs >= -tol) & (ys >= -tol) & (xs <= w - 1 + tol) & (ys <= h - 1 + tol)
    xc = np.clip(xs, 0, w - 1)
    yc = np.clip(ys, 0, h - 1)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    return np.where(inside, out, fill)


def apply_field(img, field) -> np.ndarray:
    """Remap ``img`` by a forward displacement field using inverse sampling.

    Each destination pixel ``p`` pulls ``img`` at ``p - field[p]`` with
    bilinear interpolation; samples off the image are white.
    """
    img = as_image(img)
    field = np.asarray(field, dtype=np.float64)
    if field.shape != img.shape + (2,):
        raise DimensionError(f"field shape {field.shape} does not match image {img.shape}")
    if not np.any(field):
        return img.copy()
    h, w = img.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return bilinear_sample(img, xs - field[..., 0], ys - field[..., 1])


def sample_field(field, pts) -> np.ndarray:
    """Bilinearly sample a displacement field at fractional points -> (n, 2)."""
    field = np.asarray(field, dtype=np.float64)
    pts = as_points(pts)
    dx = bilinear_sample(field[..., 0], pts[:, 0], pts[:, 1], fill=0.0)
    dy = bilinear_sample(field[..., 1], pts[:, 0], pts[:, 1], fill=0.0)
    return np.column_stack([dx, dy])


def warp_image(img, src, dst, fill=BACKGROUND) -> np.ndarray:
    """Deform ``img`` so content at ``src`` points moves to ``dst``.

    Backward mapping: every output pixel samples the input at the MLS image
    of the ``dst -> src`` deformation, so the result has no holes.
    """
    img = as_image(img)
    src = as_points(src, "src")
    dst = as_points(dst, "dst")
    if np.array_equal(src, dst):
        return img.copy()
    h, w = img.shape
    grid = pixel_grid(w, h)
    back = mls_map(dst, src, grid)
    return bilinear_sample(img, back[:, 0], back[:, 1], fill).reshape(h, w)


# --------------------------------------------------------------------------
# regions


def face_mask(landmarks, width, height) -> np.ndarray:
    """Rasterised convex hull of the landmarks (pixel centres inside or on the hull)."""
    pts = as_points(landmarks, "landmarks")
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateGeometryError(f"landmarks span no area: {exc}") from None
    grid = pixel_grid(width, height)
    eq = hull.equations
    inside = np.all(grid @ eq[:, :2].T + eq[:, 2] <= 1e-9, axis=1)
    return inside.reshape(height, width)


def assign_regions(landmarks, region_map: RegionMap, width, height) -> np.ndarray:
    """Label image: region id for face-interior pixels, 0 elsewhere.

    Pixels go to the region of the nearest landmark (L2); on exact ties the
    lower region id wins.
    """
    pts = as_points(landmarks, "landmarks")
    if len(pts) != region_map.n_landmarks:
        raise CorrespondenceError(
            f"{len(pts)} landmarks but region map covers {region_map.n_landmarks}")
    inside = face_mask(pts, width, height)
    grid = pixel_grid(width, height)[inside.ravel()]
    d2 = ((grid[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    per_region = np.stack(
        [d2[:, region_map.indices(r)].min(axis=1) for r in region_map.region_ids], axis=1)
    labels = np.zeros(height * width, dtype=np.intp)
    labels[inside.ravel()] = np.argmin(per_region, axis=1) + 1
    return labels.reshape(height, width)


def segment_regions(image, landmarks, region_map: RegionMap, width=None, height=None):
    """Split the face into its nine region patches.

    Returns a list of :class:`RegionPatch` ordered by region id.  The masks
    partition the face interior (convex hull of the landmarks).
    """
    img = None if image is None else as_image(image)
    if img is not None:
        height, width = img.shape
    if width is None or height is None:
        raise DimensionError("segment_regions needs an image or explicit width/height")
    pts = as_points(landmarks, "landmarks")
    labels = assign_regions(pts, region_map, width, height)
    patches = []
    for rid in region_map.region_ids:
        idx = region_map.indices(rid)
        ys, xs = np.nonzero(labels == rid)
        if len(xs) == 0:
            raise EmptyRegionError(f"region {rid} received no face-interior pixels")
        own = pts[idx]
        x0 = int(min(xs.min(), np.floor(own[:, 0].min())))
        y0 = int(min(ys.min(), np.floor(own[:, 1].min())))
        x1 = int(max(xs.max() + 1, np.floor(own[:, 0].max()) + 1))
        y1 = int(max(ys.max() + 1, np.floor(own[:, 1].max()) + 1))
        x0, y0 = max(x0, 0), max(y0, 0)
        x1, y1 = min(x1, width), min(y1, height)
        mask = labels[y0:y1, x0:x1] == rid
        crop = img[y0:y1, x0:x1].copy() if img is not None else np.full(mask.shape, BACKGROUND)
        patches.append(RegionPatch(rid, (x0, y0, x1, y1), mask, crop,
                                   own - np.array([x0, y0], dtype=np.float64), idx))
    return patches


# --------------------------------------------------------------------------
# blending


def blend(img_a, pts_a, img_b, pts_b, omega):
    """Feature-point driven cross-dissolve of two images.

    Both images are warped onto the interpolated point set
    ``q_t = (1 - omega) pts_a + omega pts_b`` and mixed with weights
    ``1 - omega`` and ``omega``.

    Returns
    -------
    (image, q_t)
    """
    a = as_image(img_a)
    b = as_image(img_b)
    pa = as_points(pts_a, "pts_a")
    pb = as_points(pts_b, "pts_b")
    if pa.shape != pb.shape:
        raise CorrespondenceError(f"point sets differ in size: {len(pa)} vs {len(pb)}")
    if len(pa) < 3:
        raise ControlPointError("blend needs at least 3 corresponding points")
    if a.shape != b.shape:
        raise DimensionError(f"blend inputs differ in shape: {a.shape} vs {b.shape}")
    omega = float(omega)
    if not 0.0 <= omega <= 1.0:
        raise ValueError(f"omega must lie in [0, 1], got {omega}")
    # identical layouts must stay bit-identical so both warps are exact identities
    q_t = pa.copy() if np.array_equal(pa, pb) else (1.0 - omega) * pa + omega * pb
    if omega == 0.0:
        return a.copy(), q_t
    if omega == 1.0:
        return b.copy(), q_t
    wa = warp_image(a, pa, q_t)
    wb = warp_image(b, pb, q_t)
    # lerp form: exact where both inputs agree, monotone in omega elsewhere
    return wa + omega * (wb - wa), q_t

