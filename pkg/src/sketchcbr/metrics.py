"""Visual similarity (normalized mutual information) and point-set distance."""
from __future__ import annotations

import numpy as np

from .errors import CorrespondenceError, DimensionError
from .geometry import as_points

NMI_BINS = 64


def intensity_bins(values, bins=NMI_BINS) -> np.ndarray:
    """Equal-width bin index over [0, 255] for each value."""
    idx = np.floor(np.asarray(values, dtype=np.float64) * (bins / 256.0)).astype(np.intp)
    return np.clip(idx, 0, bins - 1)


def _entropy_from_counts(counts, total) -> float:
    # sorted so the sum does not depend on histogram layout (keeps nmi symmetric)
    c = np.sort(counts[counts > 0]).astype(np.float64)
    return float(np.log(total) - (c * np.log(c)).sum() / total)


def nmi_from_bins(ba, bb, bins=NMI_BINS) -> float:
    """NMI of two already-binned integer sequences of equal length."""
    n = ba.size
    if n == 0:
        raise DimensionError("nmi needs at least one pixel")
    joint = np.bincount(ba * bins + bb, minlength=bins * bins)
    h_ab = _entropy_from_counts(joint, n)
    if h_ab <= 0.0:
        return 1.0
    h_a = _entropy_from_counts(np.bincount(ba, minlength=bins), n)
    h_b = _entropy_from_counts(np.bincount(bb, minlength=bins), n)
    return (h_a + h_b) / h_ab


def nmi(a, b, mask=None, bins: int = NMI_BINS) -> float:
    """Normalized mutual information ``(H(A) + H(B)) / H(A, B)``.

    Entropies are in nats and come from a ``bins x bins`` joint histogram of
    intensities over [0, 255].  When ``mask`` is given only those pixels
    count.  The value lies in [1, 2]; it is 2 for identical non-constant
    images and 1 when either image is constant.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"nmi inputs differ in shape: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise DimensionError("nmi needs non-empty images")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape:
            raise DimensionError(f"mask shape {mask.shape} does not match images {a.shape}")
        a = a[mask]
        b = b[mask]
    return nmi_from_bins(intensity_bins(a.ravel(), bins), intensity_bins(b.ravel(), bins), bins)


def patch_nmi(p, q, bins: int = NMI_BINS) -> float:
    """NMI of two region patches over the intersection of their masks."""
    if p.image.shape != q.image.shape:
        raise DimensionError(f"patches differ in shape: {p.image.shape} vs {q.image.shape}")
    mask = p.mask & q.mask
    if not mask.any():
        raise DimensionError("patch masks do not overlap")
    return nmi(p.image, q.image, mask, bins)


def point_set_distance(qa, qb) -> float:
    """Sum of squared Euclidean distances between corresponding points."""
    a = as_points(qa, "qa")
    b = as_points(qb, "qb")
    if a.shape != b.shape:
        raise CorrespondenceError(f"point sets differ in size: {len(a)} vs {len(b)}")
    return float(((a - b) ** 2).sum())
