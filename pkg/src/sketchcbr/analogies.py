"""Example-based sharpening by multi-scale image analogies.

Training pairs are (Gaussian-smoothed neutral sketch, neutral sketch) of
every library case.  The blurred input is synthesised coarse to fine: each
output pixel copies the example pixel whose neighbourhood features match
best, choosing between an approximate nearest neighbour on the non-causal
features and the best coherent continuation of already placed neighbours.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import InsufficientDataError
from .geometry import as_image

SIGMA = 1.0
RADIUS = 3
LEVELS = 3
KAPPA = 2.0
PCA_DIMS = 8
ANN_EPS = 0.5

_FY, _FX = [a.ravel() for a in np.mgrid[-2:3, -2:3]]
_CY, _CX = [a.ravel() for a in np.mgrid[-1:2, -1:2]]
_CAUSAL = 12  # entries of the 5x5 window before its centre in scanline order


def _gauss_weights(n):
    g = np.exp(-0.5 * (np.arange(n) - n // 2) ** 2)
    w = np.outer(g, g).ravel()
    return w / w.sum()


_W_FINE = _gauss_weights(5)
_W_COARSE = _gauss_weights(3)


def smooth(img, sigma=SIGMA, radius=RADIUS) -> np.ndarray:
    """Gaussian smoothing with the given kernel radius (in pixels) and deviation."""
    return ndimage.gaussian_filter(np.asarray(img, dtype=np.float64), sigma, mode="nearest",
                                   truncate=radius / sigma)


def pyramid(img, levels=LEVELS) -> list:
    """Gaussian pyramid, finest level first."""
    out = [np.asarray(img, dtype=np.float64)]
    for _ in range(levels - 1):
        out.append(smooth(out[-1])[::2, ::2])
    return out


class _Level:
    """Padded example stacks of one pyramid level and of the level above it."""

    def __init__(self, a, ap, a_up=None, ap_up=None):
        self.a = np.pad(a, ((0, 0), (2, 2), (2, 2)), mode="edge")
        self.ap = np.pad(ap, ((0, 0), (2, 2), (2, 2)), mode="edge")
        self.shape = a.shape[1:]
        self.coarse = a_up is not None
        if self.coarse:
            self.a_up = np.pad(a_up, ((0, 0), (1, 1), (1, 1)), mode="edge")
            self.ap_up = np.pad(ap_up, ((0, 0), (1, 1), (1, 1)), mode="edge")

    def noncausal(self, e, y, x) -> np.ndarray:
        """Weighted non-causal features at example positions (arrays of equal length)."""
        e = np.asarray(e)[:, None]
        y = np.asarray(y)[:, None]
        x = np.asarray(x)[:, None]
        parts = [self.a[e, y + 2 + _FY, x + 2 + _FX] * np.sqrt(_W_FINE)]
        if self.coarse:
            yc, xc = y // 2 + 1, x // 2 + 1
            parts.append(self.a_up[e, yc + _CY, xc + _CX] * np.sqrt(_W_COARSE))
            parts.append(self.ap_up[e, yc + _CY, xc + _CX] * np.sqrt(_W_COARSE))
        return np.concatenate(parts, axis=1)

    def causal(self, e, y, x) -> np.ndarray:
        e = np.asarray(e)[:, None]
        y = np.asarray(y)[:, None]
        x = np.asarray(x)[:, None]
        return self.ap[e, y + 2 + _FY[:_CAUSAL], x + 2 + _FX[:_CAUSAL]] * np.sqrt(_W_FINE[:_CAUSAL])


def _fit_pca(level: _Level, n_ex, dims, stride=5):
    h, w = level.shape
    idx = np.arange(0, n_ex * h * w, stride)
    e, rem = np.divmod(idx, h * w)
    y, x = np.divmod(rem, w)
    F = level.noncausal(e, y, x)
    mean = F.mean(axis=0)
    _, _, vt = np.linalg.svd(F - mean, full_matrices=False)
    return mean, vt[:min(dims, vt.shape[0])].T


def sharpen(blurred, lib, *, levels=LEVELS, kappa=KAPPA, sigma=SIGMA, radius=RADIUS,
            pca_dims=PCA_DIMS, max_examples=None) -> np.ndarray:
    """Sharpen a blended sketch using the library's (smoothed, neutral) sketch pairs.

    Parameters
    ----------
    blurred : (H, W) array
    lib : CaseLibrary
        Cases whose neutral sketches provide the examples.
    levels, kappa : pyramid depth and coherence bias.
    max_examples : use only the first this many cases (all by default).
    """
    img = as_image(blurred)
    cases = list(lib.cases if hasattr(lib, "cases") else lib)
    if not cases:
        raise InsufficientDataError("sharpening needs at least one example case")
    if max_examples is not None:
        cases = cases[:max_examples]
    sketches = [np.asarray(c.neutral_sketch, dtype=np.float64) for c in cases]
    a_pyr = [pyramid(smooth(s, sigma, radius), levels) for s in sketches]
    ap_pyr = [pyramid(s, levels) for s in sketches]
    b_pyr = pyramid(img, levels)
    n_ex = len(sketches)

    def stack(pyrs, lv):
        return np.stack([p[lv] for p in pyrs])

    bp_up = None
    for lv in range(levels - 1, -1, -1):
        coarse = lv < levels - 1
        ex = _Level(stack(a_pyr, lv), stack(ap_pyr, lv),
                    stack(a_pyr, lv + 1) if coarse else None, stack(ap_pyr, lv + 1) if coarse else None)
        src = _Level(b_pyr[lv][None], np.zeros((1,) + b_pyr[lv].shape),
                     b_pyr[lv + 1][None] if coarse else None, bp_up[None] if coarse else None)
        bp_up = _synthesize_level(ex, src, n_ex, kappa * 2.0 ** (-lv), pca_dims)
    return bp_up


def _synthesize_level(ex: _Level, src: _Level, n_ex, bias, pca_dims):
    eh, ew = ex.shape
    h, w = src.shape
    mean, basis = _fit_pca(ex, n_ex, pca_dims)
    proj = []
    ys, xs = np.divmod(np.arange(eh * ew), ew)
    for e in range(n_ex):
        proj.append(((ex.noncausal(np.full(eh * ew, e), ys, xs) - mean) @ basis).astype(np.float32))
    proj = np.concatenate(proj)
    # flat paper areas repeat one feature vector many times; index each once
    uniq, first = np.unique(proj, axis=0, return_index=True)
    tree = cKDTree(uniq)
    del proj

    by, bx = np.divmod(np.arange(h * w), w)
    zeros = np.zeros(h * w, dtype=np.intp)
    b_nc = src.noncausal(zeros, by, bx)
    _, hit = tree.query(((b_nc - mean) @ basis).astype(np.float32), eps=ANN_EPS)
    app = first[hit]
    app_e, rem = np.divmod(app, eh * ew)
    app_y, app_x = np.divmod(rem, ew)

    out = src.ap  # padded (1, h+4, w+4) buffer; causal reads see placed pixels
    out_img = out[0]
    src_e = np.zeros((h, w), dtype=np.intp)
    src_y = np.zeros((h, w), dtype=np.intp)
    src_x = np.zeros((h, w), dtype=np.intp)
    wc = np.sqrt(_W_FINE[:_CAUSAL])
    cdy, cdx = _FY[:_CAUSAL], _FX[:_CAUSAL]
    ap = ex.ap
    for y in range(h):
        for x in range(w):
            k = y * w + x
            valid = (y + cdy >= 0) & (x + cdx >= 0) & (x + cdx < w)
            b_c = out_img[y + 2 + cdy, x + 2 + cdx] * wc
            e0, y0, x0 = app_e[k], app_y[k], app_x[k]
            if not valid.any():
                best = (e0, y0, x0)
            else:
                # coherent continuations of placed neighbours
                ny = y + cdy[valid]
                nx = x + cdx[valid]
                ce = src_e[ny, nx]
                cy = src_y[ny, nx] - cdy[valid]
                cx = src_x[ny, nx] - cdx[valid]
                inside = (cy >= 0) & (cy < eh) & (cx >= 0) & (cx < ew)
                ce, cy, cx = ce[inside], cy[inside], cx[inside]
                cand_e = np.concatenate([[e0], ce])
                cand_y = np.concatenate([[y0], cy])
                cand_x = np.concatenate([[x0], cx])
                f_nc = ex.noncausal(cand_e, cand_y, cand_x)
                f_c = ap[cand_e[:, None], cand_y[:, None] + 2 + cdy, cand_x[:, None] + 2 + cdx] * wc
                d = ((f_nc - b_nc[k]) ** 2).sum(axis=1) + (((f_c - b_c) ** 2) * valid).sum(axis=1)
                best = (e0, y0, x0)
                if len(d) > 1:
                    j = 1 + int(np.argmin(d[1:]))
                    if d[j] <= d[0] * (1.0 + bias):
                        best = (cand_e[j], cand_y[j], cand_x[j])
            src_e[y, x], src_y[y, x], src_x[y, x] = best
            out_img[y + 2, x + 2] = ap[best[0], best[1] + 2, best[2] + 2]
    return out_img[2:h + 2, 2:w + 2].copy()
