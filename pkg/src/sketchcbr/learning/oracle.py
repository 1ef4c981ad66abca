"""Groundtruth-driven synthesis loop that produces fitness/weight training samples."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..cases import CaseLibrary
from ..errors import DimensionError, InsufficientDataError, RegionMismatchError
from ..features import compose_input, region_features
from ..frames import LibraryFeatures
from ..geometry import RegionPatch, blend
from ..metrics import NMI_BINS, _entropy_from_counts, intensity_bins, nmi_from_bins, patch_nmi

log = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5) - 1) / 2
OMEGA_TOL = 1e-3
STARTS = (0.0, 0.5, 1.0)


def golden_section_max(f, lo, hi, tol=OMEGA_TOL, cache=None):
    """Maximise ``f`` on ``[lo, hi]`` by golden-section search.

    Returns the best ``(x, f(x))`` among all points probed.  ``cache`` maps
    already evaluated points to values.
    """
    cache = {} if cache is None else cache

    def ev(x):
        if x not in cache:
            cache[x] = f(x)
        return cache[x]

    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = ev(c), ev(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = ev(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = ev(d)
    return _best(cache)


def _phi(c):
    c = c.astype(np.float64)
    return np.where(c > 0, c * np.log(np.maximum(c, 1)), 0.0)


def _count_changes(bins_from, bins_to, init):
    """Per-event change of sum(c log c) when each event moves one count between bins.

    Events are in time order; the counts seen by an event include all
    earlier events.
    """
    e = len(bins_from)
    bins = np.concatenate([bins_from, bins_to])
    delta = np.concatenate([-np.ones(e, np.int64), np.ones(e, np.int64)])
    order = np.lexsort((np.tile(np.arange(e), 2), bins))
    b_sorted = bins[order]
    d_sorted = delta[order]
    csum = np.cumsum(d_sorted)
    start = np.r_[True, b_sorted[1:] != b_sorted[:-1]]
    base = np.maximum.accumulate(np.where(start, np.arange(len(csum)), 0))
    group = csum - csum[base] + d_sorted[base]
    after = init[b_sorted] + group
    dphi = np.empty(2 * e)
    dphi[order] = _phi(after) - _phi(after - d_sorted)
    return dphi[:e] + dphi[e:]


def sweep_cross_dissolve(a, b, gt_bins, bins=NMI_BINS):
    """Exact piecewise-constant profile of NMI((1-w) a + w b, gt) over w in [0, 1].

    Each pixel changes intensity bin only where its linear path crosses a
    bin edge, so the profile is constant between consecutive crossings.

    Returns
    -------
    (lo, hi, value)
        Interval bounds and the NMI on each open interval, in order.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = a.size
    scale = bins / 256.0
    ba = intensity_bins(a, bins)
    bb = intensity_bins(b, bins)
    steps = bb - ba
    moving = np.flatnonzero(steps)
    counts = np.abs(steps[moving])
    pix = np.repeat(moving, counts)
    offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    up = steps[pix] > 0
    # bin edge crossed: entering k+1 when rising, leaving k when falling
    edge = np.where(up, ba[pix] + 1 + offs, ba[pix] - offs)
    w = (edge / scale - a[pix]) / (b[pix] - a[pix])
    order = np.argsort(w, kind="stable")
    w, pix, edge, up = w[order], pix[order], edge[order], up[order]
    f = np.where(up, edge - 1, edge)
    t = np.where(up, edge, edge - 1)
    g = gt_bins[pix]

    init_a = np.bincount(ba, minlength=bins)
    init_j = np.bincount(ba * bins + gt_bins, minlength=bins * bins)
    s_a = _phi(init_a).sum() + np.concatenate([[0.0], np.cumsum(_count_changes(f, t, init_a))])
    s_j = _phi(init_j).sum() + np.concatenate(
        [[0.0], np.cumsum(_count_changes(f * bins + g, t * bins + g, init_j))])
    h_g = _entropy_from_counts(np.bincount(gt_bins, minlength=bins), n)
    h_a = np.log(n) - s_a / n
    h_j = np.log(n) - s_j / n
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.where(h_j > 1e-12, (h_a + h_g) / h_j, 1.0)
    lo = np.concatenate([[0.0], w])
    hi = np.concatenate([w, [1.0]])
    # only states after the last event sharing a crossing point are realised
    keep = np.r_[lo[1:] != lo[:-1], True]
    return lo[keep], hi[keep], value[keep]


def _blend_objective(interim: RegionPatch, candidate: RegionPatch, groundtruth: RegionPatch, bins):
    """theta(omega) and, for a shared layout, the masked pixel vectors of the cross-dissolve."""
    mask = interim.mask & candidate.mask & groundtruth.mask
    if not mask.any():
        raise DimensionError("interim, candidate and groundtruth masks do not overlap")
    gt_bins = intensity_bins(groundtruth.image[mask], bins)
    if np.array_equal(interim.landmarks, candidate.landmarks):
        # same layout: the warps are identities and the blend is a cross-dissolve
        a = interim.image[mask]
        b = candidate.image[mask]

        def theta(omega):
            if omega == 0.0:
                img = a
            elif omega == 1.0:
                img = b
            else:
                img = a + omega * (b - a)
            return nmi_from_bins(intensity_bins(img, bins), gt_bins, bins)
        return theta, (a, b, gt_bins)

    def theta(omega):
        img, _ = blend(interim.image, interim.landmarks, candidate.image, candidate.landmarks, omega)
        return nmi_from_bins(intensity_bins(img[mask], bins), gt_bins, bins)
    return theta, None


def omega_grid(tol=OMEGA_TOL) -> np.ndarray:
    """Blend weights searched: the lattice of step ``tol`` on [0, 1]."""
    return np.linspace(0.0, 1.0, int(round(1.0 / tol)) + 1)


def _grid_candidates(lo, value, grid, top, eps=1e-9):
    """Grid weights worth evaluating directly, given the exact sweep.

    A grid point strictly inside a sweep interval takes that interval's
    value; one grid point of each of the ``top`` best such intervals is
    returned.  Grid points within ``eps`` of a breakpoint mix the states on
    either side, so all of them are returned.
    """
    idx = np.searchsorted(lo, grid, side="right") - 1
    nxt = np.minimum(idx + 1, len(lo) - 1)
    gap_lo = np.where(idx > 0, grid - lo[idx], np.inf)
    gap_hi = np.where(idx + 1 < len(lo), lo[nxt] - grid, np.inf)
    ambiguous = (gap_lo < eps) | (gap_hi < eps)
    vals = value[idx]
    clear = np.flatnonzero(~ambiguous)
    out = []
    seen = set()
    for k in clear[np.argsort(-vals[clear], kind="stable")]:
        if idx[k] in seen:
            continue
        seen.add(idx[k])
        out.append(float(grid[k]))
        if len(seen) == top:
            break
    out.extend(float(g) for g in grid[ambiguous])
    return out


def _best(cache):
    return max(cache.items(), key=lambda kv: (kv[1], -kv[0]))


def optimize_blend_weight(interim: RegionPatch, candidate: RegionPatch, groundtruth: RegionPatch,
                          bins=NMI_BINS, tol=OMEGA_TOL, top=8):
    """Blend weight maximising similarity of the blended patch to the groundtruth.

    The endpoints and 0.5 are always evaluated.  When both patches share a
    landmark layout the blend is a per-pixel cross-dissolve and the binned
    NMI is piecewise constant in omega; every bin-crossing interval is then
    scored exactly, each weight of the ``tol`` lattice inherits its
    interval's score and the ``top`` best are confirmed by direct evaluation
    (as is every lattice weight sitting on a breakpoint).
    Otherwise golden-section search runs on each half of [0, 1].

    Returns
    -------
    (omega, theta)
    """
    if not (interim.region == candidate.region == groundtruth.region):
        raise RegionMismatchError("interim, candidate and groundtruth must be the same region")
    theta, dissolve = _blend_objective(interim, candidate, groundtruth, bins)
    cache = {w: theta(w) for w in STARTS}
    if dissolve is None:
        golden_section_max(theta, 0.0, 0.5, tol, cache)
        golden_section_max(theta, 0.5, 1.0, tol, cache)
    else:
        lo, _, value = sweep_cross_dissolve(*dissolve, bins)
        for w in _grid_candidates(lo, value, omega_grid(tol), top):
            if w not in cache:
                cache[w] = theta(w)
    omega, value = _best(cache)
    return float(omega), float(value)


@dataclass(frozen=True)
class TrainingSample:
    input: np.ndarray
    theta: float
    omega: float
    region: int
    groundtruth_id: str
    candidate_id: str
    iteration: int


class SampleSet:
    """Array-backed collection of training samples for one region.

    Indexing yields :class:`TrainingSample` views; the arrays are what the
    learners and the sample file format use.
    """

    def __init__(self, region, X, theta, omega, x_index, i_index, iteration, case_ids, seed=0):
        self.region = int(region)
        self.X = np.asarray(X, dtype=np.float32).reshape(len(theta), -1)
        self.theta = np.asarray(theta, dtype=np.float32)
        self.omega = np.asarray(omega, dtype=np.float32)
        self.x_index = np.asarray(x_index, dtype=np.uint32)
        self.i_index = np.asarray(i_index, dtype=np.uint32)
        self.iteration = np.asarray(iteration, dtype=np.uint16)
        self.case_ids = list(case_ids)
        self.seed = int(seed)

    def __len__(self):
        return len(self.theta)

    def __getitem__(self, k) -> TrainingSample:
        return TrainingSample(self.X[k], float(self.theta[k]), float(self.omega[k]), self.region,
                              self.case_ids[self.x_index[k]], self.case_ids[self.i_index[k]],
                              int(self.iteration[k]))

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    @property
    def dim(self):
        return self.X.shape[1]

    def target(self, name) -> np.ndarray:
        if name == "theta":
            return self.theta.astype(np.float64)
        if name == "omega":
            return self.omega.astype(np.float64)
        raise ValueError(f"unknown target {name!r}")

    def steps_per_groundtruth(self) -> dict:
        """Number of blending iterations run for each groundtruth case."""
        out = {}
        for x in np.unique(self.x_index):
            out[self.case_ids[x]] = len(np.unique(self.iteration[self.x_index == x]))
        return out


def make_folds(n, folds, seed) -> list:
    rng = np.random.default_rng(seed)
    return [np.sort(f) for f in np.array_split(rng.permutation(n), folds)]


def retrieve_initial(target, region, candidates, bins=NMI_BINS):
    """Index (into ``candidates``) of the case whose aligned photo region is most similar."""
    x_patch = target.patch(region)
    scores = [patch_nmi(x_patch, target.aligned(c, region)[0], bins) for c in candidates]
    return int(np.argmax(scores)), scores


def generate_training_data(lib: CaseLibrary, region: int, *, seed=0, threshold=0.01, max_iters=10,
                           folds=10, bins=NMI_BINS, features: LibraryFeatures | None = None) -> SampleSet:
    """Run the groundtruth-driven synthesis loop over case folds and collect samples.

    The library is split into ``folds`` random parts.  Each case of a part is
    synthesised from the cases of the other parts: iteration 1 retrieves the
    case whose photo region is most similar; every later iteration scores all
    candidates with :func:`optimize_blend_weight` against the case's own
    neutral sketch, emits one sample per candidate and keeps the best blend.
    The loop stops once the relative gain drops below ``threshold`` or after
    ``max_iters`` iterations.
    """
    n = len(lib)
    if n < folds:
        raise InsufficientDataError(f"need at least {folds} cases for {folds} folds, got {n}")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    features = features or LibraryFeatures(lib)
    cases = lib.cases
    rows, thetas, omegas, xs, is_, hs = [], [], [], [], [], []

    for fold in make_folds(n, folds, seed):
        in_fold = set(fold.tolist())
        cand_idx = [j for j in range(n) if j not in in_fold]
        cand_cases = [cases[j] for j in cand_idx]
        cand_feats = [features.photo_features(c, region) for c in cand_cases]
        for x in fold:
            case_x = cases[x]
            target = features.target(case_x)
            fx = target.photo_features(region)
            gt = target.crop_patch(region, case_x.neutral_sketch)
            best, _ = retrieve_initial(target, region, cand_cases, bins)
            interim = target.aligned(cand_cases[best], region)[1]
            theta_prev = patch_nmi(interim, gt, bins)
            for h in range(2, max_iters + 1):
                sx = region_features(interim)
                results = []
                for j, (c, fi) in enumerate(zip(cand_cases, cand_feats)):
                    cand = target.aligned(c, region)[1]
                    omega, theta = optimize_blend_weight(interim, cand, gt, bins)
                    results.append((omega, theta))
                    rows.append(compose_input(fx, fi, sx).values)
                    thetas.append(theta)
                    omegas.append(omega)
                    xs.append(x)
                    is_.append(cand_idx[j])
                    hs.append(h)
                k = int(np.argmax([t for _, t in results]))
                omega_best, theta_best = results[k]
                gain = (theta_best - theta_prev) / theta_prev
                if gain < threshold:
                    break
                img, pts = blend(interim.image, interim.landmarks,
                                 target.aligned(cand_cases[k], region)[1].image,
                                 interim.landmarks, omega_best)
                interim = interim.with_image(img, pts)
                theta_prev = theta_best
        log.debug("region %d: fold done, %d samples so far", region, len(thetas))

    dim = rows[0].size if rows else 0
    X = np.vstack(rows) if rows else np.zeros((0, dim), dtype=np.float32)
    return SampleSet(region, X, thetas, omegas, xs, is_, hs, lib.ids(), seed)
