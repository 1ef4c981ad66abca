"""Runtime synthesis: per-region case loop, face composition, exaggeration."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .analogies import sharpen
from .cases import CaseLibrary
from .errors import CompositionError, DimensionError, InsufficientDataError, SolverError
from .features import compose_input, region_features
from .frames import LibraryFeatures, Target
from .geometry import (
    BACKGROUND,
    RegionMap,
    RegionPatch,
    apply_field,
    as_image,
    as_points,
    bilinear_sample,
    blend,
    mls_field,
    mls_map,
    sample_field,
    segment_regions,
    to_uint8,
    validate_landmarks,
)
from .learning.oracle import retrieve_initial
from .metrics import NMI_BINS
from .learning.selection import RegionModels

log = logging.getLogger(__name__)

THRESHOLD = 0.01
MAX_ITERS = 10
FEATHER = 1.0


@dataclass(frozen=True)
class TraceStep:
    iteration: int
    case_id: str
    theta: float
    omega: float


@dataclass
class RegionTrace:
    """Adopted steps of one region's loop and why it stopped."""

    region: int
    steps: list = field(default_factory=list)
    termination: str = ""

    def thetas(self):
        return [s.theta for s in self.steps]

    def to_json_obj(self) -> dict:
        return {
            "region": self.region,
            "termination": self.termination,
            "steps": [{"h": s.iteration, "case": s.case_id, "theta": s.theta, "omega": s.omega}
                      for s in self.steps],
        }


@dataclass
class ExaggerationWeights:
    """Convex weights over library cases (one per case, on the unit simplex)."""

    omega_bar: np.ndarray
    case_ids: list
    objective: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        self.omega_bar = np.asarray(self.omega_bar, dtype=np.float64)


@dataclass
class SynthesisTrace:
    """Per-region traces of one portrait plus its exaggeration weights."""

    regions: dict = field(default_factory=dict)
    exaggeration: ExaggerationWeights | None = None

    def to_json_obj(self) -> dict:
        out = {"schema_version": 1, "regions": [self.regions[r].to_json_obj() for r in sorted(self.regions)]}
        if self.exaggeration is not None:
            out["exaggeration"] = {
                "weights": {cid: float(w) for cid, w in zip(self.exaggeration.case_ids,
                                                          self.exaggeration.omega_bar)},
                "objective": float(self.exaggeration.objective),
                "iterations": int(self.exaggeration.iterations),
            }
        return out


# --------------------------------------------------------------------------
# runtime case loop


def synthesize_region(target: Target, region: int, lib: CaseLibrary, models: RegionModels | None, *,
                      threshold=THRESHOLD, max_iters=MAX_ITERS, bins=NMI_BINS,
                      features: LibraryFeatures | None = None) -> tuple[RegionPatch, RegionTrace]:
    """Synthesise one region of ``target`` from the library cases.

    Iteration 1 adopts the neutral-sketch region of the case whose aligned
    photo region has the highest NMI to the target's.  Each later iteration
    scores every case with the fitness model, blends the best one in with the
    weight model's omega and stops once the predicted relative gain falls
    below ``threshold`` (the interim is then kept as is) or after
    ``max_iters`` iterations.  ``models`` may be None only when
    ``max_iters == 1``.
    """
    if len(lib) == 0:
        raise InsufficientDataError("empty case library")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if models is None and max_iters > 1:
        raise ValueError("models are required for more than one iteration")
    features = features or LibraryFeatures(lib)
    cases = lib.cases
    trace = RegionTrace(region)

    best, _ = retrieve_initial(target, region, cases, bins)
    interim = target.aligned(cases[best], region)[1]
    fx = target.photo_features(region)
    fis = [features.photo_features(c, region) for c in cases]

    if max_iters == 1:
        trace.steps.append(TraceStep(1, cases[best].id, float("nan"), 1.0))
        trace.termination = "max_iters"
        return interim, trace

    def candidate_inputs(sketch_patch):
        sx = region_features(sketch_patch)
        return np.vstack([compose_input(fx, fi, sx).values for fi in fis])

    X = candidate_inputs(interim)
    theta_prev = float(models.fe.predict(X[best]))
    trace.steps.append(TraceStep(1, cases[best].id, theta_prev, 1.0))
    trace.termination = "max_iters"
    for h in range(2, max_iters + 1):
        pred = models.fe.predict(X)
        k = int(np.argmax(pred))
        theta = float(pred[k])
        if theta_prev <= 0 or (theta - theta_prev) / theta_prev < threshold:
            trace.termination = "converged"
            break
        omega = float(models.pe.predict(X[k]))
        cand = target.aligned(cases[k], region)[1]
        img, pts = blend(interim.image, interim.landmarks, cand.image, cand.landmarks, omega)
        interim = interim.with_image(img, pts)
        trace.steps.append(TraceStep(h, cases[k].id, theta, omega))
        theta_prev = theta
        if h < max_iters:
            X = candidate_inputs(interim)
    return interim, trace


# --------------------------------------------------------------------------
# composition


def _signed_distance(mask):
    return np.where(mask, ndimage.distance_transform_edt(mask), -ndimage.distance_transform_edt(~mask))


def compose_face(patches, photo_landmarks, region_map: RegionMap, width, height, feather=FEATHER):
    """Paint region patches into a white canvas laid out on ``photo_landmarks``.

    Every patch is MLS-warped from its own region landmarks to the matching
    photo landmarks.  Each region's weight is its signed distance to its
    mask boundary plus ``feather`` (clipped at 0).  With the default of 1
    a pixel outside a mask gets no weight from it, so regions meet without
    mixing; larger values blend neighbours in a band of ``feather - 1``
    pixels along region borders.  Pixels outside the face interior stay
    white.
    """
    q = validate_landmarks(photo_landmarks, width, height, region_map.n_landmarks)
    by_region = {p.region: p for p in patches}
    missing = [r for r in region_map.region_ids if r not in by_region]
    if missing:
        raise CompositionError(f"missing region patches: {missing}")
    layout = segment_regions(None, q, region_map, width, height)
    interior = np.zeros((height, width), dtype=bool)
    for g in layout:
        interior |= g.full_mask(height, width)
    acc = np.zeros((height, width))
    wsum = np.zeros((height, width))
    # pixels fed by one region copy its value; acc / wsum would round it off bin edges
    count = np.zeros((height, width), dtype=np.intp)
    single = np.zeros((height, width))
    for g in layout:
        p = by_region[g.region]
        mask = g.full_mask(height, width)
        weight = np.maximum(_signed_distance(mask) + feather, 0.0) * interior
        ys, xs = np.nonzero(weight)
        dst = q[region_map.indices(g.region)]
        src = p.global_landmarks()
        pts = np.column_stack([xs, ys]).astype(np.float64)
        back = pts if np.array_equal(src, dst) else mls_map(dst, src, pts)
        local = back - p.offset
        vals = bilinear_sample(p.image, local[:, 0], local[:, 1], fill=np.nan)
        ok = ~np.isnan(vals)
        acc[ys[ok], xs[ok]] += weight[ys[ok], xs[ok]] * vals[ok]
        wsum[ys[ok], xs[ok]] += weight[ys[ok], xs[ok]]
        count[ys[ok], xs[ok]] += 1
        single[ys[ok], xs[ok]] = vals[ok]
    out = np.full((height, width), BACKGROUND)
    mixed = count > 1
    out[mixed] = acc[mixed] / wsum[mixed]
    out[count == 1] = single[count == 1]
    return out


# --------------------------------------------------------------------------
# exaggeration


def normalize_points(pts) -> np.ndarray:
    """Centre a point set on its centroid and scale it to unit RMS radius."""
    p = as_points(pts)
    c = p - p.mean(axis=0)
    rms = np.sqrt((c ** 2).sum(axis=1).mean())
    if rms < 1e-12:
        raise DimensionError("point set has no spatial extent")
    return c / rms


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def _support_polish(G, c, w):
    """Exact equality-constrained minimiser on the support of ``w``, if feasible."""
    s = np.nonzero(w > 0)[0]
    k = len(s)
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = G[np.ix_(s, s)]
    kkt[:k, k] = kkt[k, :k] = 1.0
    rhs = np.append(c[s], 1.0)
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:k]
    if np.any(sol < 0):
        return None
    out = np.zeros_like(w)
    out[s] = sol
    return out


def simplex_least_squares(A, b, max_iter=10000, rel_tol=1e-8, tol=1e-6):
    """Minimise ``||A w - b||^2`` over the unit simplex by projected gradient.

    Uses Nesterov momentum with adaptive restart, then solves the KKT
    system on the detected support exactly when that stays feasible.

    Returns
    -------
    (w, objective, iterations)
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = A.shape[1]
    G = A.T @ A
    c = A.T @ b
    lip = 2.0 * max(np.linalg.eigvalsh(G)[-1], 1e-12)

    def obj(w):
        r = A @ w - b
        return float(r @ r)

    def pg_step(w):
        return project_simplex(w - 2.0 * (G @ w - c) / lip)

    w = np.full(n, 1.0 / n)
    y, t = w, 1.0
    f = obj(w)
    it = 0
    for it in range(1, max_iter + 1):
        w_new = pg_step(y)
        f_new = obj(w_new)
        if f_new > f:
            # restart momentum
            y, t = w, 1.0
            w_new = pg_step(w)
            f_new = obj(w_new)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = w_new + ((t - 1.0) / t_new) * (w_new - w)
        t = t_new
        done = abs(f - f_new) <= rel_tol * max(f, 1e-300) or np.array_equal(w_new, w)
        w, f = w_new, f_new
        if done:
            break
    polished = _support_polish(G, c, w)
    if polished is not None and obj(polished) <= f:
        w, f = polished / polished.sum(), obj(polished / polished.sum())
    residual = float(np.abs(w - pg_step(w)).max())
    if residual > tol:
        raise SolverError(f"simplex least squares did not converge in {max_iter} iterations", residual)
    return w, f, it


def exaggeration_weights(q_new, lib: CaseLibrary) -> ExaggerationWeights:
    """Convex combination of the cases' neutral landmark sets that best fits ``q_new``.

    All point sets are similarity-normalised first (centroid, unit RMS).
    """
    if len(lib) < 2:
        raise InsufficientDataError("exaggeration prediction needs at least 2 cases")
    target = normalize_points(q_new).ravel()
    A = np.column_stack([normalize_points(c.neutral_landmarks).ravel() for c in lib.cases])
    w, f, it = simplex_least_squares(A, target)
    return ExaggerationWeights(w, lib.ids(), f, it)


def predict_exaggeration(q_new, lib: CaseLibrary, weights: ExaggerationWeights | None = None):
    """Exaggeration field for a new face: the weighted sum of the case fields.

    Returns
    -------
    (field, weights)
    """
    weights = weights or exaggeration_weights(q_new, lib)
    vx = np.zeros(lib.cases[0].exaggeration_field.shape)
    for w, c in zip(weights.omega_bar, lib.cases):
        if w > 0:
            vx += w * c.exaggeration_field.astype(np.float64)
    return vx, weights


def smooth_and_apply_exaggeration(sketch, q_sketch, vx) -> np.ndarray:
    """Warp ``sketch`` by ``vx`` after replacing it with the MLS field of its landmark samples.

    Only the 67 landmark samples of ``vx`` matter: they become control
    displacements of a smooth MLS field, which is then applied with the
    inverse-sampling remap.
    """
    img = as_image(sketch)
    vx = np.asarray(vx, dtype=np.float64)
    if vx.shape != img.shape + (2,):
        raise DimensionError(f"field {vx.shape} does not match sketch {img.shape}")
    q = as_points(q_sketch, "q_sketch")
    d = sample_field(vx, q)
    h, w = img.shape
    smooth = mls_field(q, q + d, w, h)
    return apply_field(img, smooth)


# --------------------------------------------------------------------------
# full portrait


def synthesize_regions(target: Target, lib, all_models, *, threshold=THRESHOLD, max_iters=MAX_ITERS,
                       bins=NMI_BINS, features=None):
    """Run the case loop in every region; returns (patches, {region: RegionTrace})."""
    features = features or LibraryFeatures(lib)
    patches = []
    traces = {}
    for region in lib.region_map.region_ids:
        models = None if all_models is None else all_models[region]
        patch, trace = synthesize_region(target, region, lib, models, threshold=threshold,
                                         max_iters=max_iters, bins=bins, features=features)
        patches.append(patch)
        traces[region] = trace
    return patches, traces


def synthesize_portrait(photo, landmarks, lib: CaseLibrary, all_models, *, threshold=THRESHOLD,
                        max_iters=MAX_ITERS, bins=NMI_BINS, feather=FEATHER, do_sharpen=True,
                        sharpen_levels=3, kappa=2.0, features=None):
    """Photo to stylised sketch.

    Segment, run the case loop in all nine regions, compose, sharpen,
    then predict and apply the exaggeration.

    Returns
    -------
    (sketch uint8, SynthesisTrace)
    """
    photo = as_image(photo)
    if photo.shape != (lib.height, lib.width):
        raise DimensionError(f"photo is {photo.shape[1]}x{photo.shape[0]}, library uses "
                             f"{lib.width}x{lib.height}")
    q = validate_landmarks(landmarks, lib.width, lib.height, lib.region_map.n_landmarks)
    target = Target(photo, q, lib.region_map)
    patches, traces = synthesize_regions(target, lib, all_models, threshold=threshold,
                                         max_iters=max_iters, bins=bins, features=features)
    neutral = compose_face(patches, q, lib.region_map, lib.width, lib.height, feather)
    if do_sharpen:
        neutral = sharpen(neutral, lib, levels=sharpen_levels, kappa=kappa)
    trace = SynthesisTrace(traces)
    if len(lib) >= 2:
        vx, weights = predict_exaggeration(q, lib)
        trace.exaggeration = weights
        out = smooth_and_apply_exaggeration(neutral, q, vx)
    else:
        out = neutral
    return to_uint8(out), trace
