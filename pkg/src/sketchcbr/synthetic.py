"""Synthetic style dataset: rendered geometric faces and a known "artist" style.

Photos are procedurally drawn faces with 67 landmarks laid out as in
``docs/landmarks.md``.  The stylised sketch of a photo is a fixed edge
rendering, optionally followed by a fixed landmark-driven exaggeration
(larger eyes, longer nose, wider mouth, longer chin) applied with an MLS
warp.  Everything is deterministic given the seed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .geometry import to_uint8, warp_image

EYE_SCALE = 1.18
NOSE_DROP = 0.05
MOUTH_WIDEN = 1.12
CHIN_DROP = 0.035


@dataclass
class SyntheticPair:
    id: str
    photo: np.ndarray  # uint8
    sketch: np.ndarray  # uint8
    photo_landmarks: np.ndarray
    sketch_landmarks: np.ndarray


def _ellipse_points(cx, cy, ax, ay, n, start=0.0):
    t = start + 2 * np.pi * np.arange(n) / n
    return np.column_stack([cx + ax * np.cos(t), cy + ay * np.sin(t)])


def face_landmarks(rng, width, height) -> tuple[np.ndarray, dict]:
    """Sample one face layout; returns the 67 landmarks and the shape parameters."""
    cx = width / 2 + rng.uniform(-0.03, 0.03) * width
    cy = height * (0.52 + rng.uniform(-0.02, 0.02))
    a = width * rng.uniform(0.32, 0.40)
    b = height * rng.uniform(0.36, 0.42)

    t = np.linspace(np.pi + 0.25, -0.25, 20)
    contour = np.column_stack([cx + a * np.cos(t), cy + b * np.sin(t)])

    eye_dx = a * rng.uniform(0.38, 0.46)
    eye_y = cy - b * rng.uniform(0.14, 0.22)
    ew = a * rng.uniform(0.16, 0.22)
    eh = ew * rng.uniform(0.32, 0.45)
    eyes = [_ellipse_points(cx + s * eye_dx, eye_y, ew, eh, 8) for s in (-1, 1)]

    brow_gap = eh + b * rng.uniform(0.08, 0.12)
    arch = eh * rng.uniform(0.3, 0.9)
    brows = []
    for s in (-1, 1):
        xs = cx + s * eye_dx + np.linspace(-1.25, 1.25, 6) * ew * s
        u = np.linspace(-1, 1, 6)
        ys = eye_y - brow_gap - arch * (1 - u ** 2)
        brows.append(np.column_stack([xs, ys]))

    tip_y = cy + b * rng.uniform(0.12, 0.20)
    nw = a * rng.uniform(0.14, 0.20)
    top_y = eye_y + eh * 0.5
    nose = np.array([
        [cx, top_y],
        [cx - nw * 0.25, top_y + (tip_y - top_y) * 0.45],
        [cx + nw * 0.25, top_y + (tip_y - top_y) * 0.45],
        [cx - nw * 0.45, tip_y - (tip_y - top_y) * 0.15],
        [cx + nw * 0.45, tip_y - (tip_y - top_y) * 0.15],
        [cx, tip_y],
        [cx - nw, tip_y + b * 0.02],
        [cx + nw, tip_y + b * 0.02],
        [cx, tip_y + b * 0.05],
    ])

    my = cy + b * rng.uniform(0.42, 0.50)
    mw = a * rng.uniform(0.26, 0.36)
    mh = mw * rng.uniform(0.22, 0.35)
    ang = 2 * np.pi * np.arange(10) / 10
    mouth = np.column_stack([
        cx + mw * np.cos(ang),
        my + mh * np.sin(ang) * np.where(np.sin(ang) < 0, 0.7, 1.0),
    ])

    pts = np.vstack([contour, brows[0], brows[1], eyes[0], eyes[1], nose, mouth])
    params = dict(cx=cx, cy=cy, a=a, b=b, eye_dx=eye_dx, eye_y=eye_y, ew=ew, eh=eh,
                  tip_y=tip_y, nw=nw, my=my, mw=mw, mh=mh)
    return pts, params


def _segment_distance(xs, ys, p, q):
    d = q - p
    L2 = max(float(d @ d), 1e-12)
    t = np.clip(((xs - p[0]) * d[0] + (ys - p[1]) * d[1]) / L2, 0, 1)
    return np.hypot(xs - p[0] - t * d[0], ys - p[1] - t * d[1])


def _polyline_distance(xs, ys, pts, closed=False):
    n = len(pts)
    segs = range(n if closed else n - 1)
    return np.min([_segment_distance(xs, ys, pts[i], pts[(i + 1) % n]) for i in segs], axis=0)


def _soft(dist, width):
    return np.clip(1.0 - dist / width, 0.0, 1.0)


def render_photo(pts, params, rng, width, height) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    p = params
    img = np.full((height, width), 205.0) + 15.0 * (ys / height - 0.5)

    face = ((xs - p["cx"]) / p["a"]) ** 2 + ((ys - p["cy"]) / p["b"]) ** 2
    skin = 165.0 + rng.uniform(-15, 15) - 25.0 * np.clip(face, 0, 1) ** 2
    img = np.where(face <= 1.0, skin, img)

    for s in (-1, 1):
        ex = p["cx"] + s * p["eye_dx"]
        e = ((xs - ex) / p["ew"]) ** 2 + ((ys - p["eye_y"]) / p["eh"]) ** 2
        img = np.where(e <= 1.0, 235.0, img)
        iris = np.hypot(xs - ex, ys - p["eye_y"]) <= p["eh"] * 0.9
        img = np.where(iris, 45.0, img)
        img -= 90.0 * _soft(np.abs(np.sqrt(e) - 1.0) * p["eh"], 1.2)

    brows = [pts[20:26], pts[26:32]]
    for brow in brows:
        img -= 95.0 * _soft(_polyline_distance(xs, ys, brow), 2.2 + p["eh"] * 0.25)

    nose = pts[48:57]
    img -= 45.0 * _soft(_polyline_distance(xs, ys, nose[[0, 1, 3, 6]]), 1.5)
    img -= 45.0 * _soft(_polyline_distance(xs, ys, nose[[0, 2, 4, 7]]), 1.5)
    img -= 60.0 * _soft(_polyline_distance(xs, ys, nose[[6, 8, 7]]), 1.5)

    mouth = pts[57:67]
    m = ((xs - p["cx"]) / p["mw"]) ** 2 + ((ys - p["my"]) / p["mh"]) ** 2
    img = np.where(m <= 1.0, 110.0, img)
    img -= 70.0 * _soft(_polyline_distance(xs, ys, mouth, closed=True), 1.4)
    img -= 50.0 * _soft(np.abs(ys - p["my"]) + 10 * (m > 1.0), 1.2)

    img -= 40.0 * _soft(_polyline_distance(xs, ys, pts[0:20]), 1.8)
    img += rng.normal(0.0, 3.0, img.shape)
    img = ndimage.gaussian_filter(img, 0.7)
    return np.clip(img, 0, 255)


def stylize(photo) -> np.ndarray:
    """The fixed "artist" line rendering of a photo (no exaggeration)."""
    smooth = ndimage.gaussian_filter(np.asarray(photo, dtype=np.float64), 1.0)
    mag = np.hypot(ndimage.sobel(smooth, axis=1), ndimage.sobel(smooth, axis=0))
    lines = np.clip(mag * 0.9 - 12.0, 0, 235)
    tone = 0.18 * np.clip(170.0 - smooth, 0, None)
    return np.clip(255.0 - lines - tone, 0, 255)


def exaggerate_landmarks(pts) -> np.ndarray:
    """Fixed exaggeration of a 67-point layout."""
    out = np.array(pts, dtype=np.float64, copy=True)
    face_h = out[:20, 1].max() - out[20:32, 1].min()
    for sl in (slice(32, 40), slice(40, 48)):
        c = out[sl].mean(axis=0)
        out[sl] = c + EYE_SCALE * (out[sl] - c)
    tip = out[53, 1]
    top = out[48, 1]
    out[48:57, 1] = top + (out[48:57, 1] - top) * (1 + NOSE_DROP * face_h / max(tip - top, 1.0))
    mc = out[57:67].mean(axis=0)
    out[57:67, 0] = mc[0] + MOUTH_WIDEN * (out[57:67, 0] - mc[0])
    out[57:67, 1] += 0.5 * NOSE_DROP * face_h
    out[7:13, 1] += CHIN_DROP * face_h
    return out


def make_pair(index, seed=0, width=200, height=250, exaggerate=True) -> SyntheticPair:
    rng = np.random.default_rng([seed, index])
    pts, params = face_landmarks(rng, width, height)
    photo = render_photo(pts, params, rng, width, height)
    style = stylize(photo)
    if exaggerate:
        q_sketch = exaggerate_landmarks(pts)
        q_sketch[:, 0] = np.clip(q_sketch[:, 0], 0, width - 1)
        q_sketch[:, 1] = np.clip(q_sketch[:, 1], 0, height - 1)
        sketch = warp_image(style, pts, q_sketch)
    else:
        q_sketch = pts.copy()
        sketch = style
    return SyntheticPair(f"face{index:03d}", to_uint8(photo), to_uint8(sketch), pts, q_sketch)


def make_dataset(n=20, seed=0, width=200, height=250, exaggerate=True) -> list[SyntheticPair]:
    return [make_pair(i, seed, width, height, exaggerate) for i in range(n)]


def write_dataset(out_dir, pairs) -> Path:
    """Write pairs as PNG + landmark JSON files and return the manifest path."""
    from .io import write_landmarks, write_png

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for p in pairs:
        entry = {
            "id": p.id,
            "photo": f"{p.id}_photo.png",
            "sketch": f"{p.id}_sketch.png",
            "photo_landmarks": f"{p.id}_photo.json",
            "sketch_landmarks": f"{p.id}_sketch.json",
        }
        write_png(out / entry["photo"], p.photo)
        write_png(out / entry["sketch"], p.sketch)
        write_landmarks(out / entry["photo_landmarks"], p.photo_landmarks)
        write_landmarks(out / entry["sketch_landmarks"], p.sketch_landmarks)
        manifest.append(entry)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path
