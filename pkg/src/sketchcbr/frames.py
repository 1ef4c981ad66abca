"""Target frames: a face's region patches plus library cases warped into them.

Candidate sketches come from faces of different shape, so before they can be
compared with or blended into a target region they are warped (MLS over all
67 landmarks) onto the target's landmark layout and cropped to the target
region's box.  Neutral sketches share the photo layout, so one warp serves
both the photo and the neutral sketch of a case.
"""
from __future__ import annotations

import numpy as np

from .cases import Case, CaseLibrary
from .features import FeatureVector, region_features
from .geometry import RegionMap, RegionPatch, bilinear_sample, mls_map, segment_regions


class Target:
    """Region patches of one face (photo + landmarks) and per-case alignments."""

    def __init__(self, photo, landmarks, region_map: RegionMap):
        self.photo = np.asarray(photo, dtype=np.float64)
        self.landmarks = np.asarray(landmarks, dtype=np.float64)
        self.region_map = region_map
        self.patches = {p.region: p for p in segment_regions(self.photo, self.landmarks, region_map)}
        self._features = {}
        self._aligned = {}

    @classmethod
    def from_case(cls, case: Case, region_map: RegionMap) -> "Target":
        return cls(case.photo, case.photo_landmarks, region_map)

    def patch(self, region) -> RegionPatch:
        return self.patches[region]

    def photo_features(self, region) -> FeatureVector:
        if region not in self._features:
            self._features[region] = region_features(self.patches[region])
        return self._features[region]

    def crop_patch(self, region, image) -> RegionPatch:
        """This region's geometry filled with pixels of a full-size ``image``."""
        p = self.patches[region]
        return p.with_image(p.crop(image))

    def aligned(self, case: Case, region) -> tuple[RegionPatch, RegionPatch]:
        """``case``'s photo and neutral sketch warped into this region's frame."""
        key = (case.id, region)
        if key not in self._aligned:
            p = self.patches[region]
            x0, y0, x1, y1 = p.bbox
            ys, xs = np.mgrid[y0:y1, x0:x1]
            grid = np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64)
            back = mls_map(self.landmarks, case.photo_landmarks, grid)
            photo = bilinear_sample(case.photo, back[:, 0], back[:, 1]).reshape(p.shape)
            sketch = bilinear_sample(case.neutral_sketch, back[:, 0], back[:, 1]).reshape(p.shape)
            self._aligned[key] = (p.with_image(photo), p.with_image(sketch))
        return self._aligned[key]


class LibraryFeatures:
    """Lazily computed photo-region descriptors of every case in its own frame."""

    def __init__(self, lib: CaseLibrary):
        self.lib = lib
        self._targets = {}

    def target(self, case: Case) -> Target:
        if case.id not in self._targets:
            self._targets[case.id] = Target.from_case(case, self.lib.region_map)
        return self._targets[case.id]

    def photo_features(self, case: Case, region) -> FeatureVector:
        return self.target(case).photo_features(region)
