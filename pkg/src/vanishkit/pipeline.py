"""End-to-end detection: features, visual words, implicit lines, weighted RANSAC."""

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import clustering, linefit, ransac, selection
from .config import PipelineConfig
from .errors import InsufficientLinesError, NoVanishingPointError, WeightCollapseError
from .features import extract_features


@dataclass
class DetectionOutput:
    image_id: str
    vp: Optional[tuple]
    n_implicit: int = 0
    n_explicit: int = 0
    n_inliers: int = 0
    runtime_ms: float = 0.0
    stage_ms: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def found(self):
        return self.vp is not None

    def vp_homogeneous(self):
        return None if self.vp is None else np.array([self.vp[0], self.vp[1], 1.0])


class _Timer:
    def __init__(self):
        self.stages = {}

    def __call__(self, name, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kw)
        finally:
            self.stages[name] = self.stages.get(name, 0.0) + (time.perf_counter() - t0) * 1e3


def implicit_lines(features, config, timer=None):
    """Cluster descriptors, select line-like subsets and fit a line to each."""
    timer = timer or _Timer()
    if len(features) < 2:
        return [], 0
    dm = timer("distance", clustering.build_distance_matrix, features)
    den = timer("linkage", clustering.single_linkage, dm)
    ids = [f.id for f in features]
    groups = timer("cut", clustering.cut_dendrogram, den, config.cut, ids)
    subsets = timer("selection", lambda: [s for g in groups
                                          for s in selection.forward_select(g, features, config.selection)])
    lines = timer("linefit", lambda: [linefit.fit_oriented_line(s, features) for s in subsets])
    return _unique_tracks(lines, features), len(groups)


def _unique_tracks(lines, features):
    """Drop lines whose member positions repeat an earlier line's.

    Keypoints with several dominant orientations share a location, so the
    same track can be selected once per orientation copy; it should vote once.
    """
    by_id = {f.id: f for f in features}
    seen = set()
    out = []
    for ln in lines:
        key = frozenset((by_id[i].keypoint.x, by_id[i].keypoint.y) for i in ln.members)
        if key not in seen:
            seen.add(key)
            out.append(ln)
    return out


def detect_pipeline(source, config=None, image_id="", image_size=None, segments=None):
    """Detect the dominant vanishing point of an image or of a feature list.

    ``source`` is an image array or a list of Feature. ``segments`` (a list
    of LineSegment) overrides the configured explicit-line source. Lack of
    lines or of a consensus gives ``vp=None`` with the failing stage in
    ``diagnostics["stage"]``; an ideal (infinitely far) VP is also reported as
    ``None``.
    """
    cfg = (config or PipelineConfig()).validate()
    timer = _Timer()
    t0 = time.perf_counter()
    out = DetectionOutput(image_id=image_id, vp=None)
    is_image = isinstance(source, np.ndarray)
    if is_image:
        features = timer("features", extract_features, source, cfg.features)
        if image_size is None:
            image_size = (source.shape[1], source.shape[0])
    else:
        features = list(source)
    out.diagnostics["n_features"] = len(features)

    lines, n_groups = implicit_lines(features, cfg, timer)
    out.diagnostics["n_groups"] = n_groups
    out.n_implicit = len(lines)

    if segments is None and cfg.explicit_lines == "builtin" and is_image:
        segments = timer("segments", linefit.detect_segments, source, cfg.segments)
    if cfg.explicit_lines == "none":
        segments = None
    segments = segments or []
    out.n_explicit = len(segments)

    def finish():
        out.stage_ms = dict(timer.stages)
        out.runtime_ms = (time.perf_counter() - t0) * 1e3
        return out

    try:
        pool = linefit.build_pool(lines, segments)
    except InsufficientLinesError as exc:
        out.diagnostics.update(stage="linefit", reason=str(exc))
        return finish()
    try:
        res = timer("ransac", ransac.run, pool, cfg.ransac_config(), image_size)
    except (InsufficientLinesError, NoVanishingPointError, WeightCollapseError) as exc:
        out.diagnostics.update(stage="ransac", reason=str(exc))
        return finish()
    out.n_inliers = len(res.inlier_ids)
    out.diagnostics["homogeneous"] = tuple(float(v) for v in res.vp)
    if res.is_ideal:
        out.diagnostics.update(stage="ransac", reason="ideal vanishing point")
    else:
        out.vp = res.xy
    return finish()
