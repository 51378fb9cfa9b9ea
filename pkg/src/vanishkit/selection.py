"""Geometric consistency scores and greedy forward selection of feature subsets.

A candidate subset of one visual word is scored on how well its keypoints
line up (linearity, pixels), how steadily their orientations change (angle,
radians) and how steadily their scales change (scale, unitless). The
composite ``S_L * exp(S_A + S_S) / N**2`` is minimized.

Progressions are ordered by projection onto the fitted line and run from the
larger-scale end toward the smaller-scale end, so the scale ratios are
computed in the direction of the vanishing point.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError
from .features import feature_arrays
from .geometry import fit_line_lsq, principal_frame


@dataclass(frozen=True)
class ScoreBundle:
    linearity: float
    angle: float
    scale: float
    composite: float
    n: int


@dataclass(frozen=True)
class OrderedSubset:
    feature_ids: tuple
    scores: ScoreBundle

    @property
    def n(self):
        return len(self.feature_ids)


@dataclass
class SelectionConfig:
    accept_threshold: float = 0.5
    growth_factor: float = 1.5
    # growth is always allowed while the composite stays below this floor;
    # otherwise a perfectly collinear seed (score ~1e-15) could never grow
    growth_floor: float = 1e-6
    max_exhaustive: int = 12
    min_separation: float = 2.0

    def validate(self):
        if self.accept_threshold < 0 or self.growth_factor < 1 or self.growth_floor < 0:
            raise ValueError("invalid selection thresholds")
        if self.max_exhaustive < 3:
            raise ValueError("max_exhaustive must be >= 3")
        if self.min_separation < 0:
            raise ValueError("min_separation must be >= 0")


def wrapped_angle_diff(a, b):
    """Absolute circular difference in ``[0, pi]``."""
    d = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), 2 * np.pi)
    return np.minimum(d, 2 * np.pi - d)


def linearity_score(points):
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise ValueError("linearity score needs at least 3 keypoints")
    try:
        line = fit_line_lsq(pts)
    except DegenerateError:
        raise DegenerateError("degenerate subset") from None
    return float(np.mean(np.abs(pts @ line[:2] + line[2])))


def angle_score(angles):
    """Mean over consecutive triplets of ``| |A-B| - |B-C| |`` (circular diffs)."""
    a = np.asarray(angles, dtype=float)
    if len(a) < 3:
        raise ValueError("angle score needs at least 3 keypoints")
    d = wrapped_angle_diff(a[:-1], a[1:])
    return float(np.mean(np.abs(d[:-1] - d[1:])))


def scale_score(sizes):
    """Mean over consecutive triplets of ``|A/B - B/C|``."""
    s = np.asarray(sizes, dtype=float)
    if len(s) < 3:
        raise ValueError("scale score needs at least 3 keypoints")
    if np.any(s <= 0):
        raise ValueError("keypoint sizes must be positive")
    r = s[:-1] / s[1:]
    return float(np.mean(np.abs(r[:-1] - r[1:])))


def composite_score(linearity, angle, scale, n):
    return float(linearity * np.exp(angle + scale) / n**2)


def progression_order(points, sizes):
    """Indices ordering points along their fitted line, larger scale first."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    centroid, direction = principal_frame(pts)
    order = np.argsort((pts - centroid) @ direction, kind="stable")
    sizes = np.asarray(sizes, dtype=float)
    if sizes[order[0]] < sizes[order[-1]]:
        order = order[::-1]
    return order


def score_subset(points, angles, sizes):
    """Order a subset along its line and score it. Returns ``(order, ScoreBundle)``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    order = progression_order(pts, sizes)
    sl = linearity_score(pts)
    sa = angle_score(np.asarray(angles, dtype=float)[order])
    ss = scale_score(np.asarray(sizes, dtype=float)[order])
    n = len(pts)
    return order, ScoreBundle(sl, sa, ss, composite_score(sl, sa, ss, n), n)


def _batch_composite(xy, ang, size):
    """Composite scores for ``T`` candidate subsets of equal size ``N``.

    ``xy`` is ``(T, N, 2)``; ``ang`` and ``size`` are ``(T, N)``. Uses the
    closed-form principal axis of each 2x2 scatter matrix.
    """
    T, N = ang.shape
    mu = xy.mean(axis=1, keepdims=True)
    c = xy - mu
    cxx = (c[..., 0] ** 2).mean(axis=1)
    cyy = (c[..., 1] ** 2).mean(axis=1)
    cxy = (c[..., 0] * c[..., 1]).mean(axis=1)
    phi = 0.5 * np.arctan2(2 * cxy, cxx - cyy)
    d = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    t = np.einsum("tnk,tk->tn", c, d)
    perp = c[..., 0] * (-d[:, 1:2]) + c[..., 1] * d[:, 0:1]
    sl = np.abs(perp).mean(axis=1)
    order = np.argsort(t, axis=1, kind="stable")
    rows = np.arange(T)[:, None]
    a = ang[rows, order]
    s = size[rows, order]
    flip = s[:, 0] < s[:, -1]
    a[flip] = a[flip, ::-1]
    s[flip] = s[flip, ::-1]
    da = wrapped_angle_diff(a[:, :-1], a[:, 1:])
    sa = np.abs(da[:, :-1] - da[:, 1:]).mean(axis=1)
    r = s[:, :-1] / s[:, 1:]
    ss = np.abs(r[:, :-1] - r[:, 1:]).mean(axis=1)
    return sl * np.exp(sa + ss) / N**2


def _separated(xy, idx, cand, min_sep):
    if min_sep <= 0:
        return np.ones(len(cand), dtype=bool)
    d = np.linalg.norm(xy[cand][:, None, :] - xy[list(idx)][None, :, :], axis=2)
    return np.all(d >= min_sep, axis=1)


def _seed_triples(xy, pool, cfg):
    if len(pool) <= cfg.max_exhaustive:
        return list(itertools.combinations(pool, 3))
    pts = xy[pool]
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    d[d < max(cfg.min_separation, 1e-12)] = np.inf
    pairs = set()
    for i in range(len(pool)):
        j = int(np.argmin(d[i]))
        if np.isfinite(d[i, j]):
            pairs.add((min(pool[i], pool[j]), max(pool[i], pool[j])))
    triples = set()
    for a, b in sorted(pairs):
        for k in pool:
            if k != a and k != b:
                triples.add(tuple(sorted((a, b, k))))
    return sorted(triples)


def _select(xy, ang, size, cfg):
    """Greedy selection over local indices; returns lists of local indices."""
    pool = list(range(len(xy)))
    found = []
    while len(pool) >= 3:
        triples = _seed_triples(xy, pool, cfg)
        if cfg.min_separation > 0 and triples:
            T = np.array(triples)
            p = xy[T]
            sep = np.min(np.stack([
                np.linalg.norm(p[:, 0] - p[:, 1], axis=1),
                np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
                np.linalg.norm(p[:, 1] - p[:, 2], axis=1)]), axis=0)
            triples = [t for t, ok in zip(triples, sep >= cfg.min_separation) if ok]
        if not triples:
            break
        T = np.array(triples)
        scores = _batch_composite(xy[T], ang[T], size[T])
        best = int(np.argmin(scores))
        current = list(T[best])
        cur_sc = float(scores[best])
        if cur_sc > cfg.accept_threshold:
            break
        while True:
            rest = np.array([k for k in pool if k not in current], dtype=int)
            if rest.size == 0:
                break
            rest = rest[_separated(xy, current, rest, cfg.min_separation)]
            if rest.size == 0:
                break
            sets = np.array([current + [k] for k in rest])
            sc = _batch_composite(xy[sets], ang[sets], size[sets])
            b = int(np.argmin(sc))
            limit = max(cfg.growth_factor * cur_sc, cfg.growth_floor)
            if sc[b] > limit or sc[b] > cfg.accept_threshold:
                break
            current.append(int(rest[b]))
            cur_sc = float(sc[b])
        found.append(current)
        pool = [k for k in pool if k not in current]
    return found


def forward_select(group, features, config=None):
    """Greedy bottom-up selection of line-like subsets within one group.

    Parameters
    ----------
    group : FeatureGroup or iterable of feature ids
    features : list of Feature
        Must contain every id of ``group``.
    config : SelectionConfig, optional

    Returns
    -------
    list of OrderedSubset
        Disjoint subsets with at least 3 features and composite score at most
        ``config.accept_threshold``, in the order they were found.
    """
    cfg = config or SelectionConfig()
    cfg.validate()
    member_ids = sorted(getattr(group, "member_ids", group))
    if len(member_ids) < 3:
        return []
    by_id = {f.id: f for f in features}
    members = [by_id[i] for i in member_ids]
    xy, size, ang, _, _ = feature_arrays(members)
    out = []
    for local in _select(xy, ang, size, cfg):
        order, bundle = score_subset(xy[local], ang[local], size[local])
        ids = tuple(member_ids[local[k]] for k in order)
        out.append(OrderedSubset(feature_ids=ids, scores=bundle))
    return out
