"""Implicit lines through selected features, explicit line segments, line pools."""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InsufficientLinesError
from .features import feature_arrays, to_gray
from .geometry import OrientedLine, line_from_point_direction, line_through, principal_frame


@dataclass(frozen=True)
class LineSegment:
    p0: tuple
    p1: tuple

    @property
    def length(self):
        return float(np.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1]))

    @property
    def midpoint(self):
        return np.array([(self.p0[0] + self.p1[0]) / 2.0, (self.p0[1] + self.p1[1]) / 2.0])


@dataclass
class SegmentConfig:
    min_length: float = 20.0
    canny_sigma: float = 1.5
    hough_threshold: int = 10
    line_gap: int = 3
    n_angles: int = 360

    def validate(self):
        if self.min_length <= 0 or self.canny_sigma <= 0:
            raise ValueError("min_length and canny_sigma must be positive")
        if self.hough_threshold < 1 or self.line_gap < 0 or self.n_angles < 2:
            raise ValueError("invalid Hough parameters")


@dataclass
class LinePool:
    lines: list
    n_implicit: int
    n_explicit: int

    def __len__(self):
        return len(self.lines)

    def arrays(self):
        """``(L, dirs, ori, directed, anchors)`` arrays for the RANSAC kernels."""
        n = len(self.lines)
        L = np.array([ln.line for ln in self.lines], dtype=float).reshape(n, 3)
        dirs = np.stack([-L[:, 1], L[:, 0]], axis=1)
        directed = np.array([ln.directed for ln in self.lines], dtype=bool)
        ori = np.array([ln.direction if ln.directed else (0.0, 0.0) for ln in self.lines],
                       dtype=float).reshape(n, 2)
        anchors = np.array([ln.anchor for ln in self.lines], dtype=float).reshape(n, 2)
        return L, dirs, ori, directed, anchors


def fit_oriented_line(subset, features):
    """Least-squares line through a subset, pointing from large toward small scale.

    If both end features have the same size, the sign of the regression slope
    of size against position along the line decides; a zero slope leaves the
    line undirected.
    """
    ids = list(subset.feature_ids)
    if len(ids) < 3:
        raise ValueError("an implicit line needs at least 3 features")
    by_id = {f.id: f for f in features}
    xy, size, _, _, _ = feature_arrays([by_id[i] for i in ids])
    centroid, d = principal_frame(xy)
    t = (xy - centroid) @ d
    first, last = int(np.argmin(t)), int(np.argmax(t))
    if size[first] > size[last]:
        direction = d
    elif size[first] < size[last]:
        direction = -d
    else:
        tc = t - t.mean()
        slope = (tc @ (size - size.mean())) / (tc @ tc)
        if abs(slope) <= 1e-9 * max(size.max(), 1e-12) / max(np.ptp(t), 1e-12):
            direction = None
        else:
            direction = d if slope < 0 else -d
    return OrientedLine(line=line_from_point_direction(centroid, d), anchor=centroid,
                        direction=direction, source="implicit", members=tuple(ids))


def segment_to_line(seg):
    line = line_through(seg.p0, seg.p1)
    return OrientedLine(line=line, anchor=seg.midpoint, direction=None, source="explicit")


def detect_segments(image, config=None):
    """Straight segments from a Canny edge map via the probabilistic Hough transform.

    Deterministic: the Hough sampler is seeded with a constant.
    """
    from skimage.feature import canny
    from skimage.transform import probabilistic_hough_line

    cfg = config or SegmentConfig()
    img = to_gray(image)
    if np.ptp(img) == 0:
        return []
    edges = canny(img, sigma=cfg.canny_sigma)
    if not edges.any():
        return []
    theta = np.linspace(-np.pi / 2, np.pi / 2, cfg.n_angles, endpoint=False)
    raw = probabilistic_hough_line(edges, threshold=cfg.hough_threshold,
                                   line_length=int(np.ceil(cfg.min_length)),
                                   line_gap=cfg.line_gap, theta=theta, rng=0)
    segs = []
    for (x0, y0), (x1, y1) in raw:
        seg = LineSegment((float(x0), float(y0)), (float(x1), float(y1)))
        if seg.length > cfg.min_length:
            segs.append(seg)
    segs.sort(key=lambda s: (s.p0, s.p1))
    return segs


def save_segments(segments, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x0", "y0", "x1", "y1"])
        for s in segments:
            writer.writerow([format(v, ".10g") for v in (*s.p0, *s.p1)])


def load_segments(path):
    """Read ``x0,y0,x1,y1`` rows; a header row is optional."""
    segs = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and [c.strip() for c in row] == ["x0", "y0", "x1", "y1"]:
                continue
            if len(row) != 4:
                raise FormatError(f"expected 4 columns, got {len(row)}", path, lineno)
            try:
                x0, y0, x1, y1 = (float(v) for v in row)
            except ValueError as exc:
                raise FormatError(f"bad number: {exc}", path, lineno) from None
            if not np.all(np.isfinite([x0, y0, x1, y1])):
                raise FormatError("non-finite coordinate", path, lineno)
            if x0 == x1 and y0 == y1:
                raise FormatError("zero-length segment", path, lineno)
            segs.append(LineSegment((x0, y0), (x1, y1)))
    return segs


def build_pool(implicit, segments):
    implicit = list(implicit)
    explicit = [segment_to_line(s) for s in segments]
    if len(implicit) + len(explicit) < 2:
        raise InsufficientLinesError("insufficient lines for VP")
    return LinePool(lines=implicit + explicit, n_implicit=len(implicit), n_explicit=len(explicit))
