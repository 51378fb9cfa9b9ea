"""2D line algebra in homogeneous coordinates and the angular VP error.

Conventions
-----------
* Points are ``(x, y)`` pixel arrays; image y points down.
* A line is a length-3 array ``(a, b, c)`` with ``a*x + b*y + c = 0`` and
  ``a**2 + b**2 == 1``, so ``|a*x + b*y + c|`` is the Euclidean distance.
* A vanishing point is a homogeneous 3-vector. Finite points are scaled to
  ``w == 1``; points at infinity have ``w == 0`` and unit ``(x, y)``.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateError

IDEAL_EPS = 1e-12


def normalize_line(line):
    line = np.asarray(line, dtype=float)
    norm = np.hypot(line[0], line[1])
    if norm == 0.0:
        raise DegenerateError("line has a = b = 0")
    return line / norm


def line_direction(line):
    """Unit direction vector of a homogeneous line (sign is arbitrary but fixed)."""
    line = normalize_line(line)
    return np.array([-line[1], line[0]])


def line_through(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.allclose(p, q, rtol=0.0, atol=0.0):
        raise DegenerateError("line through identical points")
    return normalize_line(np.cross([p[0], p[1], 1.0], [q[0], q[1], 1.0]))


def line_from_point_direction(point, direction):
    d = np.asarray(direction, dtype=float)
    d = d / np.hypot(d[0], d[1])
    normal = np.array([d[1], -d[0]])
    return np.array([normal[0], normal[1], -normal @ np.asarray(point, dtype=float)])


def _canonical_direction(d):
    # deterministic sign so that equal inputs give byte-equal lines
    if d[0] < 0 or (d[0] == 0 and d[1] < 0):
        return -d
    return d


def principal_frame(points, weights=None):
    """Weighted centroid and unit principal direction of a 2D point set.

    Raises :class:`DegenerateError` when the points do not span a direction.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise DegenerateError("degenerate point set: need at least 2 points")
    if weights is None:
        w = np.ones(len(pts))
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(pts),) or np.any(w < 0):
            raise ValueError("weights must be nonnegative, one per point")
    total = w.sum()
    if total <= 0:
        raise DegenerateError("degenerate point set: zero total weight")
    centroid = (w[:, None] * pts).sum(axis=0) / total
    centered = pts - centroid
    cov = (w[:, None, None] * centered[:, :, None] * centered[:, None, :]).sum(axis=0) / total
    scale = max(1.0, float(np.abs(pts).max()))
    if np.trace(cov) <= (1e-14 * scale) ** 2:
        raise DegenerateError("degenerate point set")
    evals, evecs = np.linalg.eigh(cov)
    return centroid, _canonical_direction(evecs[:, 1])


def fit_line_lsq(points, weights=None):
    """Total least-squares line through ``points`` (optionally weighted).

    The line passes through the weighted centroid along the principal axis of
    the weighted scatter matrix, which minimizes the weighted sum of squared
    perpendicular distances.
    """
    centroid, direction = principal_frame(points, weights)
    return line_from_point_direction(centroid, direction)


def intersect(l1, l2):
    """Intersection of two lines as a homogeneous point.

    Parallel lines give an ideal point ``(dx, dy, 0)``; identical lines raise.
    """
    l1 = normalize_line(l1)
    l2 = normalize_line(l2)
    p = np.cross(l1, l2)
    norm = np.linalg.norm(p)
    if norm <= IDEAL_EPS * max(1.0, abs(l1[2]), abs(l2[2])):
        raise DegenerateError("coincident lines")
    return normalize_vp(p)


def normalize_vp(p):
    p = np.asarray(p, dtype=float)
    h = np.hypot(p[0], p[1])
    if h == 0.0 and p[2] == 0.0:
        raise DegenerateError("zero homogeneous vector")
    if abs(p[2]) <= IDEAL_EPS * h:
        return np.array([p[0] / h, p[1] / h, 0.0])
    return p / p[2]


def is_ideal(vp):
    return np.asarray(vp, dtype=float)[2] == 0.0


def _direction_of(obj):
    if isinstance(obj, OrientedLine):
        return line_direction(obj.line)
    arr = np.asarray(obj, dtype=float)
    if arr.shape == (3,):
        return line_direction(arr)
    if arr.shape == (2,):
        return arr / np.hypot(arr[0], arr[1])
    raise ValueError("expected an OrientedLine, a homogeneous line or a 2D direction")


def acute_angle(l1, l2):
    """Acute angle in ``[0, pi/2]`` between two lines or directions."""
    d1 = _direction_of(l1)
    d2 = _direction_of(l2)
    cross = d1[0] * d2[1] - d1[1] * d2[0]
    dot = d1 @ d2
    return float(np.arctan2(abs(cross), abs(dot)))


def point_line_distance(p, line):
    p = np.asarray(p, dtype=float)
    if p.shape == (3,):
        if p[2] == 0.0:
            raise DegenerateError("distance undefined for ideal point")
        p = p[:2] / p[2]
    line = normalize_line(line)
    return float(abs(line[0] * p[0] + line[1] * p[1] + line[2]))


def vp_ray(vp, image_w, image_h, focal=None):
    """Unit 3D ray for a VP: ``(x - x0, y - y0, f)``, or ``(dx, dy, 0)`` if ideal."""
    if image_w <= 0 or image_h <= 0:
        raise ValueError("image dimensions must be positive")
    f = (image_w + image_h) / 4.0 if focal is None else float(focal)
    vp = np.asarray(vp, dtype=float)
    if vp.shape == (2,):
        vp = np.array([vp[0], vp[1], 1.0])
    if vp[2] == 0.0:
        ray = np.array([vp[0], vp[1], 0.0])
    else:
        x, y = vp[0] / vp[2], vp[1] / vp[2]
        ray = np.array([x - image_w / 2.0, y - image_h / 2.0, f])
    return ray / np.linalg.norm(ray)


def angular_error(detected, truth, image_w, image_h, focal=None):
    """Angle in degrees between the detected and true VP rays.

    ``focal`` defaults to ``(image_w + image_h) / 4`` and the principal point
    is the image center. Rays of ideal points have no preferred sign, so an
    ideal point on either side is folded onto the closer hemisphere.
    """
    r1 = vp_ray(detected, image_w, image_h, focal)
    r2 = vp_ray(truth, image_w, image_h, focal)
    angle = np.degrees(np.arctan2(np.linalg.norm(np.cross(r1, r2)), r1 @ r2))
    if r1[2] == 0.0 or r2[2] == 0.0:
        angle = min(angle, 180.0 - angle)
    return float(angle)


@dataclass
class OrientedLine:
    """An image line used as a vote in RANSAC.

    ``direction`` (when set) points toward the vanishing point.
    """

    line: np.ndarray
    anchor: np.ndarray
    direction: Optional[np.ndarray] = None
    source: str = "implicit"
    weight: float = 0.0
    members: tuple = field(default=())

    def __post_init__(self):
        self.line = normalize_line(self.line)
        self.anchor = np.asarray(self.anchor, dtype=float)
        if self.direction is not None:
            d = np.asarray(self.direction, dtype=float)
            d = d / np.hypot(d[0], d[1])
            if abs(self.line[0] * d[0] + self.line[1] * d[1]) > 1e-6:
                raise ValueError("direction is not parallel to the line")
            self.direction = d
        if self.source not in ("implicit", "explicit"):
            raise ValueError(f"unknown line source {self.source!r}")
        if self.weight < 0:
            raise ValueError("weight must be nonnegative")

    @property
    def directed(self):
        return self.direction is not None
