"""Synthetic recurring-pattern scenes with analytically known vanishing points.

A pattern of ``K`` 3D points is repeated ``M`` times along the line
``L(t) = O + t * D``. Every pattern point therefore traces a 3D line parallel
to ``D`` whose projection passes through the vanishing point of ``D``.

Camera convention: ``R`` maps camera axes to world axes and ``t`` is the
camera center, so a world point ``p`` has camera coordinates
``R.T @ (p - t)``. The camera looks along +z, image x points right, image y
points down, and the principal point is ``(width / 2, height / 2)``.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError
from .features import DESCRIPTOR_DIM, Feature, Keypoint, load_features, save_features
from .geometry import intersect, line_through, normalize_vp


@dataclass
class CameraParams:
    f: float
    width: int
    height: int
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=float).reshape(3)
        if self.f <= 0 or self.width <= 0 or self.height <= 0:
            raise ValueError("focal length and image size must be positive")
        if not np.allclose(self.R.T @ self.R, np.eye(3), atol=1e-9) or np.linalg.det(self.R) < 0:
            raise ValueError("R must be a proper rotation")

    @property
    def principal_point(self):
        return self.width / 2.0, self.height / 2.0

    def to_camera(self, p):
        return self.R.T @ (np.asarray(p, dtype=float) - self.t)

    def to_json(self):
        return {"f": float(self.f), "width": int(self.width), "height": int(self.height),
                "R": [float(v) for v in self.R.ravel()], "t": [float(v) for v in self.t]}

    @classmethod
    def from_json(cls, data):
        return cls(f=float(data["f"]), width=int(data["width"]), height=int(data["height"]),
                   R=np.array(data["R"], dtype=float).reshape(3, 3),
                   t=np.array(data["t"], dtype=float))


@dataclass
class SceneSpec:
    origin: np.ndarray
    direction: np.ndarray
    spacing: float
    count: int
    pattern_offsets: np.ndarray
    pattern_scale: float

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        d = np.asarray(self.direction, dtype=float)
        self.direction = d / np.linalg.norm(d)
        self.pattern_offsets = np.asarray(self.pattern_offsets, dtype=float).reshape(-1, 3)
        if self.count < 3 or self.spacing <= 0 or self.pattern_scale <= 0:
            raise ValueError("need count >= 3, spacing > 0 and pattern_scale > 0")

    def points(self):
        """World points with shape ``(count, K, 3)``."""
        t = np.arange(self.count) * self.spacing
        return (self.origin[None, None, :] + self.pattern_offsets[None, :, :]
                + t[:, None, None] * self.direction[None, None, :])


@dataclass
class NoiseSpec:
    pos_sigma: float = 0.0
    size_jitter: float = 0.0
    descriptor_sigma: float = 0.0


@dataclass
class SceneConfig:
    width: int = 640
    height: int = 480
    focal: float = 560.0
    n_pattern_points: int = 6
    n_instances: int = 8
    vp_radius_factor: float = 3.0
    depth_range: tuple = (4.0, 8.0)
    max_depth_ratio: float = 3.0
    pattern_radius_px: float = 45.0
    feature_size_px: float = 10.0
    max_tilt_deg: float = 20.0
    margin_px: float = 24.0
    min_track_px: float = 120.0
    n_clutter: int = 0


@dataclass
class SyntheticInstance:
    features: list
    gt_vp: np.ndarray
    camera: CameraParams
    scene: SceneSpec
    image_id: str = ""

    @property
    def image_size(self):
        return self.camera.width, self.camera.height


def project(pt3, cam):
    """Pixel coordinates of a world point; raises if it is not in front of the camera."""
    x, y, z = cam.to_camera(pt3)
    if z <= 0:
        raise DegenerateError("point behind camera")
    x0, y0 = cam.principal_point
    return np.array([cam.f * x / z + x0, cam.f * y / z + y0])


def theoretical_vp(direction, cam):
    """Vanishing point of world direction ``direction``: ``(f Dx/Dz + x0, f Dy/Dz + y0)``.

    Returned homogeneously; a direction parallel to the image plane gives an
    ideal point.
    """
    dx, dy, dz = cam.R.T @ np.asarray(direction, dtype=float)
    x0, y0 = cam.principal_point
    return normalize_vp(np.array([cam.f * dx + x0 * dz, cam.f * dy + y0 * dz, dz]))


def empirical_vp(scene, cam):
    """Intersection of the projections of two parallel scene lines.

    Uses the first and last instance of two pattern points whose projected
    lines are distinct.
    """
    pts = scene.points()
    K = pts.shape[1]
    lines = []
    for k in range(K):
        p1 = project(pts[0, k], cam)
        p2 = project(pts[-1, k], cam)
        lines.append(line_through(p1, p2))
    for a in range(K):
        for b in range(a + 1, K):
            try:
                return intersect(lines[a], lines[b])
            except DegenerateError:
                continue
    raise DegenerateError("projected scene lines are coincident")


def vp_discrepancy(a, b):
    """Relative difference of two VPs (sign-free for ideal points)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a[2] == 0.0 or b[2] == 0.0:
        ua, ub = a / np.linalg.norm(a), b / np.linalg.norm(b)
        return float(min(np.linalg.norm(ua - ub), np.linalg.norm(ua + ub)))
    return float(np.linalg.norm(a[:2] - b[:2]) / max(1.0, np.linalg.norm(b[:2])))


def _rotation(rng, max_deg):
    ax, ay, az = np.radians(rng.uniform(-max_deg, max_deg, 3))
    cx, sx, cy, sy, cz, sz = np.cos(ax), np.sin(ax), np.cos(ay), np.sin(ay), np.cos(az), np.sin(az)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def _exit_fraction(c0, v, lo, hi):
    """Largest ``lam`` in [0, 1] with ``c0 + lam (v - c0)`` inside the box."""
    d = v - c0
    lam = 1.0
    for k in range(2):
        if d[k] > 0:
            lam = min(lam, (hi[k] - c0[k]) / d[k])
        elif d[k] < 0:
            lam = min(lam, (lo[k] - c0[k]) / d[k])
    return max(lam, 0.0)


def random_scene(rng, config=None):
    """Sample a camera and a scene whose VP lies within ``vp_radius_factor`` image diagonals.

    The VP distance from the image center is ``radius * u**2`` with ``u``
    uniform, which favors VPs in or near the frame. The first pattern
    instance is placed in the frame and the row recedes toward the VP for as
    long as it stays in frame (at most ``max_depth_ratio`` times deeper).
    """
    cfg = config or SceneConfig()
    W, H, f = cfg.width, cfg.height, cfg.focal
    diag = float(np.hypot(W, H))
    pp = np.array([W / 2.0, H / 2.0])
    lo = np.array([cfg.margin_px, cfg.margin_px])
    hi = np.array([W - cfg.margin_px, H - cfg.margin_px])
    R = _rotation(rng, cfg.max_tilt_deg)
    t = rng.uniform(-1.0, 1.0, 3)
    cam = CameraParams(f=f, width=W, height=H, R=R, t=t)

    for _ in range(1000):
        r = cfg.vp_radius_factor * diag * rng.uniform() ** 2
        phi = rng.uniform(0, 2 * np.pi)
        v = pp + r * np.array([np.cos(phi), np.sin(phi)])
        c0 = rng.uniform(lo + cfg.pattern_radius_px, hi - cfg.pattern_radius_px)
        lam = _exit_fraction(c0, v, lo + cfg.pattern_radius_px, hi - cfg.pattern_radius_px)
        lam = min(lam, 1.0 - 1.0 / cfg.max_depth_ratio)
        if lam * np.linalg.norm(v - c0) >= cfg.min_track_px:
            break
    else:  # pragma: no cover - the sampler succeeds quickly for sane configs
        raise RuntimeError("could not place a scene; check SceneConfig")

    d_cam = np.array([v[0] - pp[0], v[1] - pp[1], f])
    d_cam /= np.linalg.norm(d_cam)
    z0 = rng.uniform(*cfg.depth_range)
    center_cam = z0 * np.array([(c0[0] - pp[0]) / f, (c0[1] - pp[1]) / f, 1.0])
    ratio = 1.0 / (1.0 - lam)
    spacing = z0 * (ratio - 1.0) / ((cfg.n_instances - 1) * d_cam[2])

    # pattern points on a jittered ring in the plane orthogonal to D
    e1 = np.cross(d_cam, [0.0, 1.0, 0.0])
    if np.linalg.norm(e1) < 1e-6:
        e1 = np.cross(d_cam, [1.0, 0.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d_cam, e1)
    radius = z0 * cfg.pattern_radius_px / f
    K = cfg.n_pattern_points
    ang = 2 * np.pi * (np.arange(K) + rng.uniform(-0.25, 0.25, K)) / K
    rad = radius * rng.uniform(0.5, 1.0, K)
    offsets_cam = rad[:, None] * (np.cos(ang)[:, None] * e1 + np.sin(ang)[:, None] * e2)

    scene = SceneSpec(origin=R @ center_cam + t, direction=R @ d_cam, spacing=spacing,
                      count=cfg.n_instances, pattern_offsets=offsets_cam @ R.T,
                      pattern_scale=z0 * cfg.feature_size_px / f)
    return scene, cam


def _random_descriptor(rng):
    d = np.abs(rng.standard_normal(DESCRIPTOR_DIM))
    return d / np.linalg.norm(d)


def generate_instance(scene, cam, noise=None, seed=0, n_clutter=0, image_id=""):
    """Project the scene into keypoint features.

    Feature size is ``f * pattern_scale / z``. All instances of one pattern
    point share a random base descriptor and orientation. Noise is Gaussian:
    ``pos_sigma`` pixels on positions, ``size_jitter`` relative on sizes,
    ``descriptor_sigma`` on descriptor entries (then clipped and renormalized).
    ``n_clutter`` unrelated random features are appended.
    """
    noise = noise or NoiseSpec()
    rng = np.random.default_rng(seed)
    pts = scene.points()
    M, K = pts.shape[:2]
    base_desc = [_random_descriptor(rng) for _ in range(K)]
    base_angle = rng.uniform(0, 2 * np.pi, K)
    feats = []
    for m in range(M):
        for k in range(K):
            xy = project(pts[m, k], cam)
            z = cam.to_camera(pts[m, k])[2]
            size = cam.f * scene.pattern_scale / z
            if noise.pos_sigma > 0:
                xy = xy + rng.normal(0.0, noise.pos_sigma, 2)
            if noise.size_jitter > 0:
                size = size * max(1.0 + noise.size_jitter * rng.standard_normal(), 0.1)
            desc = base_desc[k]
            if noise.descriptor_sigma > 0:
                desc = np.clip(desc + rng.normal(0.0, noise.descriptor_sigma, DESCRIPTOR_DIM), 0, None)
                nrm = np.linalg.norm(desc)
                desc = desc / nrm if nrm > 0 else base_desc[k]
            feats.append(_make_feature(xy, size, base_angle[k], desc, len(feats)))
    for _ in range(n_clutter):
        xy = rng.uniform([0, 0], [cam.width, cam.height])
        size = rng.uniform(2.0, 12.0)
        feats.append(_make_feature(xy, size, rng.uniform(0, 2 * np.pi),
                                   _random_descriptor(rng), len(feats)))
    return SyntheticInstance(features=feats, gt_vp=theoretical_vp(scene.direction, cam),
                             camera=cam, scene=scene, image_id=image_id)


def _make_feature(xy, size, angle, desc, fid):
    octave = int(max(0, np.floor(np.log2(max(size, 1e-9) / 1.6))))
    kp = Keypoint(x=float(xy[0]), y=float(xy[1]), size=float(size), angle=float(angle),
                  response=1.0, octave=octave)
    return Feature(keypoint=kp, descriptor=np.asarray(desc, dtype=float), id=fid)


def make_dataset(n_scenes, seed=0, noise=None, config=None):
    """``n_scenes`` independent instances; scene ``i`` depends only on ``(seed, i)``."""
    cfg = config or SceneConfig()
    out = []
    for i in range(n_scenes):
        rng = np.random.default_rng([seed, i])
        scene, cam = random_scene(rng, cfg)
        inst_seed = int(rng.integers(2**63 - 1))
        out.append(generate_instance(scene, cam, noise, seed=inst_seed,
                                     n_clutter=cfg.n_clutter, image_id=f"scene_{i:04d}"))
    return out


def render_dots(instance, path=None):
    """White image with dark anti-aliased disks of radius ``size / 2`` at each feature.

    Returns the ``uint8`` image and writes a PNG when ``path`` is given.
    """
    W, H = instance.image_size
    canvas = np.ones((H, W))
    for f in instance.features:
        kp = f.keypoint
        r = kp.size / 2.0
        x0, x1 = int(np.floor(kp.x - r - 1)), int(np.ceil(kp.x + r + 1)) + 1
        y0, y1 = int(np.floor(kp.y - r - 1)), int(np.ceil(kp.y + r + 1)) + 1
        x0, y0 = max(x0, 0), max(y0, 0)
        x1, y1 = min(x1, W), min(y1, H)
        if x0 >= x1 or y0 >= y1:
            continue
        yy, xx = np.mgrid[y0:y1, x0:x1]
        dist = np.hypot(xx - kp.x, yy - kp.y)
        cover = np.clip(r + 0.5 - dist, 0.0, 1.0)
        canvas[y0:y1, x0:x1] = np.minimum(canvas[y0:y1, x0:x1], 1.0 - cover)
    img = np.round(canvas * 255).astype(np.uint8)
    if path is not None:
        from PIL import Image

        Image.fromarray(img, mode="L").save(path, format="PNG")
    return img


# ---------------------------------------------------------------------------
# instance directories: features.csv, gt.txt, camera.json, optional image.png
# ---------------------------------------------------------------------------

def write_gt(vp_xy, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{vp_xy[0]:.10g} {vp_xy[1]:.10g}\n")


def read_gt(path):
    from .errors import FormatError

    with open(path, encoding="utf-8") as fh:
        tokens = fh.read().split()
    if len(tokens) != 2:
        raise FormatError("ground truth must hold exactly two numbers 'x y'", path, 1)
    try:
        return float(tokens[0]), float(tokens[1])
    except ValueError:
        raise FormatError("ground truth values are not numbers", path, 1) from None


def write_instance(instance, directory, render=False):
    os.makedirs(directory, exist_ok=True)
    save_features(instance.features, os.path.join(directory, "features.csv"))
    gt = instance.gt_vp
    if gt[2] == 0.0:
        raise DegenerateError("cannot write an ideal ground-truth VP as 'x y'")
    write_gt(gt[:2] / gt[2], os.path.join(directory, "gt.txt"))
    with open(os.path.join(directory, "camera.json"), "w", encoding="utf-8") as fh:
        json.dump(instance.camera.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if render:
        render_dots(instance, os.path.join(directory, "image.png"))


def read_camera(directory):
    with open(os.path.join(directory, "camera.json"), encoding="utf-8") as fh:
        return CameraParams.from_json(json.load(fh))


def read_instance_features(directory):
    return load_features(os.path.join(directory, "features.csv"))


# Larger, well separated dots for rendering: the extractor does not upsample,
# so disks below ~3 px radius are invisible to it.
RENDER_CONFIG = SceneConfig(feature_size_px=14.0, max_depth_ratio=2.0,
                            pattern_radius_px=60.0, n_pattern_points=5)
