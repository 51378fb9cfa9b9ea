"""Scale-space keypoints with 128-dimensional gradient descriptors.

A difference-of-Gaussian pyramid localizes blob-like keypoints; each keypoint
gets a dominant gradient orientation and a 4x4x8 orientation-histogram
descriptor sampled on a 16x16 grid in the rotated, scale-normalized frame.

``Keypoint.size`` is the detection scale (Gaussian sigma) in input pixels.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import kernels
from .errors import FormatError

DESCRIPTOR_DIM = 128
N_ORI_BINS = 36
ORI_PEAK_RATIO = 0.8
DESC_CLIP = 0.2


@dataclass
class FeatureConfig:
    n_octaves: int = 4
    scales_per_octave: int = 3
    sigma: float = 1.6
    contrast_threshold: float = 0.03
    edge_threshold: float = 10.0
    assumed_blur: float = 0.5
    max_orientations: int = 2

    def validate(self):
        if self.n_octaves < 1 or self.scales_per_octave < 1:
            raise ValueError("n_octaves and scales_per_octave must be >= 1")
        if self.sigma <= self.assumed_blur or self.assumed_blur < 0:
            raise ValueError("need sigma > assumed_blur >= 0")
        if self.max_orientations < 1:
            raise ValueError("max_orientations must be >= 1")
        if self.contrast_threshold < 0 or self.edge_threshold <= 1:
            raise ValueError("invalid contrast/edge threshold")


@dataclass
class Keypoint:
    x: float
    y: float
    size: float
    angle: float
    response: float
    octave: int


@dataclass
class Feature:
    keypoint: Keypoint
    descriptor: np.ndarray = field(repr=False)
    id: int = 0


def to_gray(image):
    """Float grayscale in [0, 1]; color input is converted to luma."""
    img = np.asarray(image)
    if img.ndim == 3:
        if img.shape[2] not in (3, 4):
            raise ValueError("color images must have 3 or 4 channels")
        img = img[..., :3]
        scale = _dtype_scale(img.dtype)
        rgb = img.astype(float) / scale
        return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114
    if img.ndim != 2:
        raise ValueError("image must be 2D grayscale or HxWx3 color")
    return img.astype(float) / _dtype_scale(img.dtype)


def _dtype_scale(dtype):
    if np.issubdtype(dtype, np.integer):
        return float(np.iinfo(dtype).max)
    return 1.0


def descriptor_distance(d1, d2):
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    if d1.shape != (DESCRIPTOR_DIM,) or d2.shape != (DESCRIPTOR_DIM,):
        raise ValueError("descriptors must be 128-dimensional")
    diff = d1 - d2
    return float(np.sqrt(diff @ diff))


# ---------------------------------------------------------------------------
# scale space
# ---------------------------------------------------------------------------

def _build_pyramid(img, cfg):
    s = cfg.scales_per_octave
    k = 2.0 ** (1.0 / s)
    sigmas = [cfg.sigma * k**i for i in range(s + 3)]
    increments = [math.sqrt(sigmas[i] ** 2 - sigmas[i - 1] ** 2) for i in range(1, s + 3)]

    n_oct = cfg.n_octaves
    while n_oct > 1 and min(img.shape) / 2 ** (n_oct - 1) < 16:
        n_oct -= 1

    base = ndimage.gaussian_filter(
        img, math.sqrt(cfg.sigma**2 - cfg.assumed_blur**2), mode="nearest")
    gaussians = []
    for o in range(n_oct):
        layers = [base]
        for inc in increments:
            layers.append(ndimage.gaussian_filter(layers[-1], inc, mode="nearest"))
        gaussians.append(np.stack(layers))
        base = layers[s][::2, ::2]
    dogs = [g[1:] - g[:-1] for g in gaussians]
    return gaussians, dogs


def _find_extrema(dog, threshold):
    mx = ndimage.maximum_filter(dog, size=3, mode="nearest")
    mn = ndimage.minimum_filter(dog, size=3, mode="nearest")
    inner = np.zeros(dog.shape, dtype=bool)
    inner[1:-1, 1:-1, 1:-1] = True
    hit = inner & (np.abs(dog) > threshold) & ((dog == mx) | (dog == mn))
    return np.argwhere(hit)


def _derivatives(dog, pos):
    l, r, c = pos[:, 0], pos[:, 1], pos[:, 2]

    def at(dl, dr, dc):
        return dog[l + dl, r + dr, c + dc]

    v = at(0, 0, 0)
    g = 0.5 * np.stack([at(0, 0, 1) - at(0, 0, -1),
                        at(0, 1, 0) - at(0, -1, 0),
                        at(1, 0, 0) - at(-1, 0, 0)], axis=1)
    dxx = at(0, 0, 1) + at(0, 0, -1) - 2 * v
    dyy = at(0, 1, 0) + at(0, -1, 0) - 2 * v
    dss = at(1, 0, 0) + at(-1, 0, 0) - 2 * v
    dxy = 0.25 * (at(0, 1, 1) - at(0, 1, -1) - at(0, -1, 1) + at(0, -1, -1))
    dxs = 0.25 * (at(1, 0, 1) - at(1, 0, -1) - at(-1, 0, 1) + at(-1, 0, -1))
    dys = 0.25 * (at(1, 1, 0) - at(1, -1, 0) - at(-1, 1, 0) + at(-1, -1, 0))
    H = np.empty((len(pos), 3, 3))
    H[:, 0, 0], H[:, 1, 1], H[:, 2, 2] = dxx, dyy, dss
    H[:, 0, 1] = H[:, 1, 0] = dxy
    H[:, 0, 2] = H[:, 2, 0] = dxs
    H[:, 1, 2] = H[:, 2, 1] = dys
    return v, g, H


def _refine(dog, cand, cfg, max_iter=5):
    """Quadratic sub-pixel/sub-scale refinement; returns kept rows.

    Output columns: layer, row, col (integers), offsets (x, y, s), contrast.
    """
    s = cfg.scales_per_octave
    n_layers, h, w = dog.shape
    pos = cand.copy()
    alive = np.ones(len(pos), dtype=bool)
    done = np.zeros(len(pos), dtype=bool)
    offset = np.zeros((len(pos), 3))
    for _ in range(max_iter):
        idx = np.flatnonzero(alive & ~done)
        if idx.size == 0:
            break
        _, g, H = _derivatives(dog, pos[idx])
        det = np.linalg.det(H)
        ok = np.abs(det) > 1e-12
        off = np.zeros((idx.size, 3))
        off[ok] = -np.linalg.solve(H[ok], g[ok][..., None])[..., 0]
        alive[idx[~ok]] = False
        off[~ok] = 0.0
        small = np.all(np.abs(off) < 0.5, axis=1)
        offset[idx] = off
        done[idx[small & ok]] = True
        move = idx[~small & ok]
        if move.size:
            step = np.round(offset[move]).astype(int)
            pos[move, 2] += step[:, 0]
            pos[move, 1] += step[:, 1]
            pos[move, 0] += step[:, 2]
            inside = ((pos[move, 0] >= 1) & (pos[move, 0] <= s)
                      & (pos[move, 1] >= 1) & (pos[move, 1] < h - 1)
                      & (pos[move, 2] >= 1) & (pos[move, 2] < w - 1))
            alive[move[~inside]] = False
    keep = np.flatnonzero(alive & done)
    if keep.size == 0:
        return np.zeros((0, 3), dtype=int), np.zeros((0, 3)), np.zeros(0)
    pos, offset = pos[keep], offset[keep]
    v, g, H = _derivatives(dog, pos)
    contrast = v + 0.5 * np.einsum("ij,ij->i", g, offset)
    tr = H[:, 0, 0] + H[:, 1, 1]
    det2 = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] ** 2
    r = cfg.edge_threshold
    good = ((np.abs(contrast) * s >= cfg.contrast_threshold)
            & (det2 > 0) & (tr**2 * r < (r + 1) ** 2 * det2))
    return pos[good], offset[good], contrast[good]


# ---------------------------------------------------------------------------
# orientation and descriptor
# ---------------------------------------------------------------------------

def _gradients(img):
    gy, gx = np.gradient(img)
    return gx, gy


def _orientations(gx, gy, x, y, sigma_oct, limit):
    """Dominant gradient orientations (radians) around one keypoint, strongest first."""
    h, w = gx.shape
    sw = 1.5 * sigma_oct
    rad = int(round(3 * sw))
    xi, yi = int(round(x)), int(round(y))
    r0, r1 = max(0, yi - rad), min(h, yi + rad + 1)
    c0, c1 = max(0, xi - rad), min(w, xi + rad + 1)
    if r0 >= r1 or c0 >= c1:
        return []
    yy, xx = np.mgrid[r0:r1, c0:c1]
    wgt = np.exp(-((xx - x) ** 2 + (yy - y) ** 2) / (2 * sw * sw))
    pgx, pgy = gx[r0:r1, c0:c1], gy[r0:r1, c0:c1]
    mag = np.hypot(pgx, pgy) * wgt
    ang = np.mod(np.arctan2(pgy, pgx), 2 * np.pi)
    bins = np.floor(ang / (2 * np.pi) * N_ORI_BINS).astype(int) % N_ORI_BINS
    hist = np.bincount(bins.ravel(), weights=mag.ravel(), minlength=N_ORI_BINS)
    hist = (np.roll(hist, 2) + np.roll(hist, -2) + 4 * (np.roll(hist, 1) + np.roll(hist, -1))
            + 6 * hist) / 16.0
    peak = hist.max()
    if peak <= 0:
        return []
    left, right = np.roll(hist, 1), np.roll(hist, -1)
    out = []
    peaks = np.flatnonzero((hist > left) & (hist > right) & (hist >= ORI_PEAK_RATIO * peak))
    peaks = sorted(peaks, key=lambda b: (-hist[b], b))[:limit]
    for b in peaks:
        denom = left[b] - 2 * hist[b] + right[b]
        shift = 0.5 * (left[b] - right[b]) / denom if denom != 0 else 0.0
        out.append(np.mod((b + 0.5 + shift) * 2 * np.pi / N_ORI_BINS, 2 * np.pi))
    return out


_GRID = (np.arange(16) + 0.5) / 4.0  # sample centers in cell units, 0..4


def _descriptors(gx, gy, kps):
    """Descriptors for keypoints ``(x, y, sigma_oct, angle)`` on one layer."""
    kps = np.asarray(kps, dtype=float).reshape(-1, 4)
    K = len(kps)
    if K == 0:
        return np.zeros((0, DESCRIPTOR_DIM))
    cu, cv = np.meshgrid(_GRID, _GRID)  # cu: column (u), cv: row (v)
    cu, cv = cu.ravel(), cv.ravel()
    x, y, sig, th = kps.T
    cell = 3.0 * sig  # cell width in octave pixels
    u = (cu[None, :] - 2.0) * cell[:, None]
    v = (cv[None, :] - 2.0) * cell[:, None]
    cos, sin = np.cos(th)[:, None], np.sin(th)[:, None]
    sx = x[:, None] + cos * u - sin * v
    sy = y[:, None] + sin * u + cos * v
    coords = np.stack([sy.ravel(), sx.ravel()])
    sgx = ndimage.map_coordinates(gx, coords, order=1, mode="nearest").reshape(K, -1)
    sgy = ndimage.map_coordinates(gy, coords, order=1, mode="nearest").reshape(K, -1)
    mag = np.hypot(sgx, sgy)
    rel = np.mod(np.arctan2(sgy, sgx) - th[:, None], 2 * np.pi)
    gauss = np.exp(-((cu - 2.0) ** 2 + (cv - 2.0) ** 2) / (2 * 2.0**2))
    rbin = np.broadcast_to(cv - 0.5, (K, cv.size))
    cbin = np.broadcast_to(cu - 0.5, (K, cu.size))
    obin = rel / (2 * np.pi) * 8.0
    obin = np.where(obin >= 8.0, 0.0, obin)
    hist = kernels.accumulate_hist(np.ascontiguousarray(rbin), np.ascontiguousarray(cbin),
                                   obin, mag * gauss[None, :])
    desc = hist.reshape(K, DESCRIPTOR_DIM)
    return _normalize_descriptors(desc)


def _normalize_descriptors(desc):
    norm = np.linalg.norm(desc, axis=1, keepdims=True)
    safe = np.where(norm > 0, norm, 1.0)
    desc = np.minimum(desc / safe, DESC_CLIP)
    norm = np.linalg.norm(desc, axis=1, keepdims=True)
    return np.where(norm > 0, desc / np.where(norm > 0, norm, 1.0), 0.0)


def extract_features(image, config=None):
    """Detect keypoints and compute descriptors.

    Parameters
    ----------
    image : array_like
        2D grayscale or HxWx3 color image, at least 32x32. Integer images are
        scaled by their dtype maximum; float images are taken to be in [0, 1].
    config : FeatureConfig, optional

    Returns
    -------
    list of Feature
        Sorted by octave, then decreasing response, then position. Ids are
        the list positions.
    """
    cfg = config or FeatureConfig()
    cfg.validate()
    img = to_gray(image)
    if img.shape[0] < 32 or img.shape[1] < 32:
        raise ValueError(f"image too small: {img.shape[1]}x{img.shape[0]}, need >= 32x32")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    if np.ptp(img) == 0:
        return []

    s = cfg.scales_per_octave
    gaussians, dogs = _build_pyramid(img, cfg)
    rows = []
    descs = []
    for o, (gauss, dog) in enumerate(zip(gaussians, dogs)):
        cand = _find_extrema(dog, 0.5 * cfg.contrast_threshold / s)
        if len(cand) == 0:
            continue
        pos, off, contrast = _refine(dog, cand, cfg)
        h, w = dog.shape[1:]
        by_layer = {}
        for (layer, r, c), (ox, oy, os_), resp in zip(pos, off, contrast):
            x_o, y_o = c + ox, r + oy
            sigma_oct = cfg.sigma * 2.0 ** ((layer + os_) / s)
            half = 6.0 * sigma_oct
            if x_o - half < 0 or y_o - half < 0 or x_o + half > w - 1 or y_o + half > h - 1:
                continue
            by_layer.setdefault(int(layer), []).append((x_o, y_o, sigma_oct, abs(resp)))
        for layer in sorted(by_layer):
            gx, gy = _gradients(gauss[layer])
            kps, meta = [], []
            for x_o, y_o, sigma_oct, resp in by_layer[layer]:
                for th in _orientations(gx, gy, x_o, y_o, sigma_oct, cfg.max_orientations):
                    kps.append((x_o, y_o, sigma_oct, th))
                    meta.append(resp)
            desc = _descriptors(gx, gy, kps)
            scale = 2.0**o
            for (x_o, y_o, sigma_oct, th), resp, d in zip(kps, meta, desc):
                if not np.any(d):
                    continue
                rows.append((o, -resp, y_o * scale, x_o * scale, th, sigma_oct * scale))
                descs.append(d)
    if not rows:
        return []
    order = sorted(range(len(rows)), key=lambda i: rows[i])
    feats = []
    for new_id, i in enumerate(order):
        o, neg_resp, y, x, th, size = rows[i]
        kp = Keypoint(x=float(x), y=float(y), size=float(size), angle=float(th),
                      response=float(-neg_resp), octave=int(o))
        feats.append(Feature(keypoint=kp, descriptor=descs[i], id=new_id))
    return feats


def feature_arrays(features):
    """Stack features into ``(xy, size, angle, descriptors, ids)`` arrays."""
    n = len(features)
    xy = np.array([[f.keypoint.x, f.keypoint.y] for f in features], dtype=float).reshape(n, 2)
    size = np.array([f.keypoint.size for f in features], dtype=float)
    angle = np.array([f.keypoint.angle for f in features], dtype=float)
    desc = np.array([f.descriptor for f in features], dtype=float).reshape(n, DESCRIPTOR_DIM)
    ids = np.array([f.id for f in features], dtype=np.int64)
    return xy, size, angle, desc, ids


# ---------------------------------------------------------------------------
# keypoint CSV
# ---------------------------------------------------------------------------

HEADER = ["x", "y", "size", "angle", "response", "octave"] + [
    f"d{i}" for i in range(DESCRIPTOR_DIM)]


def _fmt(v):
    return format(float(v), ".10g")


def save_features(features, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HEADER)
        for f in features:
            kp = f.keypoint
            writer.writerow([_fmt(kp.x), _fmt(kp.y), _fmt(kp.size), _fmt(kp.angle),
                             _fmt(kp.response), str(int(kp.octave))]
                            + [_fmt(v) for v in f.descriptor])


def load_features(path):
    """Read a keypoint CSV; ids follow row order."""
    feats = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError("missing header", path, 1)
        if [h.strip() for h in header] != HEADER:
            raise FormatError("unexpected header", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(HEADER):
                raise FormatError(
                    f"expected {len(HEADER)} columns (128-dim descriptor), got {len(row)}",
                    path, lineno)
            try:
                x, y, size, angle, resp = (float(v) for v in row[:5])
                octave = int(row[5])
                desc = np.array([float(v) for v in row[6:]])
            except ValueError as exc:
                raise FormatError(f"bad number: {exc}", path, lineno) from None
            if not np.all(np.isfinite([x, y, size, angle, resp])) or not np.all(np.isfinite(desc)):
                raise FormatError("non-finite value", path, lineno)
            if size <= 0:
                raise FormatError("keypoint size must be positive", path, lineno)
            if np.any(desc < 0):
                raise FormatError("descriptor values must be nonnegative", path, lineno)
            kp = Keypoint(x=x, y=y, size=size, angle=angle, response=resp, octave=octave)
            feats.append(Feature(keypoint=kp, descriptor=desc, id=len(feats)))
    return feats
