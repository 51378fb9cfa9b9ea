"""Weighted RANSAC for a single vanishing point over a pool of image lines.

Each restart reinitializes the line weights from pairwise angles, then
repeats: draw two lines in proportion to their weights, intersect them, pick
an inlier threshold from the spread of residuals, count weighted votes, and
scale inlier weights by ``alpha`` and outlier weights by ``beta``. The best
hypothesis over all restarts is refined by the smallest eigenvector of the
weighted line scatter matrix.

Votes are sums of the *initial* weights of the inliers, so hypotheses from
different iterations and restarts are compared on the same scale; the
evolving weights only steer sampling.
"""

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import kernels
from .errors import (DegenerateError, InsufficientLinesError, NoVanishingPointError,
                     WeightCollapseError)
from .geometry import OrientedLine, normalize_vp
from .linefit import LinePool


@dataclass
class RansacConfig:
    alpha: float = 1.2
    beta: float = 0.8
    iters_per_run: int = 500
    restarts: int = 5
    inlier_threshold: Union[float, str] = "adaptive"
    mad_k: float = 2.5
    min_threshold: float = 1.0
    max_threshold_frac: float = 0.02
    min_pair_angle_deg: float = 0.5
    resample_attempts: int = 20
    dir_consistency: float = 0.7
    refine_iters: int = 3
    polish_k: float = 3.0
    polish_floor_deg: float = 0.5
    polish_min_dist_frac: float = 0.025
    seed: int = 0

    def validate(self):
        if not (self.alpha > 1.0 > self.beta > 0.0):
            raise ValueError("need alpha > 1 > beta > 0")
        if self.iters_per_run < 1 or self.restarts < 1:
            raise ValueError("iters_per_run and restarts must be >= 1")
        if self.inlier_threshold != "adaptive":
            if float(self.inlier_threshold) <= 0:
                raise ValueError("inlier_threshold must be positive or 'adaptive'")
        if self.resample_attempts < 1:
            raise ValueError("resample_attempts must be >= 1")
        if not 0.0 <= self.dir_consistency <= 1.0:
            raise ValueError("dir_consistency must be in [0, 1]")
        if self.refine_iters < 0 or self.polish_k <= 0 or self.polish_floor_deg < 0:
            raise ValueError("invalid refinement settings")
        if self.polish_min_dist_frac <= 0:
            raise ValueError("polish_min_dist_frac must be positive")


@dataclass
class RestartLog:
    run: int
    vp: np.ndarray = field(repr=False)
    votes: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    thresholds: np.ndarray = field(repr=False)
    best_iter: int = -1

    @property
    def n_valid(self):
        return int((self.votes >= 0).sum())


@dataclass
class VPResult:
    vp: np.ndarray
    inlier_ids: tuple
    score: float
    run_index: int
    threshold: float
    residual: float
    diagnostics: list = field(default_factory=list, repr=False)

    @property
    def is_ideal(self):
        return self.vp[2] == 0.0

    @property
    def xy(self):
        if self.is_ideal:
            return None
        return float(self.vp[0]), float(self.vp[1])


def _as_arrays(pool):
    if isinstance(pool, LinePool):
        return pool.arrays()
    lines = list(pool)
    return LinePool(lines, len(lines), 0).arrays()


def _extent(anchors, image_size):
    if image_size is not None:
        w, h = image_size
    else:
        span = np.ptp(anchors, axis=0) if len(anchors) else np.zeros(2)
        w, h = float(span[0]), float(span[1])
    diag = max(float(np.hypot(w, h)), 1.0)
    focal = max((w + h) / 4.0, 1.0)
    return diag, focal


def _residuals(L, dirs, vp, focal):
    vp = np.asarray(vp, dtype=float)
    if vp[2] == 0.0:
        e = vp[:2] / np.hypot(vp[0], vp[1])
        cross = dirs[:, 0] * e[1] - dirs[:, 1] * e[0]
        dot = dirs @ e
        return focal * np.arctan2(np.abs(cross), np.abs(dot))
    p = vp[:2] / vp[2]
    return np.abs(L[:, 0] * p[0] + L[:, 1] * p[1] + L[:, 2])


def _inlier_mask(vp, resid, threshold, ori, directed, anchors):
    close = resid <= threshold
    if vp[2] == 0.0:
        return close
    p = vp[:2] / vp[2]
    side = (p[0] - anchors[:, 0]) * ori[:, 0] + (p[1] - anchors[:, 1]) * ori[:, 1]
    return close & (~directed | (side > 0.0))


def init_weights(pool):
    """``w_i = sum_{j != i} exp(-theta_ij)`` with ``theta_ij`` the acute angle."""
    _, dirs, _, _, _ = _as_arrays(pool)
    if len(dirs) < 2:
        raise InsufficientLinesError("insufficient lines for VP")
    return kernels.angle_weights(np.ascontiguousarray(dirs))


def sample_pair(weights, rng, lines=None, min_angle_deg=0.5, attempts=20):
    """Draw ``i`` with probability ``w_i / sum(w)``, then ``j != i`` from the rest.

    With ``lines`` given, pairs closer than ``min_angle_deg`` to parallel are
    redrawn up to ``attempts`` times; the widest-angle pair seen is returned.
    """
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.any(w > 0):
        raise WeightCollapseError("weight collapse")
    if np.count_nonzero(w) < 2:
        raise WeightCollapseError("weight collapse: fewer than two lines with positive weight")
    dirs = None
    if lines is not None:
        dirs = _as_arrays(lines)[1]
    min_angle = np.radians(min_angle_deg)
    best = None
    best_ang = -1.0
    for _ in range(attempts if dirs is not None else 1):
        u = rng.random(2)
        i = kernels._pick_index_numpy(w, u[0])
        rest = w.copy()
        rest[i] = 0.0
        j = kernels._pick_index_numpy(rest, u[1])
        if dirs is None:
            return i, j
        d1, d2 = dirs[i], dirs[j]
        ang = np.arctan2(abs(d1[0] * d2[1] - d1[1] * d2[0]), abs(d1 @ d2))
        if ang > best_ang:
            best, best_ang = (i, j), ang
        if ang >= min_angle:
            break
    return best


def score_hypothesis(vp, pool, threshold, weights=None, focal=None):
    """Inliers of a hypothesized VP and their summed weight.

    A line is an inlier when its distance to the VP is at most ``threshold``
    and, if it is directed, the VP lies ahead of it. For an ideal VP the
    residual is ``focal`` times the angle between line and VP direction.
    """
    L, dirs, ori, directed, anchors = _as_arrays(pool)
    vp = np.asarray(vp, dtype=float)
    if focal is None:
        focal = _extent(anchors, None)[1]
    resid = _residuals(L, dirs, vp, focal)
    mask = _inlier_mask(vp, resid, threshold, ori, directed, anchors)
    w = np.ones(len(L)) if weights is None else np.asarray(weights, dtype=float)
    ids = np.flatnonzero(mask)
    return ids, float(w[ids].sum())


def update_weights(weights, inlier_ids, alpha=1.2, beta=0.8):
    """Multiply inliers by ``alpha``, outliers by ``beta``; rescale to sum ``n``."""
    w = np.asarray(weights, dtype=float)
    factor = np.full(len(w), beta)
    factor[np.asarray(list(inlier_ids), dtype=int)] = alpha
    out = w * factor
    return out * (len(w) / out.sum())


def mad_threshold(residuals, k=2.5, floor=1.0, ceiling=np.inf):
    r = np.asarray(residuals, dtype=float)
    mad = np.median(np.abs(r - np.median(r)))
    return float(min(max(k * mad, floor), max(ceiling, floor)))


def adaptive_threshold(pool, vp, image_size=None, k=2.5, floor=1.0, max_frac=0.02):
    """``k * MAD`` of all line residuals to ``vp``, clamped to ``[floor, max_frac * diag]``."""
    L, dirs, _, _, anchors = _as_arrays(pool)
    diag, focal = _extent(anchors, image_size)
    return mad_threshold(_residuals(L, dirs, vp, focal), k, floor, max_frac * diag)


def _line_matrix(lines):
    if isinstance(lines, LinePool):
        return lines.arrays()[0]
    if len(lines) and isinstance(lines[0], OrientedLine):
        return _as_arrays(lines)[0]
    L = np.asarray(lines, dtype=float).reshape(-1, 3)
    norm = np.hypot(L[:, 0], L[:, 1])
    if np.any(norm == 0):
        raise DegenerateError("line has a = b = 0")
    return L / norm[:, None]


def algebraic_residual(lines, vp, weights=None):
    """``sum_i w_i (l_i . p)^2`` with ``p`` the unit-norm homogeneous VP."""
    L = _line_matrix(lines)
    w = np.ones(len(L)) if weights is None else np.asarray(weights, dtype=float)
    p = np.asarray(vp, dtype=float)
    p = p / np.linalg.norm(p)
    return float(w @ (L @ p) ** 2)


def refine_vp_eigen(lines, weights=None):
    """VP minimizing ``sum_i w_i (l_i . p)^2`` over unit ``p``.

    ``lines`` are OrientedLines or homogeneous 3-vectors (normalized here).
    """
    L = _line_matrix(lines)
    if len(L) < 2:
        raise InsufficientLinesError("refinement needs at least 2 lines")
    w = np.ones(len(L)) if weights is None else np.asarray(weights, dtype=float)
    M = (w[:, None] * L).T @ L
    evals, evecs = np.linalg.eigh(M)
    if evals[1] <= 1e-12 * max(evals[2], 1e-300):
        raise DegenerateError("degenerate refinement")
    return normalize_vp(evecs[:, 0])


def run(pool, config=None, image_size=None):
    """Weighted multi-restart RANSAC. Deterministic for a fixed ``config.seed``.

    ``image_size`` ``(w, h)`` sets the threshold ceiling and the focal length
    used for ideal points; without it the extent of the line anchors is used.
    """
    cfg = config or RansacConfig()
    cfg.validate()
    if len(pool) < 2:
        raise InsufficientLinesError("insufficient lines for VP")
    L, dirs, ori, directed, anchors = _as_arrays(pool)
    n = len(L)
    diag, focal = _extent(anchors, image_size)
    w0 = kernels.angle_weights(np.ascontiguousarray(dirs))
    thr_hi = max(cfg.min_threshold, cfg.max_threshold_frac * diag)
    fixed = -1.0 if cfg.inlier_threshold == "adaptive" else float(cfg.inlier_threshold)

    logs = []
    candidates = []
    for r in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, r])
        u = rng.random((cfg.iters_per_run, cfg.resample_attempts, 2))
        vps, votes, counts, thrs, _, masks, collapsed = kernels.ransac_restart(
            L, dirs, ori, directed, anchors, w0, w0, u, cfg.alpha, cfg.beta, fixed,
            cfg.min_threshold, thr_hi, cfg.mad_k, np.radians(cfg.min_pair_angle_deg),
            cfg.dir_consistency, focal)
        if collapsed:
            raise WeightCollapseError("weight collapse")
        log = RestartLog(run=r, vp=vps, votes=votes, counts=counts, thresholds=thrs)
        logs.append(log)
        valid = np.flatnonzero((votes >= 0) & (counts >= 2))
        if valid.size == 0:
            continue
        # highest votes, then most inliers, then earliest iteration
        best = valid[np.lexsort((valid, -counts[valid], -votes[valid]))[0]]
        log.best_iter = int(best)
        inl = np.flatnonzero(masks[best])
        try:
            ref = refine_vp_eigen(L[inl], w0[inl])
            res = algebraic_residual(L[inl], ref, w0[inl])
        except DegenerateError:
            res = np.inf
        candidates.append((-votes[best], -counts[best], res, r, best, inl))
    if not candidates:
        raise NoVanishingPointError("no vanishing point found")
    candidates.sort(key=lambda c: c[:4])
    _, _, _, run_index, best, inl = candidates[0]
    log = logs[run_index]
    hyp = log.vp[best].copy()
    thr = float(log.thresholds[best])
    hyp = hyp / hyp[2] if hyp[2] != 0.0 else hyp

    vp, inl = _polish(hyp, inl, thr, L, dirs, ori, directed, anchors, w0, focal, diag, cfg)
    return VPResult(vp=vp, inlier_ids=tuple(int(i) for i in inl),
                    score=float(w0[inl].sum()), run_index=run_index, threshold=thr,
                    residual=algebraic_residual(L[inl], vp, w0[inl]), diagnostics=logs)


def angular_residuals(vp, dirs, ori, directed, anchors):
    """Angle between each line and the ray from its anchor to ``vp``, and the ray length.

    Directed lines pointing away from a finite VP get ``pi``. For an ideal VP
    the angle is taken to its direction and the lengths are all 1.
    """
    vp = np.asarray(vp, dtype=float)
    if vp[2] == 0.0:
        e = vp[:2] / np.hypot(vp[0], vp[1])
        cross = dirs[:, 0] * e[1] - dirs[:, 1] * e[0]
        return np.arctan2(np.abs(cross), np.abs(dirs @ e)), np.ones(len(dirs))
    v = vp[:2] / vp[2] - anchors
    cross = dirs[:, 0] * v[:, 1] - dirs[:, 1] * v[:, 0]
    phi = np.arctan2(np.abs(cross), np.abs(np.einsum("ij,ij->i", dirs, v)))
    behind = directed & (np.einsum("ij,ij->i", ori, v) <= 0.0)
    return np.where(behind, np.pi, phi), np.hypot(v[:, 0], v[:, 1])


def _polish(hyp, inl, thr, L, dirs, ori, directed, anchors, w0, focal, diag, cfg):
    """Refine the winning hypothesis.

    Starts with plain eigen refinement on the RANSAC inliers. Each further
    round keeps the lines whose angle to the anchor-to-VP ray is at most
    ``polish_k`` robust standard deviations (1.4826 times the median angle
    of the current inliers, at least ``polish_floor_deg``) and whose distance
    is within the winning threshold ``thr``, then refines with weights
    ``w0 / d**2`` (``d`` = anchor-to-VP distance, clamped below) so that the
    algebraic residual approximates the angle. The returned inlier set is
    always the one measured at the returned VP.
    """
    d_min = cfg.polish_min_dist_frac * diag
    floor = np.radians(cfg.polish_floor_deg)

    def select(vp, ref):
        phi, dist = angular_residuals(vp, dirs, ori, directed, anchors)
        ang_thr = max(cfg.polish_k * 1.4826 * float(np.median(phi[ref])), floor)
        close = _inlier_mask(vp, _residuals(L, dirs, vp, focal), thr, ori, directed, anchors)
        return np.flatnonzero(close & (phi <= ang_thr)), dist

    vp, cur = hyp, inl
    if cfg.refine_iters == 0:
        return vp, cur
    try:
        first = refine_vp_eigen(L[inl], w0[inl])
    except DegenerateError:
        return vp, cur
    sel, dist = select(first, inl)
    if len(sel) < 2:
        return vp, cur
    vp, cur = first, sel
    for _ in range(cfg.refine_iters - 1):
        try:
            new_vp = refine_vp_eigen(L[cur], w0[cur] / np.maximum(dist[cur], d_min) ** 2)
        except DegenerateError:
            break
        nxt, new_dist = select(new_vp, cur)
        if len(nxt) < 2:
            break
        converged = np.array_equal(nxt, cur)
        vp, cur, dist = new_vp, nxt, new_dist
        if converged:
            break
    return vp, cur
