"""Constructed instances shared by several test modules."""

import numpy as np

from vanishkit.geometry import OrientedLine, line_from_point_direction

W, H = 640, 480

# PASS/FAIL lines of the acceptance suite, echoed again in the terminal summary
ACCEPTANCE_LINES = []


def planted_pool(seed, n_in=12, n_out=12, noise_deg=1.0, width=W, height=H):
    """Lines through a VP inside the image (uniform direction noise of +-noise_deg) plus uniform outliers.

    Inlier lines are directed toward the VP; outliers get a uniformly random
    anchor and direction. Returns ``(lines, vp)``.
    """
    rng = np.random.default_rng(seed)
    vp = rng.uniform([0.1 * width, 0.1 * height], [0.9 * width, 0.9 * height])
    lines = []
    while len(lines) < n_in:
        a = rng.uniform([0, 0], [width, height])
        to_vp = vp - a
        if np.hypot(*to_vp) < 60:
            continue
        th = np.arctan2(to_vp[1], to_vp[0]) + np.radians(rng.uniform(-noise_deg, noise_deg))
        d = np.array([np.cos(th), np.sin(th)])
        lines.append(OrientedLine(line_from_point_direction(a, d), a, direction=d))
    for _ in range(n_out):
        a = rng.uniform([0, 0], [width, height])
        th = rng.uniform(0, 2 * np.pi)
        d = np.array([np.cos(th), np.sin(th)])
        lines.append(OrientedLine(line_from_point_direction(a, d), a, direction=d))
    return lines, np.array([vp[0], vp[1], 1.0])


def lines_through(vp, n, seed=0, directed=True, spread=300.0):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        th = np.pi * (k + 0.5) / n + rng.uniform(-0.05, 0.05)
        d = np.array([np.cos(th), np.sin(th)])
        a = np.asarray(vp[:2], dtype=float) - rng.uniform(50, spread) * d
        out.append(OrientedLine(line_from_point_direction(a, d), a, direction=d if directed else None))
    return out


def brute_force_merges(dm):
    """Naive single linkage: rescan every pair of current groups at each step."""
    groups = {i: [i] for i in range(len(dm))}
    merges = []
    while len(groups) > 1:
        best = None
        keys = sorted(groups)
        for ia, a in enumerate(keys):
            for b in keys[ia + 1:]:
                d = min(dm[i, j] for i in groups[a] for j in groups[b])
                if best is None or (d, a, b) < best:
                    best = (d, a, b)
        d, a, b = best
        groups[a] = groups[a] + groups.pop(b)
        merges.append((a, b, d))
    return merges
