"""Hot numeric kernels, each with a numba loop version and a numpy version.

The public names at the bottom dispatch on :data:`vanishkit._accel.USE_NUMBA`.
Both variants of a kernel consume identical inputs (random draws are made by
the caller). The RANSAC restart and the linkage kernels make the same
decisions in the same order and agree bit-for-bit; the distance matrix,
angle weights and descriptor histograms agree to rounding (BLAS summation
order, SIMD ``exp``/``arctan2``, and accumulation order respectively).
"""

import numpy as np

from . import _accel
from ._accel import njit

IDEAL_EPS = 1e-12


# ---------------------------------------------------------------------------
# descriptor distances
# ---------------------------------------------------------------------------

@njit
def _pairwise_distances_numba(X):
    n, d = X.shape
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                diff = X[i, k] - X[j, k]
                acc += diff * diff
            out[i, j] = np.sqrt(acc)
            out[j, i] = out[i, j]
    return out


def _pairwise_distances_numpy(X):
    n = X.shape[0]
    out = np.zeros((n, n))
    for i in range(n - 1):
        diff = X[i + 1:] - X[i]
        row = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        out[i, i + 1:] = row
        out[i + 1:, i] = row
    return out


# ---------------------------------------------------------------------------
# single linkage
#
# Groups live in the slot of their smallest leaf id. For every active slot i
# we keep its nearest active slot j > i (ties -> smallest j); the next merge is
# then the lexicographic minimum of (distance, i, j).
# ---------------------------------------------------------------------------

@njit
def _row_nearest_numba(D, active, i):
    n = D.shape[0]
    best_j = -1
    best_d = np.inf
    for j in range(i + 1, n):
        if active[j] and D[i, j] < best_d:
            best_d = D[i, j]
            best_j = j
    return best_j, best_d


@njit
def _single_linkage_numba(dist):
    n = dist.shape[0]
    D = dist.copy()
    active = np.ones(n, dtype=np.bool_)
    nn = np.full(n, -1, dtype=np.int64)
    nd = np.full(n, np.inf)
    for i in range(n - 1):
        nn[i], nd[i] = _row_nearest_numba(D, active, i)
    pairs = np.zeros((n - 1, 2), dtype=np.int64)
    heights = np.zeros(n - 1)
    for step in range(n - 1):
        a = -1
        best = np.inf
        for i in range(n):
            if active[i] and nn[i] >= 0 and nd[i] < best:
                best = nd[i]
                a = i
        b = nn[a]
        pairs[step, 0] = a
        pairs[step, 1] = b
        heights[step] = best
        active[b] = False
        nn[b] = -1
        nd[b] = np.inf
        for k in range(n):
            if active[k] and k != a:
                m = min(D[a, k], D[b, k])
                D[a, k] = m
                D[k, a] = m
        nn[a], nd[a] = _row_nearest_numba(D, active, a)
        for i in range(a):
            if not active[i]:
                continue
            if nn[i] == a or nn[i] == b:
                nn[i] = a
                nd[i] = D[i, a]
            elif D[i, a] < nd[i] or (D[i, a] == nd[i] and a < nn[i]):
                nn[i] = a
                nd[i] = D[i, a]
        for i in range(a + 1, b):
            if active[i] and nn[i] == b:
                nn[i], nd[i] = _row_nearest_numba(D, active, i)
    return pairs, heights


def _row_nearest_numpy(D, active, i):
    row = np.where(active[i + 1:], D[i, i + 1:], np.inf)
    if row.size == 0:
        return -1, np.inf
    j = int(np.argmin(row))
    if row[j] == np.inf:
        return -1, np.inf
    return i + 1 + j, row[j]


def _single_linkage_numpy(dist):
    n = dist.shape[0]
    D = dist.astype(float, copy=True)
    active = np.ones(n, dtype=bool)
    nn = np.full(n, -1, dtype=np.int64)
    nd = np.full(n, np.inf)
    for i in range(n - 1):
        nn[i], nd[i] = _row_nearest_numpy(D, active, i)
    pairs = np.zeros((n - 1, 2), dtype=np.int64)
    heights = np.zeros(n - 1)
    idx = np.arange(n)
    for step in range(n - 1):
        cand = np.where(active & (nn >= 0), nd, np.inf)
        a = int(np.argmin(cand))
        b = int(nn[a])
        pairs[step] = a, b
        heights[step] = cand[a]
        active[b] = False
        nn[b] = -1
        nd[b] = np.inf
        merged = np.minimum(D[a], D[b])
        mask = active.copy()
        mask[a] = False
        D[a, mask] = merged[mask]
        D[mask, a] = merged[mask]
        nn[a], nd[a] = _row_nearest_numpy(D, active, a)

        low = active & (idx < a)
        snap = low & ((nn == a) | (nn == b))
        nn[snap] = a
        nd[snap] = D[snap, a]
        rest = low & ~snap
        col = D[:, a]
        better = rest & ((col < nd) | ((col == nd) & (a < nn)))
        nn[better] = a
        nd[better] = col[better]

        for i in np.flatnonzero(active & (idx > a) & (idx < b) & (nn == b)):
            nn[i], nd[i] = _row_nearest_numpy(D, active, i)
    return pairs, heights


# ---------------------------------------------------------------------------
# initial RANSAC weights: w_i = sum_{j != i} exp(-acute angle(i, j))
# ---------------------------------------------------------------------------

@njit
def _angle_weights_numba(dirs):
    n = dirs.shape[0]
    w = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            if j == i:
                continue
            cross = dirs[i, 0] * dirs[j, 1] - dirs[i, 1] * dirs[j, 0]
            dot = dirs[i, 0] * dirs[j, 0] + dirs[i, 1] * dirs[j, 1]
            acc += np.exp(-np.arctan2(abs(cross), abs(dot)))
        w[i] = acc
    return w


def _angle_weights_numpy(dirs):
    cross = dirs[:, 0][:, None] * dirs[:, 1][None, :] - dirs[:, 1][:, None] * dirs[:, 0][None, :]
    dot = dirs @ dirs.T
    terms = np.exp(-np.arctan2(np.abs(cross), np.abs(dot)))
    np.fill_diagonal(terms, 0.0)
    # sequential row sums so both backends round identically
    return np.cumsum(terms, axis=1)[:, -1] if len(dirs) else np.zeros(0)


# ---------------------------------------------------------------------------
# descriptor histogram accumulation (4x4 spatial cells x 8 orientation bins,
# trilinear interpolation, orientation bins wrap)
# ---------------------------------------------------------------------------

@njit
def _accumulate_hist_numba(rbin, cbin, obin, mag):
    K, S = rbin.shape
    hist = np.zeros((K, 4, 4, 8))
    for k in range(K):
        for s in range(S):
            rb = rbin[k, s]
            cb = cbin[k, s]
            ob = obin[k, s]
            m = mag[k, s]
            r0 = int(np.floor(rb))
            c0 = int(np.floor(cb))
            o0 = int(np.floor(ob))
            dr = rb - r0
            dc = cb - c0
            do = ob - o0
            for ir in range(2):
                r = r0 + ir
                if r < 0 or r > 3:
                    continue
                wr = dr if ir == 1 else 1.0 - dr
                for ic in range(2):
                    c = c0 + ic
                    if c < 0 or c > 3:
                        continue
                    wc = dc if ic == 1 else 1.0 - dc
                    for io in range(2):
                        o = (o0 + io) % 8
                        wo = do if io == 1 else 1.0 - do
                        hist[k, r, c, o] += m * wr * wc * wo
    return hist


def _accumulate_hist_numpy(rbin, cbin, obin, mag):
    K, S = rbin.shape
    hist = np.zeros((K, 4, 4, 8))
    r0 = np.floor(rbin).astype(np.int64)
    c0 = np.floor(cbin).astype(np.int64)
    o0 = np.floor(obin).astype(np.int64)
    dr = rbin - r0
    dc = cbin - c0
    do = obin - o0
    kk = np.broadcast_to(np.arange(K)[:, None], (K, S))
    for ir in (0, 1):
        r = r0 + ir
        wr = dr if ir else 1.0 - dr
        for ic in (0, 1):
            c = c0 + ic
            wc = dc if ic else 1.0 - dc
            ok = (r >= 0) & (r <= 3) & (c >= 0) & (c <= 3)
            for io in (0, 1):
                o = (o0 + io) % 8
                wo = do if io else 1.0 - do
                np.add.at(hist, (kk[ok], r[ok], c[ok], o[ok]), (mag * wr * wc * wo)[ok])
    return hist


# ---------------------------------------------------------------------------
# weighted RANSAC: one restart
#
# Inputs are fully explicit (uniform draws precomputed by the caller). The
# kernel returns a per-iteration log; the caller selects the winner.
# votes == -1 marks a degenerate or rejected hypothesis.
# ---------------------------------------------------------------------------

@njit
def _pick_index_numba(weights, u):
    total = 0.0
    for k in range(weights.shape[0]):
        total += weights[k]
    target = u * total
    acc = 0.0
    last = -1
    for k in range(weights.shape[0]):
        if weights[k] > 0.0:
            last = k
            acc += weights[k]
            if acc > target:
                return k
    return last


@njit
def _ransac_restart_numba(L, dirs, ori, directed, anchors, w_vote, w_init, u,
                          alpha, beta, fixed_thr, thr_lo, thr_hi, k_mad,
                          min_angle, dir_consistency, focal):
    n = L.shape[0]
    iters = u.shape[0]
    attempts = u.shape[1]
    ws = w_init.copy()
    log_vp = np.zeros((iters, 3))
    log_votes = np.full(iters, -1.0)
    log_count = np.zeros(iters, dtype=np.int64)
    log_thr = np.zeros(iters)
    log_pair = np.full((iters, 2), -1, dtype=np.int64)
    inl_mask = np.zeros((iters, n), dtype=np.bool_)
    resid = np.zeros(n)
    tmp = np.zeros(n)
    for it in range(iters):
        # weighted pair draw, resampling near-parallel pairs
        best_i = -1
        best_j = -1
        best_ang = -1.0
        for a in range(attempts):
            i = _pick_index_numba(ws, u[it, a, 0])
            wi = ws[i]
            ws[i] = 0.0
            j = _pick_index_numba(ws, u[it, a, 1])
            ws[i] = wi
            if i < 0 or j < 0 or j == i:
                return log_vp, log_votes, log_count, log_thr, log_pair, inl_mask, True
            cross = dirs[i, 0] * dirs[j, 1] - dirs[i, 1] * dirs[j, 0]
            dot = dirs[i, 0] * dirs[j, 0] + dirs[i, 1] * dirs[j, 1]
            ang = np.arctan2(abs(cross), abs(dot))
            if ang > best_ang:
                best_ang = ang
                best_i = i
                best_j = j
            if ang >= min_angle:
                break
        i = best_i
        j = best_j
        log_pair[it, 0] = i
        log_pair[it, 1] = j
        vx = L[i, 1] * L[j, 2] - L[i, 2] * L[j, 1]
        vy = L[i, 2] * L[j, 0] - L[i, 0] * L[j, 2]
        vw = L[i, 0] * L[j, 1] - L[i, 1] * L[j, 0]
        nrm = np.sqrt(vx * vx + vy * vy + vw * vw)
        if nrm < IDEAL_EPS:
            continue
        vx /= nrm
        vy /= nrm
        vw /= nrm
        ideal = abs(vw) <= IDEAL_EPS * np.sqrt(vx * vx + vy * vy)
        if ideal:
            vw = 0.0
            h = np.sqrt(vx * vx + vy * vy)
            ex = vx / h
            ey = vy / h
            for k in range(n):
                cross = dirs[k, 0] * ey - dirs[k, 1] * ex
                dot = dirs[k, 0] * ex + dirs[k, 1] * ey
                resid[k] = focal * np.arctan2(abs(cross), abs(dot))
            px = 0.0
            py = 0.0
        else:
            px = vx / vw
            py = vy / vw
            for k in range(n):
                resid[k] = abs(L[k, 0] * px + L[k, 1] * py + L[k, 2])
        if fixed_thr > 0.0:
            thr = fixed_thr
        else:
            med = np.median(resid)
            for k in range(n):
                tmp[k] = abs(resid[k] - med)
            thr = k_mad * np.median(tmp)
            thr = min(max(thr, thr_lo), thr_hi)
        n_dir = 0
        n_pos = 0
        votes = 0.0
        count = 0
        for k in range(n):
            if resid[k] > thr:
                continue
            ok = True
            if directed[k] and not ideal:
                n_dir += 1
                side = (px - anchors[k, 0]) * ori[k, 0] + (py - anchors[k, 1]) * ori[k, 1]
                if side > 0.0:
                    n_pos += 1
                else:
                    ok = False
            if ok:
                inl_mask[it, k] = True
                votes += w_vote[k]
                count += 1
        log_vp[it, 0] = vx
        log_vp[it, 1] = vy
        log_vp[it, 2] = vw
        log_thr[it] = thr
        if n_dir > 0 and n_pos < dir_consistency * n_dir:
            for k in range(n):
                inl_mask[it, k] = False
            continue
        log_votes[it] = votes
        log_count[it] = count
        total = 0.0
        for k in range(n):
            if inl_mask[it, k]:
                ws[k] *= alpha
            else:
                ws[k] *= beta
            total += ws[k]
        for k in range(n):
            ws[k] *= n / total
    return log_vp, log_votes, log_count, log_thr, log_pair, inl_mask, False


def _pick_index_numpy(weights, u):
    cs = np.cumsum(weights)
    target = u * cs[-1]
    positive = weights > 0.0
    hits = np.flatnonzero(positive & (cs > target))
    if hits.size:
        return int(hits[0])
    pos = np.flatnonzero(positive)
    return int(pos[-1]) if pos.size else -1


def _ransac_restart_numpy(L, dirs, ori, directed, anchors, w_vote, w_init, u,
                          alpha, beta, fixed_thr, thr_lo, thr_hi, k_mad,
                          min_angle, dir_consistency, focal):
    n = L.shape[0]
    iters, attempts = u.shape[:2]
    ws = w_init.copy()
    log_vp = np.zeros((iters, 3))
    log_votes = np.full(iters, -1.0)
    log_count = np.zeros(iters, dtype=np.int64)
    log_thr = np.zeros(iters)
    log_pair = np.full((iters, 2), -1, dtype=np.int64)
    inl_mask = np.zeros((iters, n), dtype=bool)
    for it in range(iters):
        best_i = best_j = -1
        best_ang = -1.0
        for a in range(attempts):
            i = _pick_index_numpy(ws, u[it, a, 0])
            wi = ws[i]
            ws[i] = 0.0
            j = _pick_index_numpy(ws, u[it, a, 1])
            ws[i] = wi
            if i < 0 or j < 0 or j == i:
                return log_vp, log_votes, log_count, log_thr, log_pair, inl_mask, True
            cross = dirs[i, 0] * dirs[j, 1] - dirs[i, 1] * dirs[j, 0]
            dot = dirs[i, 0] * dirs[j, 0] + dirs[i, 1] * dirs[j, 1]
            ang = np.arctan2(abs(cross), abs(dot))
            if ang > best_ang:
                best_ang, best_i, best_j = ang, i, j
            if ang >= min_angle:
                break
        i, j = best_i, best_j
        log_pair[it] = i, j
        vx = L[i, 1] * L[j, 2] - L[i, 2] * L[j, 1]
        vy = L[i, 2] * L[j, 0] - L[i, 0] * L[j, 2]
        vw = L[i, 0] * L[j, 1] - L[i, 1] * L[j, 0]
        nrm = np.sqrt(vx * vx + vy * vy + vw * vw)
        if nrm < IDEAL_EPS:
            continue
        vx, vy, vw = vx / nrm, vy / nrm, vw / nrm
        ideal = abs(vw) <= IDEAL_EPS * np.sqrt(vx * vx + vy * vy)
        if ideal:
            vw = 0.0
            h = np.sqrt(vx * vx + vy * vy)
            ex, ey = vx / h, vy / h
            cross = dirs[:, 0] * ey - dirs[:, 1] * ex
            dot = dirs[:, 0] * ex + dirs[:, 1] * ey
            resid = focal * np.arctan2(np.abs(cross), np.abs(dot))
            px = py = 0.0
        else:
            px, py = vx / vw, vy / vw
            resid = np.abs(L[:, 0] * px + L[:, 1] * py + L[:, 2])
        if fixed_thr > 0.0:
            thr = fixed_thr
        else:
            med = np.median(resid)
            thr = k_mad * np.median(np.abs(resid - med))
            thr = min(max(thr, thr_lo), thr_hi)
        close = resid <= thr
        if ideal:
            mask = close
            n_dir = n_pos = 0
        else:
            side = (px - anchors[:, 0]) * ori[:, 0] + (py - anchors[:, 1]) * ori[:, 1]
            cd = close & directed
            n_dir = int(cd.sum())
            n_pos = int((cd & (side > 0.0)).sum())
            mask = close & (~directed | (side > 0.0))
        log_vp[it] = vx, vy, vw
        log_thr[it] = thr
        if n_dir > 0 and n_pos < dir_consistency * n_dir:
            continue
        inl_mask[it] = mask
        log_votes[it] = np.cumsum(np.where(mask, w_vote, 0.0))[-1]
        log_count[it] = int(mask.sum())
        ws = ws * np.where(mask, alpha, beta)
        ws = ws * (n / np.cumsum(ws)[-1])
    return log_vp, log_votes, log_count, log_thr, log_pair, inl_mask, False


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def _pick(numba_fn, numpy_fn):
    def dispatch(*args):
        if _accel.USE_NUMBA:
            return numba_fn(*args)
        return numpy_fn(*args)

    dispatch.numba = numba_fn
    dispatch.numpy = numpy_fn
    dispatch.__name__ = numpy_fn.__name__.replace("_numpy", "").lstrip("_")
    return dispatch


pairwise_distances = _pick(_pairwise_distances_numba, _pairwise_distances_numpy)
single_linkage_merges = _pick(_single_linkage_numba, _single_linkage_numpy)
angle_weights = _pick(_angle_weights_numba, _angle_weights_numpy)
accumulate_hist = _pick(_accumulate_hist_numba, _accumulate_hist_numpy)
ransac_restart = _pick(_ransac_restart_numba, _ransac_restart_numpy)
