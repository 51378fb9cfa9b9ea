"""Scoring: angular errors, success-rate curves, AUC, medians, paired tests, noise stress test."""

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import FormatError
from .geometry import angular_error

FAIL_DEG = 180.0


@dataclass(frozen=True)
class EvalRecord:
    image_id: str
    error_deg: Optional[float]
    runtime_ms: float = 0.0

    def __post_init__(self):
        if self.error_deg is not None and not 0.0 <= self.error_deg <= 180.0:
            raise ValueError(f"error_deg out of range: {self.error_deg}")

    @property
    def failed(self):
        return self.error_deg is None


@dataclass
class CurveData:
    thresholds: np.ndarray
    success_rate: np.ndarray


def default_grid():
    """0 to 10 degrees in 0.1 degree steps."""
    return np.round(np.arange(101) * 0.1, 10)


def _errors(records):
    return np.array([FAIL_DEG if r.failed else r.error_deg for r in records], dtype=float)


def curve(records, grid=None):
    """Fraction of all records (failures included) with error at most each threshold."""
    records = list(records)
    if not records:
        raise ValueError("no records to build a curve from")
    grid = default_grid() if grid is None else np.sort(np.asarray(grid, dtype=float))
    ok = np.array([not r.failed for r in records])
    err = _errors(records)
    rate = ((err[None, :] <= grid[:, None]) & ok[None, :]).sum(axis=1) / len(records)
    return CurveData(thresholds=grid, success_rate=rate)


def auc_at(c, theta_max):
    """Trapezoidal area under the success curve from the first grid point to ``theta_max``.

    Unnormalized: a perfect detector scores ``theta_max`` (in degrees).
    """
    t = np.asarray(c.thresholds, dtype=float)
    r = np.asarray(c.success_rate, dtype=float)
    if not t[0] <= theta_max <= t[-1]:
        raise ValueError(f"theta_max {theta_max} outside curve grid [{t[0]}, {t[-1]}]")
    keep = t < theta_max
    tt = np.append(t[keep], theta_max)
    rr = np.append(r[keep], np.interp(theta_max, t, r))
    return float(np.sum(np.diff(tt) * (rr[1:] + rr[:-1]) / 2.0))


def median_error(records):
    records = list(records)
    if not records:
        raise ValueError("no records")
    return float(np.median(_errors(records)))


# ---------------------------------------------------------------------------
# paired two-sided Wilcoxon signed-rank test
# ---------------------------------------------------------------------------

def _average_ranks(x):
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_pvalue(ranks, w_plus):
    # doubled ranks are integers even with ties
    r2 = np.round(2 * ranks).astype(int)
    total = int(r2.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in r2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:-r]
        counts = counts + shifted
    probs = counts / counts.sum()
    w2 = int(round(2 * w_plus))
    lower = probs[:w2 + 1].sum()
    upper = probs[w2:].sum()
    return min(1.0, 2.0 * min(lower, upper))


def _normal_pvalue(ranks, w_plus, abs_d):
    n = len(ranks)
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(abs_d, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
    if var <= 0:
        return 1.0
    diff = w_plus - mean
    diff = np.sign(diff) * max(abs(diff) - 0.5, 0.0)
    z = diff / math.sqrt(var)
    return min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))


def signed_rank_test(a, b, exact_max=25):
    """Two-sided Wilcoxon signed-rank p-value for paired samples.

    Zero differences are dropped and tied magnitudes get average ranks. The
    null distribution is enumerated exactly for at most ``exact_max``
    nonzero pairs; above that a tie- and continuity-corrected normal
    approximation is used.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-d and of equal length")
    d = a - b
    d = d[d != 0]
    if len(d) == 0:
        return 1.0
    abs_d = np.abs(d)
    ranks = _average_ranks(abs_d)
    w_plus = float(ranks[d > 0].sum())
    if len(d) <= exact_max:
        return float(_exact_pvalue(ranks, w_plus))
    return float(_normal_pvalue(ranks, w_plus, abs_d))


def significance(records_a, records_b, min_pairs=6):
    """Paired signed-rank p-value of per-image errors (failures count as 180 degrees)."""
    records_a, records_b = list(records_a), list(records_b)
    ra = {r.image_id: r for r in records_a}
    rb = {r.image_id: r for r in records_b}
    if len(ra) != len(records_a) or len(rb) != len(records_b):
        raise ValueError("duplicate image ids")
    if set(ra) != set(rb):
        raise ValueError("record sets are not paired on the same images")
    if len(ra) < min_pairs:
        raise ValueError(f"need at least {min_pairs} paired images, got {len(ra)}")
    ids = sorted(ra)
    return signed_rank_test(_errors([ra[i] for i in ids]), _errors([rb[i] for i in ids]))


# ---------------------------------------------------------------------------
# evaluation of predictions
# ---------------------------------------------------------------------------

def evaluate(predictions, truths, runtimes=None):
    """Records for every ground-truth image.

    ``predictions`` maps image id to a homogeneous VP or ``None``;
    ``truths`` maps image id to ``(gt_vp, (width, height))``. Images without
    a prediction count as failures.
    """
    runtimes = runtimes or {}
    out = []
    for image_id in sorted(truths):
        gt, (w, h) = truths[image_id]
        vp = predictions.get(image_id)
        err = None if vp is None else angular_error(vp, gt, w, h)
        out.append(EvalRecord(image_id, err, float(runtimes.get(image_id, 0.0))))
    return out


def _perturb(inst, sigma, scale, rng):
    feats = []
    from .features import Feature, Keypoint

    for f in inst.features:
        kp = f.keypoint
        x, y = kp.x * scale, kp.y * scale
        if sigma > 0:
            dx, dy = rng.normal(0.0, sigma, 2)
            x, y = x + dx, y + dy
        feats.append(Feature(Keypoint(x, y, kp.size * scale, kp.angle, kp.response, kp.octave),
                             f.descriptor, f.id))
    w, h = inst.image_size
    gt = np.asarray(inst.gt_vp, dtype=float).copy()
    if gt[2] != 0:
        gt = np.array([gt[0] / gt[2] * scale, gt[1] / gt[2] * scale, 1.0])
    return feats, gt, (w * scale, h * scale)


def stress_test(detector, instances, sigmas=(0.5, 1.0, 2.0, 3.0, 5.0), scales=(1.0,),
                thresholds=(5.0, 10.0), seed=0):
    """F1 of a detector under Gaussian noise on feature locations.

    ``detector(features, image_size)`` returns a homogeneous VP or ``None``.
    Positions and sizes are multiplied by each scale before noise is added.
    A detection succeeds when its angular error is at most the threshold;
    precision is successes over detections returned and recall successes
    over all instances.

    Returns a list of dict rows with keys ``scale, sigma, theta, successes,
    detections, total, precision, recall, f1``.
    """
    instances = list(instances)
    rows = []
    for si, scale in enumerate(scales):
        for gi, sigma in enumerate(sigmas):
            errs = []
            for k, inst in enumerate(instances):
                rng = np.random.default_rng([seed, si, gi, k])
                feats, gt, size = _perturb(inst, float(sigma), float(scale), rng)
                vp = detector(feats, size)
                errs.append(None if vp is None else angular_error(vp, gt, *size))
            n_det = sum(e is not None for e in errs)
            for theta in thresholds:
                succ = sum(e is not None and e <= theta for e in errs)
                p = succ / n_det if n_det else 0.0
                r = succ / len(errs) if errs else 0.0
                f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
                rows.append({"scale": float(scale), "sigma": float(sigma), "theta": float(theta),
                             "successes": succ, "detections": n_det, "total": len(errs),
                             "precision": p, "recall": r, "f1": f1})
    return rows


STRESS_FIELDS = ["scale", "sigma", "theta", "successes", "detections", "total",
                 "precision", "recall", "f1"]


def write_stress_csv(rows, path_or_file):
    _write_csv(path_or_file, STRESS_FIELDS,
               [[_fmt(r[k]) if isinstance(r[k], float) else r[k] for k in STRESS_FIELDS]
                for r in rows])


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

def _fmt(v):
    return format(float(v), ".10g")


def _write_csv(path_or_file, header, rows):
    if hasattr(path_or_file, "write"):
        w = csv.writer(path_or_file, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return
    with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
        _write_csv(fh, header, rows)


def write_results_csv(records, path):
    _write_csv(path, ["imageId", "errorDeg", "runtimeMs"],
               [[r.image_id, "failed" if r.failed else _fmt(r.error_deg), _fmt(r.runtime_ms)]
                for r in records])


def read_results_csv(path):
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if lineno == 1 and row and row[0] == "imageId":
                continue
            if not row:
                continue
            if len(row) != 3:
                raise FormatError(f"expected 3 columns, got {len(row)}", path, lineno)
            try:
                err = None if row[1].strip() == "failed" else float(row[1])
                out.append(EvalRecord(row[0], err, float(row[2])))
            except ValueError as exc:
                raise FormatError(str(exc), path, lineno) from None
    return out


def write_curve_csv(c, path):
    _write_csv(path, ["thresholdDeg", "successRate"],
               [[_fmt(t), _fmt(r)] for t, r in zip(c.thresholds, c.success_rate)])


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]


def plot_curves_svg(curves, path, width=480, height=360):
    """Line plot of success-rate curves; ``curves`` maps a label to a CurveData."""
    ml, mr, mt, mb = 56, 16, 16, 48
    pw, ph = width - ml - mr, height - mt - mb
    tmax = max(float(c.thresholds[-1]) for c in curves.values()) if curves else 10.0
    tmax = tmax or 1.0

    def sx(t):
        return ml + pw * t / tmax

    def sy(r):
        return mt + ph * (1.0 - r)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="11">',
             f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for k in range(6):
        t = tmax * k / 5
        parts.append(f'<text x="{sx(t):.1f}" y="{mt + ph + 16}" text-anchor="middle">{t:g}</text>')
        r = k / 5
        parts.append(f'<text x="{ml - 6}" y="{sy(r) + 4:.1f}" text-anchor="end">{r:.1f}</text>')
    parts.append(f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle">'
                 'angle threshold (degrees)</text>')
    parts.append(f'<text x="14" y="{mt + ph / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 14 {mt + ph / 2})">success rate</text>')
    for i, (label, c) in enumerate(curves.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{sx(t):.2f},{sy(r):.2f}" for t, r in zip(c.thresholds, c.success_rate))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = mt + ph - 12 - 14 * i
        parts.append(f'<text x="{ml + pw - 8}" y="{ly}" text-anchor="end" fill="{color}">'
                     f'{_escape(label)}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def _escape(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
