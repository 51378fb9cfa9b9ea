"""Acceptance suite: ten end-to-end criteria, one PASS/FAIL line each."""

import os
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.spatial.distance import squareform

from helpers import ACCEPTANCE_LINES, H, W, brute_force_merges, planted_pool
from vanishkit import evaluation as ev
from vanishkit import ransac as rs
from vanishkit import synthgen as sg
from vanishkit.clustering import build_distance_matrix, single_linkage
from vanishkit.geometry import OrientedLine, acute_angle, angular_error, line_from_point_direction
from vanishkit.linefit import LinePool
from vanishkit.pipeline import detect_pipeline
from vanishkit.selection import angle_score, composite_score, linearity_score, scale_score


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return emit


def _pool(lines):
    return LinePool(list(lines), len(lines), 0)


def test_criterion_01_vp_identity(report):
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(100):
        scene, cam = sg.random_scene(np.random.default_rng([2024, i]))
        worst = max(worst, sg.vp_discrepancy(sg.empirical_vp(scene, cam),
                                             sg.theoretical_vp(scene.direction, cam)))
    dt = time.perf_counter() - t0
    report(1, "analytic VP identity", worst < 1e-6 and dt < 1.0,
           f"max relative discrepancy {worst:.2e} (< 1e-6) over 100 scenes in {dt:.2f} s (< 1 s)")


def _pipeline_errors(instances):
    errs = []
    for inst in instances:
        out = detect_pipeline(inst.features, image_size=inst.image_size)
        errs.append(ev.FAIL_DEG if out.vp is None
                    else angular_error(out.vp_homogeneous(), inst.gt_vp, *inst.image_size))
    return np.array(errs)


def test_criterion_02_end_to_end_synthetic(report):
    t0 = time.perf_counter()
    clean = _pipeline_errors(sg.make_dataset(100, seed=0))
    noisy = _pipeline_errors(sg.make_dataset(100, seed=0, noise=sg.NoiseSpec(pos_sigma=1.0)))
    dt = time.perf_counter() - t0
    med0, p95, med1 = np.median(clean), np.percentile(clean, 95), np.median(noisy)
    ok = med0 <= 0.5 and p95 <= 2.0 and med1 <= 2.0 and dt < 60.0
    report(2, "end-to-end synthetic accuracy", ok,
           f"zero-noise median {med0:.2e} deg (<= 0.5), p95 {p95:.2e} deg (<= 2); "
           f"posSigma=1 median {med1:.3f} deg (<= 2); {dt:.1f} s (< 60 s)")


def test_criterion_03_planted_ransac(report):
    t0 = time.perf_counter()
    hits = 0
    for seed in range(100):
        lines, vp = planted_pool(seed, n_in=12, n_out=12, noise_deg=1.0)
        res = rs.run(_pool(lines), image_size=(W, H))
        hits += angular_error(res.vp, vp, W, H) <= 0.5
    dt = time.perf_counter() - t0
    report(3, "planted RANSAC robustness", hits >= 95 and dt < 30.0,
           f"{hits}/100 seeds within 0.5 deg (>= 95) in {dt:.1f} s (< 30 s)")


def test_criterion_04_ransac_oracles(report):
    rng = np.random.default_rng(4)
    worst_w = 0.0
    for _ in range(10):
        th = rng.uniform(0, np.pi, 6)
        pts = rng.uniform(0, 400, (6, 2))
        lines = [OrientedLine(line_from_point_direction(p, (np.cos(t), np.sin(t))), p)
                 for p, t in zip(pts, th)]
        w = rs.init_weights(_pool(lines))
        ref = np.array([sum(np.exp(-acute_angle(lines[i], lines[j])) for j in range(6) if j != i)
                        for i in range(6)])
        worst_w = max(worst_w, float(np.max(np.abs(w - ref))))

    w = np.ones(6)
    for _ in range(10):
        w = rs.update_weights(w, [0, 1, 2], alpha=1.2, beta=0.8)
    ratio_err = abs(w[3] / w[0] - (0.8 / 1.2) ** 10)

    worst_v = 0.0
    for k in range(5):
        r = np.random.default_rng([40, k])
        vp = np.append(r.uniform(-2, 2, 2), 1.0)
        L = []
        for _ in range(8):
            a = vp[:2] + r.uniform(-1, 1, 2)
            t = np.arctan2(vp[1] - a[1], vp[0] - a[0]) + r.normal(0, 0.2)
            L.append(line_from_point_direction(a, (np.cos(t), np.sin(t))))
        L = np.array(L)
        wt = r.uniform(0.5, 2.0, 8)
        est = rs.refine_vp_eigen(L, wt)
        est = est / np.linalg.norm(est)
        best = min((minimize(lambda p: (wt @ (L @ p) ** 2) / (p @ p),
                             np.random.default_rng([41, k, s]).standard_normal(3), method="BFGS",
                             options={"gtol": 1e-14, "maxiter": 10_000}) for s in range(4)),
                   key=lambda res: res.fun)
        p = best.x / np.linalg.norm(best.x)
        worst_v = max(worst_v, float(np.max(np.abs(p * np.sign(p @ est) - est))))
    ok = worst_w <= 1e-12 and ratio_err <= 1e-12 and worst_v <= 1e-6
    report(4, "weighted-RANSAC component oracles", ok,
           f"init_weights max diff {worst_w:.1e} (<= 1e-12); (beta/alpha)^10 ratio diff "
           f"{ratio_err:.1e} (<= 1e-12); eigen vs BFGS max diff {worst_v:.1e} (<= 1e-6)")


def test_criterion_05_scores(report):
    t = np.linspace(0, 9, 7)
    collinear = np.stack([3 + 2 * t, -1 + 0.5 * t], axis=1)
    s_l = linearity_score(collinear)
    s_a = angle_score(0.3 + 0.4 * np.arange(6))
    s_s = scale_score(8.0 * 0.7 ** np.arange(6))
    s_c = composite_score(1.0, 0.0, 0.0, 3)
    ok = s_l < 1e-12 and s_a < 1e-12 and s_s < 1e-12 and s_c == 1.0 / 9.0
    report(5, "score correctness", ok,
           f"S_L {s_l:.1e}, S_A {s_a:.1e}, S_S {s_s:.1e} (all 0); S_C(1,0,0,3) = {s_c!r} (1/9)")


def test_criterion_06_clustering_oracle(report):
    mismatches = 0
    cases = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        for n in range(2, 9):
            if rng.random() < 0.3:
                dm = squareform(rng.integers(1, 4, n * (n - 1) // 2).astype(float))
            else:
                dm = build_distance_matrix(rng.random((n, 8)))
            cases += 1
            mismatches += single_linkage(dm).merges != brute_force_merges(dm)
    report(6, "clustering oracle equivalence", mismatches == 0,
           f"{cases - mismatches}/{cases} merge sequences identical (n = 2..8, 100 seeds)")


def test_criterion_07_metrics(report):
    e = angular_error(np.array([256.0, 256.0, 1.0]), np.array([512.0, 256.0, 1.0]), 512, 512)
    auc = ev.auc_at(ev.curve([ev.EvalRecord(f"i{k}", 0.0) for k in range(10)]), 10.0)
    rng = np.random.default_rng(7)
    monotone = True
    for _ in range(200):
        errs = [None if rng.random() < 0.2 else float(rng.uniform(0, 20)) for _ in range(30)]
        c = ev.curve([ev.EvalRecord(f"i{k}", v) for k, v in enumerate(errs)])
        monotone &= bool(np.all(np.diff(c.success_rate) >= 0))
    ok = abs(e - 45.0) <= 1e-9 and auc == 10.0 and monotone
    report(7, "metric checks", ok,
           f"hand case {e:.12f} deg (45 +- 1e-9); perfect AUC@10 = {auc!r}; "
           f"200 random curves monotone: {monotone}")


def test_criterion_08_stress(report):
    def detector(feats, size):
        return detect_pipeline(feats, image_size=size).vp_homogeneous()

    f1 = {(s, t): [] for s in (0.5, 5.0) for t in (5.0, 10.0)}
    zero = []
    for seed in range(20):
        insts = sg.make_dataset(5, seed=1000 + seed)
        for row in ev.stress_test(detector, insts, sigmas=(0.5, 5.0), seed=seed):
            f1[(row["sigma"], row["theta"])].append(row["f1"])
        if seed < 4:
            zero += [row["f1"] for row in ev.stress_test(detector, insts, sigmas=(0.0,), seed=seed)]
    m = {k: float(np.mean(v)) for k, v in f1.items()}
    ok = (m[(0.5, 5.0)] >= m[(5.0, 5.0)] and m[(0.5, 10.0)] >= m[(5.0, 10.0)]
          and all(z == 1.0 for z in zero))
    report(8, "stress-test behavior", ok,
           f"mean F1 sigma=0.5 vs 5: {m[(0.5, 5.0)]:.3f} vs {m[(5.0, 5.0)]:.3f} at 5 deg, "
           f"{m[(0.5, 10.0)]:.3f} vs {m[(5.0, 10.0)]:.3f} at 10 deg; zero-noise F1 "
           f"min {min(zero):.3f} over {len(zero)} runs (= 1)")


def test_criterion_09_significance(report):
    rng = np.random.default_rng(99)
    recs = lambda v: [ev.EvalRecord(f"i{k:02d}", float(x)) for k, x in enumerate(v)]
    a = rng.uniform(0, 5, 20)
    p_same = ev.significance(recs(a), recs(a))
    p_shift = ev.significance(recs(a + 10.0), recs(a))
    rejections = sum(ev.significance(recs(rng.uniform(0, 10, 20)), recs(rng.uniform(0, 10, 20))) < 0.05
                     for _ in range(100))
    ok = p_same == 1.0 and p_shift < 0.001 and 2 <= rejections <= 8
    report(9, "significance calibration", ok,
           f"p(A,A) = {p_same!r}; shifted p = {p_shift:.2e} (< 0.001); "
           f"null rejections {rejections}/100 (5 +- 3)")


def _cli(*args, cwd):
    env = dict(os.environ)
    env.pop("VANISHKIT_SEED", None)
    r = subprocess.run([sys.executable, "-m", "vanishkit.cli", *args], cwd=cwd, env=env,
                       capture_output=True)
    assert r.returncode == 0, r.stderr.decode()
    return r.stdout


def _tree(root):
    out = {}
    for d, _, files in os.walk(root):
        for f in files:
            with open(os.path.join(d, f), "rb") as fh:
                out[os.path.relpath(os.path.join(d, f), root)] = fh.read()
    return out


def test_criterion_10_determinism(report, tmp_path):
    same = {}
    trees = []
    for run in ("a", "b"):
        _cli("synth", "--scenes", "6", "--seed", "11", "--noise", "1", "--out", f"ds_{run}", cwd=tmp_path)
        trees.append(_tree(tmp_path / f"ds_{run}"))
    same["synth"] = trees[0] == trees[1]
    preds = []
    for run in ("a", "b"):
        _cli("detect", "ds_a", "--seed", "5", "--out", f"pred_{run}.csv", cwd=tmp_path)
        preds.append((tmp_path / f"pred_{run}.csv").read_bytes())
    same["detect"] = preds[0] == preds[1]
    evals = []
    for run in ("a", "b"):
        out = _cli("eval", "--pred", "pred_a.csv", "--gt", "ds_a", "--curve", f"curve_{run}.csv",
                   "--results", f"res_{run}.csv", cwd=tmp_path)
        evals.append((out, (tmp_path / f"curve_{run}.csv").read_bytes(),
                      (tmp_path / f"res_{run}.csv").read_bytes()))
    same["eval"] = evals[0] == evals[1]
    report(10, "determinism", all(same.values()),
           "byte-identical repeated runs: " + ", ".join(f"{k} {v}" for k, v in same.items()))
