"""Time the numba and numpy versions of each hot kernel on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The first numba call of every kernel (compilation or cache load) is excluded.
"""

import argparse
import time

import numpy as np

from vanishkit import kernels


def _time(fn, args, repeat):
    fn(*args)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def _cases(rng):
    desc = np.abs(rng.standard_normal((600, 128)))
    desc /= np.linalg.norm(desc, axis=1, keepdims=True)
    dm = kernels.pairwise_distances.numpy(desc[:300])
    th = rng.uniform(0, np.pi, 400)
    dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    K, S = 500, 256
    hist_args = (rng.uniform(-1, 4, (K, S)), rng.uniform(-1, 4, (K, S)),
                 rng.uniform(0, 8, (K, S)), rng.random((K, S)))

    n = 200
    vp = np.array([320.0, 240.0])
    anchors = rng.uniform(0, [640, 480], (n, 2))
    ang = np.arctan2(vp[1] - anchors[:, 1], vp[0] - anchors[:, 0])
    ang[n // 2:] = rng.uniform(0, np.pi, n - n // 2)
    d = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    L = np.stack([d[:, 1], -d[:, 0], -(d[:, 1] * anchors[:, 0] - d[:, 0] * anchors[:, 1])], axis=1)
    dl = np.stack([-L[:, 1], L[:, 0]], axis=1)
    w = kernels.angle_weights.numpy(dl)
    w = w / w.sum() * n
    u = rng.random((500, 20, 2))
    ransac_args = (L, dl, np.zeros((n, 2)), np.zeros(n, dtype=np.bool_), anchors, w.copy(), w.copy(),
                   u, 1.2, 0.8, -1.0, 1.0, 16.0, 2.5, np.radians(0.5), 0.7, 280.0)
    return {
        "pairwise_distances (600x128)": (kernels.pairwise_distances, (desc,)),
        "single_linkage (n=300)": (kernels.single_linkage_merges, (dm,)),
        "angle_weights (n=400)": (kernels.angle_weights, (dirs,)),
        "accumulate_hist (500 kp)": (kernels.accumulate_hist, hist_args),
        "ransac_restart (200 lines, 500 it)": (kernels.ransac_restart, ransac_args),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':38s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, (fn, a) in _cases(rng).items():
        t_np = _time(fn.numpy, a, args.repeat)
        t_nb = _time(fn.numba, a, args.repeat)
        print(f"{name:38s} {t_np:10.2f} {t_nb:10.2f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
