import itertools

import numpy as np
import pytest

from conftest import make_features
from vanishkit.errors import DegenerateError
from vanishkit.selection import (SelectionConfig, _batch_composite, angle_score,
                                 composite_score, forward_select, linearity_score,
                                 progression_order, scale_score, score_subset,
                                 wrapped_angle_diff)


def eigen_line_mean_distance(pts):
    pts = np.asarray(pts, dtype=float)
    c = pts - pts.mean(axis=0)
    _, vecs = np.linalg.eigh(c.T @ c)
    return float(np.mean(np.abs(c @ vecs[:, 0])))


def test_linearity_zero_for_collinear():
    assert linearity_score([(0, 0), (1, 2), (2, 4), (5, 10)]) < 1e-12


def test_linearity_matches_eigen_oracle():
    pts = [(0, 0), (1, 1), (2, 0)]
    assert linearity_score(pts) == pytest.approx(eigen_line_mean_distance(pts), rel=1e-12)
    rng = np.random.default_rng(0)
    for _ in range(20):
        p = rng.random((7, 2)) * 50
        assert linearity_score(p) == pytest.approx(eigen_line_mean_distance(p), rel=1e-9)


def test_linearity_single_offset_point():
    # the refitted line shifts toward the offset point by h/N, so the N-1
    # on-line points sit at h/N and the offset one at h(N-1)/N: mean 2h(N-1)/N^2
    N, h = 10, 5.0
    pts = np.array([(float(i), 0.0) for i in range(N)])
    pts[N // 2, 1] = h
    assert linearity_score(pts) == pytest.approx(2 * h * (N - 1) / N**2, rel=0.10)
    for N in (40, 80):
        pts = np.array([(float(i), 0.0) for i in range(N)])
        pts[N // 2, 1] = h
        assert linearity_score(pts) == pytest.approx(2 * h * (N - 1) / N**2, rel=0.01)


def test_linearity_errors():
    with pytest.raises(DegenerateError, match="degenerate subset"):
        linearity_score([(1, 1)] * 3)
    with pytest.raises(ValueError):
        linearity_score([(0, 0), (1, 1)])


def test_angle_score_cases():
    assert angle_score([0.3, 0.3, 0.3]) == 0.0
    assert angle_score([0, 0.1, 0.2, 0.3]) == pytest.approx(0.0, abs=1e-12)
    assert angle_score([0, 0.1, 0.3]) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        angle_score([0, 1])


def test_angle_differences_wrap_around_the_circle():
    assert wrapped_angle_diff(0.05, 2 * np.pi - 0.05) == pytest.approx(0.1)
    assert angle_score([2 * np.pi - 0.1, 0.0, 0.1]) == pytest.approx(0.0, abs=1e-12)


def test_scale_score_cases():
    assert scale_score([8, 4, 2, 1]) == 0.0
    assert scale_score([4, 2, 2]) == pytest.approx(1.0)
    assert scale_score([3, 3, 3]) == 0.0
    with pytest.raises(ValueError):
        scale_score([1, 0, 1])


def test_composite_score_cases():
    assert composite_score(0.0, 3.0, 2.0, 5) == 0.0
    assert composite_score(1.0, 0.0, 0.0, 3) == pytest.approx(1 / 9)
    base = composite_score(1.0, 0.1, 0.1, 4)
    assert composite_score(1.1, 0.1, 0.1, 4) > base
    assert composite_score(1.0, 0.2, 0.1, 4) > base
    assert composite_score(1.0, 0.1, 0.2, 4) > base
    assert composite_score(1.0, 0.1, 0.1, 5) < base


def test_reversal_symmetry_of_line_and_angle_terms():
    rng = np.random.default_rng(1)
    pts = rng.random((6, 2))
    ang = rng.uniform(0, 2 * np.pi, 6)
    assert linearity_score(pts[::-1]) == pytest.approx(linearity_score(pts), rel=1e-12)
    assert angle_score(ang[::-1]) == pytest.approx(angle_score(ang), rel=1e-12)


def test_scale_term_is_not_reversal_symmetric():
    # the ratio expression is direction dependent: 4,2,2 -> 1 but 2,2,4 -> 0.5,
    # which is why progressions are always read from large to small scale
    assert scale_score([4, 2, 2]) == pytest.approx(1.0)
    assert scale_score([2, 2, 4]) == pytest.approx(0.5)


def test_progression_runs_from_large_to_small():
    pts = np.array([(2.0, 0), (0.0, 0), (1.0, 0)])
    sizes = np.array([1.0, 4.0, 2.0])
    assert list(progression_order(pts, sizes)) == [1, 2, 0]
    assert list(progression_order(pts, sizes[::-1] * 0 + [4.0, 1.0, 2.0])) == [0, 2, 1]


def test_batch_composite_matches_scalar_scores():
    rng = np.random.default_rng(2)
    xy = rng.random((30, 5, 2)) * 100
    ang = rng.uniform(0, 2 * np.pi, (30, 5))
    size = rng.uniform(1, 10, (30, 5))
    batch = _batch_composite(xy, ang, size)
    for t in range(30):
        _, b = score_subset(xy[t], ang[t], size[t])
        assert batch[t] == pytest.approx(b.composite, rel=1e-9)


def test_rigid_motion_and_scaling_of_linearity():
    rng = np.random.default_rng(3)
    pts = rng.random((8, 2)) * 20
    th = 0.7
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    moved = pts @ R.T + [13.0, -4.0]
    assert linearity_score(moved) == pytest.approx(linearity_score(pts), rel=1e-9)
    assert linearity_score(3 * pts) == pytest.approx(3 * linearity_score(pts), rel=1e-9)


def test_linearity_grows_with_noise():
    means = []
    for sigma in (0.5, 1.0, 2.0):
        vals = []
        for seed in range(50):
            rng = np.random.default_rng(seed)
            pts = np.stack([np.linspace(0, 100, 8), np.zeros(8)], axis=1)
            vals.append(linearity_score(pts + rng.normal(0, sigma, pts.shape)))
        means.append(np.mean(vals))
    assert means[0] < means[1] < means[2]


def collinear_five():
    xy = np.stack([10.0 + 12 * np.arange(5), 20.0 + 6 * np.arange(5)], axis=1)
    return xy, 16.0 * 0.8 ** np.arange(5), 0.4 + 0.1 * np.arange(5)


def test_selects_exact_progression():
    xy, sizes, angles = collinear_five()
    feats = make_features(xy, sizes, angles)
    out = forward_select(range(5), feats)
    assert len(out) == 1
    assert out[0].feature_ids == (0, 1, 2, 3, 4)
    assert out[0].scores.composite < 1e-12


def test_rejects_far_off_line_features_like_exhaustive_search():
    xy, sizes, angles = collinear_five()
    rng = np.random.default_rng(4)
    extra = rng.uniform(0, 100, (3, 2)) + [0, 60]
    xy = np.concatenate([xy, extra])
    sizes = np.concatenate([sizes, rng.uniform(1, 20, 3)])
    angles = np.concatenate([angles, rng.uniform(0, 6, 3)])
    feats = make_features(xy, sizes, angles)
    out = forward_select(range(8), feats)
    assert set(out[0].feature_ids) == set(range(5))
    # exhaustive oracle over every subset of size >= 3
    best = min(((score_subset(xy[list(c)], angles[list(c)], sizes[list(c)])[1].composite, len(c), c)
                for k in range(3, 9) for c in itertools.combinations(range(8), k)),
               key=lambda t: (round(t[0], 12), -t[1]))
    assert set(best[2]) == set(range(5))
    for s in out[1:]:
        assert not set(s.feature_ids) & set(range(5))


def test_bad_triple_gives_nothing():
    feats = make_features([(0, 0), (50, 1), (3, 40)], [2.0, 9.0, 1.0], [0.0, 2.0, 5.0])
    assert forward_select(range(3), feats) == []


def test_outputs_are_disjoint_and_accepted():
    rng = np.random.default_rng(5)
    xy = rng.uniform(0, 200, (20, 2))
    feats = make_features(xy, rng.uniform(1, 10, 20), rng.uniform(0, 6, 20))
    cfg = SelectionConfig()
    out = forward_select(range(20), feats, cfg)
    ids = [i for s in out for i in s.feature_ids]
    assert len(ids) == len(set(ids))
    assert all(s.n >= 3 and s.scores.composite <= cfg.accept_threshold for s in out)


def test_greedy_is_close_to_exhaustive_best():
    good = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 9))
        xy = rng.uniform(0, 100, (n, 2))
        sizes = rng.uniform(1, 10, n)
        angles = rng.uniform(0, 2 * np.pi, n)
        best = min(score_subset(xy[list(c)], angles[list(c)], sizes[list(c)])[1].composite
                   for k in range(3, n + 1) for c in itertools.combinations(range(n), k))
        out = forward_select(range(n), make_features(xy, sizes, angles),
                             SelectionConfig(accept_threshold=np.inf))
        if out and min(s.scores.composite for s in out) <= 2 * best:
            good += 1
    assert good >= 90


def test_small_group_and_config_validation():
    assert forward_select([0, 1], make_features([(0, 0), (1, 1)])) == []
    with pytest.raises(ValueError):
        SelectionConfig(growth_factor=0.5).validate()
