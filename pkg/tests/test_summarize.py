import itertools
import math

import numpy as np
import pytest

from edsnet.config import RunConfig
from edsnet.dataio import SyntheticSpec, synth_video
from edsnet.pooling_heads import init_params
from edsnet.summarize import (
    ShotBoundaries,
    frame_scores,
    knapsack_select,
    kts,
    make_summary,
    refine_and_suppress,
    summarize_scores,
)
from edsnet.train_eval import f1_against_users


def kts_objective(X, cps, penalty):
    n = len(X)
    edges = [0, *cps, n]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        seg = X[a:b]
        total += (seg**2).sum() - (seg.sum(axis=0) ** 2).sum() / (b - a)
    m = len(cps)
    return total + (penalty * m * (math.log(n / m) + 1) if m else 0.0)


def brute_kts(X, penalty, max_cp):
    n = len(X)
    best = (math.inf, ())
    for m in range(max_cp + 1):
        for cps in itertools.combinations(range(1, n), m):
            val = kts_objective(X, cps, penalty)
            if val < best[0] - 1e-9:
                best = (val, cps)
    return best


def brute_knapsack(values, lengths, cap):
    """Optimal value and the lexicographically smallest optimal index tuple.

    Zero-value items are left out since they cannot change the objective.
    """
    useful = [i for i, v in enumerate(values) if v > 0]
    feasible = [
        combo
        for r in range(len(useful) + 1)
        for combo in itertools.combinations(useful, r)
        if sum(lengths[i] for i in combo) <= cap
    ]
    best = max(sum(values[i] for i in c) for c in feasible)
    optimal = [c for c in feasible if sum(values[i] for i in c) >= best - 1e-9]
    return best, min(optimal)


def blocks(lengths, dim, rng=None, noise=0.0):
    rows = []
    for i, length in enumerate(lengths):
        e = np.zeros(dim)
        e[i] = 1.0
        rows.append(np.tile(e, (length, 1)))
    X = np.vstack(rows)
    if noise:
        X = X + noise * np.abs(rng.normal(size=X.shape))
    return X


class TestFrameScores:
    def test_empty(self):
        np.testing.assert_array_equal(frame_scores([], 6), np.zeros(6))

    def test_single_segment(self):
        np.testing.assert_allclose(frame_scores([(2, 5, 0.8)], 7), [0, 0, 0.8, 0.8, 0.8, 0, 0])

    @pytest.mark.parametrize("seed", range(5))
    def test_overlap_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        segs = []
        for _ in range(8):
            s = rng.uniform(0, 25)
            segs.append((s, s + rng.uniform(1, 8), rng.uniform()))
        want = [max([sc for s, e, sc in segs if s <= f < e], default=0.0) for f in range(30)]
        np.testing.assert_allclose(frame_scores(segs, 30), want)


class TestKTS:
    def test_constant_features(self):
        assert kts(np.ones((30, 4))).change_points.tolist() == []

    def test_two_orthogonal_blocks(self):
        assert kts(blocks([10, 10], 3)).change_points.tolist() == [10]

    def test_three_blocks_recovered(self):
        rng = np.random.default_rng(0)
        X = blocks([12, 15, 13], 4, rng, noise=0.1)
        cps = kts(X, penalty=1.0).change_points
        assert len(cps) == 2
        assert abs(cps[0] - 12) <= 1 and abs(cps[1] - 27) <= 1

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_exhaustive_search(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(6, 13))
        X = np.abs(rng.normal(size=(n, 3)))
        X[n // 2:] += 2 * rng.uniform(size=3)
        penalty = float(rng.uniform(0.05, 1.0))
        max_cp = 3
        val, cps = brute_kts(X, penalty, max_cp)
        got = kts(X, penalty, max_cp).change_points.tolist()
        assert kts_objective(X, got, penalty) == pytest.approx(val, abs=1e-9)
        assert got == list(cps)

    def test_scale_invariance_with_scaled_penalty(self):
        rng = np.random.default_rng(1)
        X = blocks([8, 11, 9], 4, rng, noise=0.3)
        base = kts(X, penalty=0.5).change_points
        alpha = 3.0
        np.testing.assert_array_equal(kts(alpha * X, penalty=0.5 * alpha**2).change_points, base)

    @pytest.mark.parametrize("seed", range(5))
    def test_doubling_features_never_reduces_shots(self, seed):
        X = np.abs(np.random.default_rng(seed).normal(size=(40, 5)))
        assert len(kts(2 * X, 1.0).change_points) >= len(kts(X, 1.0).change_points)

    def test_default_max_cp(self):
        rng = np.random.default_rng(2)
        X = np.eye(30)[rng.permutation(30)]  # every frame its own direction
        assert len(kts(X, penalty=0.0).change_points) == 3

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            kts(np.ones((1, 3)))
        with pytest.raises(ValueError):
            ShotBoundaries(np.array([5, 3]), 10)


class TestKnapsack:
    def test_too_long(self):
        assert knapsack_select([5.0], [10], 4) == []

    def test_small_example(self):
        assert knapsack_select([6, 10, 12], [1, 2, 3], 5) == [1, 2]

    def test_ties_prefer_earlier_indices(self):
        assert knapsack_select([1.0, 1.0, 1.0], [2, 2, 2], 4) == [0, 1]

    def test_zero_value_shots_skipped(self):
        assert knapsack_select([0.0, 0.5, 0.0], [1, 2, 1], 10) == [1]

    @pytest.mark.parametrize("seed", range(20))
    def test_exhaustive_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = 15
        values = rng.uniform(0, 1, n).round(3).tolist()
        lengths = rng.integers(1, 12, n).tolist()
        cap = int(0.4 * sum(lengths))
        best, combo = brute_knapsack(values, lengths, cap)
        got = knapsack_select(values, lengths, cap)
        assert sum(lengths[i] for i in got) <= cap
        assert sum(values[i] for i in got) == pytest.approx(best, abs=1e-9)
        assert got == list(combo)

    def test_nonpositive_length_rejected(self):
        with pytest.raises(ValueError):
            knapsack_select([1.0], [0], 5)


class TestPipeline:
    def config(self, **kw):
        return RunConfig(**{"feat_dim": 8, "hidden": 6, "anchor_scales": (4, 8), **kw})

    @pytest.mark.parametrize("seed", range(10))
    def test_cap_and_whole_shots(self, seed):
        cfg = self.config()
        rng = np.random.default_rng(seed)
        n = int(rng.integers(20, 120))
        video = np.abs(rng.normal(size=(n, 8))).astype(np.float32)
        s = make_summary(video, cfg, init_params(cfg.model_config(), seed))
        assert s.mask.sum() <= math.floor(0.15 * n)
        shots = ShotBoundaries(s.change_points, n).shots()
        for a, b in shots:
            assert s.mask[a:b].all() or not s.mask[a:b].any()

    def test_deterministic(self):
        cfg = self.config()
        video = np.abs(np.random.default_rng(0).normal(size=(60, 8))).astype(np.float32)
        params = init_params(cfg.model_config(), 0)
        assert make_summary(video, cfg, params).to_json("v") == make_summary(video, cfg, params).to_json("v")

    def test_zero_weight_model_still_summarizes(self):
        cfg = self.config()
        params = {k: np.zeros_like(v) for k, v in init_params(cfg.model_config(), 0).items()}
        for k in params:
            if k.endswith("ln.g"):
                params[k] = np.ones_like(params[k])
        video = np.abs(np.random.default_rng(1).normal(size=(50, 8))).astype(np.float32)
        s = make_summary(video, cfg, params)
        assert len(s.segments) > 0
        np.testing.assert_allclose(s.segments[:, 2], 0.5)
        assert 0 < s.mask.sum() <= 7

    def test_dead_and_degenerate_segments_dropped(self):
        scores = np.array([[0.005, 0.9]])
        offsets = np.zeros((1, 2, 2))
        offsets[0, 1, 1] = -10.0  # shrinks the anchor below one frame
        assert len(refine_and_suppress(scores, offsets, 1, (4, 8))) == 0

    @pytest.mark.parametrize("seed", range(5))
    def test_oracle_scores_recover_keyshots(self, seed):
        spec = SyntheticSpec(seed=seed)
        feats, keys, _ = synth_video(spec, np.random.default_rng(seed))
        segs = [(s, e, 1.0) for s, e in keys]
        s = summarize_scores(feats, segs, 0.15)
        truth = np.zeros(len(feats), bool)
        for a, b in keys:
            truth[a:b] = True
        assert f1_against_users(s.mask, [truth]) >= 0.9

    def test_json_mask_is_run_length(self):
        s = summarize_scores(blocks([10, 10], 3), [(10, 13, 0.9)], 0.15)
        d = s.to_json_dict("v")
        assert d["video_id"] == "v"
        assert all(b - a <= 3 for a, b in d["mask"])
