"""Acceptance suite: one test per criterion, each logging a pass/fail line."""
import itertools
import math
import os
import time

import numpy as np
import pytest

from edsnet.bench import run_bench
from edsnet.config import MIXERS, POOLINGS, ModelConfig, RunConfig
from edsnet.dataio import SyntheticSpec, gen_synthetic, load_manifest
from edsnet.mixers import dwt_mix, fourier_mix, init_mixer_params, nystrom_attention, softmax_attention
from edsnet.numcore import precision
from edsnet.pooling_heads import count_params, fft_pool_transform, init_params
from edsnet.proposals import (
    NEG_INCOMPLETE,
    NEG_UNIMPORTANT,
    POSITIVE,
    AnchorConfig,
    assign_labels,
    generate_anchors,
    nms,
)
from edsnet.summarize import knapsack_select, kts, make_summary
from edsnet.train_eval import cross_validate, evaluate, gradient_check, tiny_config, train, training_pairs

# ---------------------------------------------------------------------------
# independent reference implementations


def dft_mat(n):
    j = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(j, j) / n)


def ref_softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def ref_attention(x, p):
    return ref_softmax((x @ p["wq"]) @ (x @ p["wk"]).T / math.sqrt(x.shape[1])) @ (x @ p["wv"])


def ref_dwt(x, p):
    n = len(x)
    if n % 2:
        x = np.vstack([x, x[-1:]])
    a = (x[0::2] + x[1::2]) / math.sqrt(2)
    d = (x[0::2] - x[1::2]) / math.sqrt(2)
    u = a @ p["fc1_w"] + p["fc1_b"]
    u = 0.5 * u * (1 + np.tanh(math.sqrt(2 / math.pi) * (u + 0.044715 * u**3)))
    h = np.hstack([u @ p["fc2_w"] + p["fc2_b"], d])
    h = (h - h.mean(1, keepdims=True)) / np.sqrt(h.var(1, keepdims=True) + 1e-5) * p["ln_g"] + p["ln_b"]
    out = np.empty((2 * len(h), p["up_w"].shape[2]))
    out[0::2] = h @ p["up_w"][0] + p["up_b"]
    out[1::2] = h @ p["up_w"][1] + p["up_b"]
    return out[:n]


def seg_iou(a, b):
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    return inter / ((a[1] - a[0]) + (b[1] - b[0]) - inter)


def ref_nms(segs, scores, thr):
    left = list(range(len(segs)))
    keep = []
    while left:
        i = min(left, key=lambda j: (-scores[j], segs[j][0], segs[j][1] - segs[j][0]))
        keep.append(i)
        left = [j for j in left if j != i and seg_iou(segs[i], segs[j]) <= thr]
    return keep


def ref_knapsack(values, lengths, cap):
    useful = [i for i, v in enumerate(values) if v > 0]
    feasible = [c for r in range(len(useful) + 1) for c in itertools.combinations(useful, r)
                if sum(lengths[i] for i in c) <= cap]
    best = max(sum(values[i] for i in c) for c in feasible)
    return list(min(c for c in feasible if sum(values[i] for i in c) >= best - 1e-9))


def ref_kts(X, penalty, max_cp):
    n = len(X)

    def objective(cps):
        edges = [0, *cps, n]
        cost = sum(((X[a:b] - X[a:b].mean(0)) ** 2).sum() for a, b in zip(edges[:-1], edges[1:]))
        m = len(cps)
        return cost + (penalty * m * (math.log(n / m) + 1) if m else 0.0)

    candidates = [c for m in range(max_cp + 1) for c in itertools.combinations(range(1, n), m)]
    return list(min(candidates, key=objective))


def f64(params):
    return {k: np.asarray(v, np.float64) for k, v in params.items()}


# ---------------------------------------------------------------------------


def test_criterion_1_oracle_equivalence(criteria):
    t0 = time.perf_counter()
    failures = {}
    instances = 20
    for seed in range(instances):
        rng = np.random.default_rng(1000 + seed)
        with precision(np.float64):
            n, f = int(rng.integers(1, 12)), int(rng.integers(1, 7))
            x = rng.normal(size=(n, f))
            ok = np.allclose(fourier_mix(x).data, (dft_mat(n) @ x @ dft_mat(f).T).real, atol=1e-5)
            failures.setdefault("fourier_mix", 0)
            failures["fourier_mix"] += not ok

            ok = np.allclose(fft_pool_transform(x).data, (dft_mat(n) @ x).real, atol=1e-5)
            failures.setdefault("fft_pool_transform", 0)
            failures["fft_pool_transform"] += not ok

            p = f64(init_mixer_params("softmax", f, rng))
            ok = np.allclose(softmax_attention(x, p).data, ref_attention(x, p), atol=1e-5)
            failures.setdefault("softmax_attention", 0)
            failures["softmax_attention"] += not ok

            p = f64(init_mixer_params("dwt", f, rng))
            for key in ("fc1_b", "fc2_b", "ln_b", "up_b"):
                p[key] = rng.normal(size=p[key].shape)
            ok = np.allclose(dwt_mix(x, p).data, ref_dwt(x, p), atol=1e-5)
            failures.setdefault("dwt_mix", 0)
            failures["dwt_mix"] += not ok

        starts = rng.integers(0, 30, 12)
        segs = np.column_stack([starts, starts + rng.integers(1, 12, 12)]).astype(float)
        scores = rng.choice([0.3, 0.5, 0.8, 0.9], 12)
        failures.setdefault("nms", 0)
        failures["nms"] += nms(segs, scores, 0.5).tolist() != ref_nms(segs.tolist(), scores.tolist(), 0.5)

        values = rng.uniform(0, 1, 12).round(2).tolist()
        lengths = rng.integers(1, 10, 12).tolist()
        cap = int(rng.integers(5, 30))
        failures.setdefault("knapsack_select", 0)
        failures["knapsack_select"] += knapsack_select(values, lengths, cap) != ref_knapsack(values, lengths, cap)

        m = int(rng.integers(6, 12))
        X = np.abs(rng.normal(size=(m, 3)))
        X[m // 2:] += rng.uniform(0, 3, 3)
        pen = float(rng.uniform(0.05, 1))
        failures.setdefault("kts", 0)
        failures["kts"] += kts(X, pen, 3).change_points.tolist() != ref_kts(X, pen, 3)
    elapsed = time.perf_counter() - t0
    bad = {k: v for k, v in failures.items() if v}
    passed = not bad and elapsed < 60
    criteria.record(1, passed, f"{len(failures)} operations x {instances} instances, mismatches={bad or 0}, "
                               f"{elapsed:.1f}s")
    assert passed


def test_criterion_2_nystrom_consistency(criteria):
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 33))
        x = rng.normal(size=(n, 8))
        p = f64(init_mixer_params("nystrom", 8, rng))
        with precision(np.float64):
            got = nystrom_attention(x, p, n, exact_inverse=True).data
        worst = max(worst, np.abs(got - ref_attention(x, p)).max())
    errs = {m: [] for m in (2, 4, 8, 16)}
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        x = rng.normal(size=(64, 8))
        p = f64(init_mixer_params("nystrom", 8, rng))
        exact = ref_attention(x, p)
        with precision(np.float64):
            for m in errs:
                errs[m].append(np.linalg.norm(nystrom_attention(x, p, m).data - exact))
    means = [float(np.mean(errs[m])) for m in sorted(errs)]
    monotone = all(b <= a for a, b in zip(means, means[1:]))
    passed = worst <= 1e-3 and monotone
    criteria.record(2, passed, f"m=N max error {worst:.2e} (tol 1e-3); mean error for m=2,4,8,16: "
                               + ", ".join(f"{v:.3f}" for v in means))
    assert passed


def test_criterion_3_gradient_integrity(criteria):
    t0 = time.perf_counter()
    errors = {(m, p): gradient_check(tiny_config(m, p)) for m in MIXERS for p in POOLINGS}
    elapsed = time.perf_counter() - t0
    worst_cfg = max(errors, key=errors.get)
    passed = len(errors) == 12 and max(errors.values()) < 1e-3 and elapsed < 300
    criteria.record(3, passed, f"12 configs, worst {errors[worst_cfg]:.2e} at {worst_cfg[0]}+{worst_cfg[1]} "
                               f"(tol 1e-3), {elapsed:.1f}s")
    assert passed


def test_criterion_4_labeling_contract(criteria):
    cfg = AnchorConfig(scales=(4, 8))
    props = generate_anchors(40, cfg)
    gt = (8, 16)
    truth = {(p.t, p.k): seg_iou((p.start, p.end), gt) for p in props}
    assert len(truth) == 80
    n_pos = sum(v > 0.6 for v in truth.values())
    problems = []
    for seed in range(20):
        out = assign_labels(props, [gt], cfg, np.random.default_rng(seed))
        count = {POSITIVE: 0, NEG_UNIMPORTANT: 0, NEG_INCOMPLETE: 0}
        for lp in out:
            count[lp.label] += 1
            iou = truth[(lp.proposal.t, lp.proposal.k)]
            if 0.3 <= iou <= 0.6:
                problems.append(f"seed {seed}: sampled tIoU {iou:.2f}")
        neg = count[NEG_UNIMPORTANT] + count[NEG_INCOMPLETE]
        if count[POSITIVE] != n_pos or abs(neg - 3 * n_pos) > 1:
            problems.append(f"seed {seed}: ratio {count[POSITIVE]}:{neg}")
        if abs(count[NEG_UNIMPORTANT] - 2 * neg / 3) > 1 or abs(count[NEG_INCOMPLETE] - neg / 3) > 1:
            problems.append(f"seed {seed}: split {count[NEG_UNIMPORTANT]}/{count[NEG_INCOMPLETE]}")
    passed = not problems and n_pos > 0
    criteria.record(4, passed, f"{n_pos} positives, {3 * n_pos} negatives expected over 20 seeds; "
                               f"violations: {problems[:3] or 'none'}")
    assert passed


def test_criterion_5_efficiency_ratios(criteria):
    t0 = time.perf_counter()
    ratio = count_params(ModelConfig(mixer="fourier")) / count_params(ModelConfig(mixer="softmax"))
    report = run_bench(("softmax", "fourier", "nystrom"), (256, 512, 1024, 2048, 4096, 8192), dim=64,
                       trials=5, landmarks=16)
    s = report.slopes
    elapsed = time.perf_counter() - t0
    passed = ratio < 0.40 and s["softmax"] >= 1.7 and s["fourier"] <= 1.35 and s["nystrom"] <= 1.35 and elapsed < 600
    criteria.record(5, passed, f"param ratio {ratio:.3f} (<0.40); slopes softmax {s['softmax']:.2f} (>=1.7), "
                               f"fourier {s['fourier']:.2f} (<=1.35), nystrom {s['nystrom']:.2f} (<=1.35), "
                               f"{elapsed:.1f}s")
    assert passed


@pytest.fixture(scope="module")
def planted(tmp_path_factory):
    spec = SyntheticSpec(n_videos=10, n_frames=200, snr=3.0, seed=7)
    return gen_synthetic(spec, tmp_path_factory.mktemp("planted"))


def test_criterion_6_end_to_end_learning(criteria, planted):
    t0 = time.perf_counter()
    run = RunConfig(mixer="softmax", pooling="roi", feat_dim=64, hidden=32, anchor_scales=(8, 16), epochs=100,
                    seed=7)
    data = training_pairs(planted)
    untrained = train(data, run.model_config(), run.train_config().__class__(epochs=0, seed=run.seed))
    f1_before = evaluate(planted, run, untrained.params)["mean_f1"]
    result = train(data, run.model_config(), run.train_config(), run.anchor_config())
    first, last = result.history[0][3], result.history[-1][3]
    f1_after = evaluate(planted, run, result.params)["mean_f1"]
    elapsed = time.perf_counter() - t0
    drop = 1 - last / first
    passed = drop >= 0.5 and f1_after >= 0.6 and f1_before < 0.3 and elapsed < 900
    criteria.record(6, passed, f"loss {first:.3f} -> {last:.3f} ({100 * drop:.0f}% drop, need >=50%); "
                               f"F1 untrained {f1_before:.3f} (<0.3), trained {f1_after:.3f} (>=0.6); {elapsed:.1f}s")
    assert passed


def test_criterion_7_pipeline_caps(criteria):
    rng = np.random.default_rng(2024)
    worst = -math.inf
    violations = 0
    for i in range(100):
        n = int(rng.integers(10, 260))
        scales = tuple(sorted(rng.choice([2, 4, 8, 12, 16], size=int(rng.integers(1, 4)), replace=False).tolist()))
        run = RunConfig(mixer=str(rng.choice(MIXERS)), pooling=str(rng.choice(POOLINGS)), feat_dim=16, hidden=8,
                        anchor_scales=scales, kts_penalty=float(rng.uniform(0.1, 2)))
        video = np.abs(rng.normal(size=(n, 16))).astype(np.float32)
        summary = make_summary(video, run, init_params(run.model_config(), i))
        cap = math.floor(0.15 * n)
        worst = max(worst, int(summary.mask.sum()) - cap)
        violations += summary.mask.sum() > cap
    passed = violations == 0
    criteria.record(7, passed, f"100 randomized runs, {violations} cap violations, max(selected - cap) = {worst}")
    assert passed


def test_criterion_8_determinism(criteria, planted):
    run = RunConfig(mixer="dwt", pooling="fft", feat_dim=64, hidden=16, anchor_scales=(8, 16), epochs=4, seed=11)
    small = planted.subset(range(4))

    def once():
        res = train(training_pairs(small), run.model_config(), run.train_config(), run.anchor_config())
        masks = [make_summary(small.features(v), run, res.params).mask.tobytes() for v in small.videos]
        return res.history, masks

    h1, m1 = once()
    h2, m2 = once()
    passed = h1 == h2 and m1 == m2
    criteria.record(8, passed, f"two seeded runs: histories {'identical' if h1 == h2 else 'differ'}, "
                               f"masks {'identical' if m1 == m2 else 'differ'}")
    assert passed


@pytest.mark.skipif("EDSNET_TVSUM_MANIFEST" not in os.environ,
                    reason="optional: set EDSNET_TVSUM_MANIFEST to a converted TVSum manifest")
def test_criterion_9_optional_tvsum_reproduction(criteria):
    manifest = load_manifest(os.environ["EDSNET_TVSUM_MANIFEST"])
    run = RunConfig(mixer="fourier", pooling="fft", anchor_scales=(4, 8, 12), seed=0)
    f1 = 100 * cross_validate(manifest, run)["mean_f1"]
    passed = abs(f1 - 62.88) <= 3.0
    criteria.record(9, passed, f"cross-validated F1 {f1:.2f} vs reference 62.88 +/- 3.0 (not gating)")
    assert passed
