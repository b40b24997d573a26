"""Multi-task loss, training loop, F1 evaluation, cross-validation and gradient checks."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ModelConfig, RunConfig, TrainConfig
from .dataio import Manifest, mask_to_runs, split_folds
from .numcore import AdamState, Tensor, adam_step, backward, precision, smooth_l1, softplus
from .pooling_heads import PredictionSet, as_trainable, check_params, init_params, model_forward
from .proposals import (
    NEG_INCOMPLETE,
    NEG_UNIMPORTANT,
    POSITIVE,
    AnchorConfig,
    anchor_bounds,
    sample_indices,
    tiou_matrix,
)
from .summarize import make_summary

log = logging.getLogger(__name__)

PARAMS_FORMAT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class Sample:
    """Flattened (t * K + k) anchor indices with targets for one video."""

    index: np.ndarray
    target: np.ndarray
    pos_index: np.ndarray
    offsets: np.ndarray

    def __len__(self):
        return len(self.index)


def draw_sample(n: int, gts, acfg: AnchorConfig, rng: np.random.Generator) -> Sample:
    """Vectorized label assignment and sampling over all N*K anchors."""
    gts = np.asarray(gts, dtype=float).reshape(-1, 2)
    if len(gts) == 0:
        raise ValueError("a training video needs at least one ground-truth segment")
    starts, ends = anchor_bounds(n, acfg.scales)
    starts, ends = starts.reshape(-1), ends.reshape(-1)
    ious = tiou_matrix(starts, ends, gts[:, 0], gts[:, 1])
    best = ious.max(axis=1)
    match = ious.argmax(axis=1)
    picked = sample_indices(best, acfg, rng)
    pos = picked[POSITIVE]
    neg = np.concatenate([picked[NEG_UNIMPORTANT], picked[NEG_INCOMPLETE]])
    index = np.concatenate([pos, neg])
    target = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    g = gts[match[pos]]
    lp = ends[pos] - starts[pos]
    dc = (0.5 * (g[:, 0] + g[:, 1]) - 0.5 * (starts[pos] + ends[pos])) / lp
    dl = np.log((g[:, 1] - g[:, 0]) / lp)
    return Sample(index, target, pos, np.column_stack([dc, dl]))


def sample_from_labeled(labeled, n_scales: int) -> Sample:
    """Convert a list of LabeledProposal into a flattened Sample."""
    labeled = [lp for lp in labeled if lp.label in (POSITIVE, NEG_UNIMPORTANT, NEG_INCOMPLETE)]
    index = np.array([lp.proposal.t * n_scales + lp.proposal.k for lp in labeled], dtype=np.intp)
    target = np.array([1.0 if lp.label == POSITIVE else 0.0 for lp in labeled])
    pos = [lp for lp in labeled if lp.label == POSITIVE]
    pos_index = np.array([lp.proposal.t * n_scales + lp.proposal.k for lp in pos], dtype=np.intp)
    offsets = np.array([lp.offset_target for lp in pos], dtype=float).reshape(-1, 2)
    return Sample(index, target, pos_index, offsets)


def loss_terms(preds: PredictionSet, sample: Sample):
    """(classification BCE, localization smooth-L1) as scalar tensors."""
    if len(sample) == 0:
        raise ValueError("loss needs a non-empty sample")
    dtype = preds.logits.dtype
    z = preds.logits.reshape(-1)[sample.index]
    y = Tensor(sample.target, dtype=dtype)
    cls = (softplus(z) - z * y).mean()
    if len(sample.pos_index) == 0:
        return cls, Tensor(0.0, dtype=dtype)
    off = preds.offsets.reshape(-1, 2)[sample.pos_index]
    loc = smooth_l1(off - Tensor(sample.offsets, dtype=dtype)).mean()
    return cls, loc


def multi_task_loss(preds: PredictionSet, sample, balance: float = 1.0, n_scales: int | None = None) -> Tensor:
    """BCE over sampled anchors plus ``balance`` times smooth-L1 over positives."""
    if not isinstance(sample, Sample):
        sample = sample_from_labeled(sample, n_scales or preds.logits.shape[1])
    cls, loc = loss_terms(preds, sample)
    return cls + loc * balance


def video_gt(video) -> list:
    """Ground-truth segments of a manifest entry, falling back to the user-majority mask."""
    if video.gt_segments:
        return [list(s) for s in video.gt_segments]
    masks = np.array(video.user_masks())
    return mask_to_runs(masks.mean(axis=0) >= 0.5) or mask_to_runs(masks.any(axis=0))


@dataclass
class TrainResult:
    params: dict
    history: list  # (epoch, loss_cls, loss_loc, total)


def train(data, cfg: ModelConfig, tcfg: TrainConfig, acfg: AnchorConfig | None = None,
          params: dict | None = None) -> TrainResult:
    """Adam training, one video per step, seeded shuffling and label sampling.

    ``data`` is a list of ``(features, gt_segments)`` pairs.
    """
    if not data:
        raise ValueError("training set is empty")
    acfg = acfg or AnchorConfig(scales=cfg.anchor_scales)
    if tuple(acfg.scales) != tuple(cfg.anchor_scales):
        raise ValueError("anchor config scales differ from model config scales")
    seeds = np.random.SeedSequence(tcfg.seed).spawn(4)
    init_rng, order_rng, label_rng, drop_rng = (np.random.default_rng(s) for s in seeds)
    params = as_trainable(params if params is not None else init_params(cfg, init_rng))
    state = AdamState()
    history = []
    for epoch in range(tcfg.epochs):
        sums = np.zeros(3)
        for i in order_rng.permutation(len(data)):
            feats, gts = data[i]
            sample = draw_sample(len(feats), gts, acfg, label_rng)
            try:
                preds = model_forward(feats, cfg, params, training=True, rng=drop_rng)
                cls, loc = loss_terms(preds, sample)
                total = cls + loc * tcfg.loss_balance
            except FloatingPointError as exc:
                raise TrainingDiverged(f"epoch {epoch}, video {i}: {exc}") from None
            if not np.isfinite(total.item()):
                raise TrainingDiverged(f"epoch {epoch}, video {i}: non-finite loss")
            for p in params.values():
                p.zero_grad()
            backward(total)
            grads = {k: p.grad for k, p in params.items() if p.grad is not None}
            adam_step(params, grads, state, tcfg.lr, weight_decay=tcfg.weight_decay)
            sums += (cls.item(), loc.item(), total.item())
        mean = sums / len(data)
        history.append((epoch, float(mean[0]), float(mean[1]), float(mean[2])))
        log.debug("epoch %d loss %.5f", epoch, mean[2])
    return TrainResult({k: p.data for k, p in params.items()}, history)


def write_history_csv(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss_cls", "loss_loc", "total"])
        for row in history:
            w.writerow([row[0], *(f"{v:.8g}" for v in row[1:])])


# ---------------------------------------------------------------------------
# parameter files


def save_params(path, params: dict, config: RunConfig) -> None:
    meta = json.dumps({"version": PARAMS_FORMAT_VERSION, "config": config.to_dict()})
    arrays = {k: np.asarray(v.data if isinstance(v, Tensor) else v) for k, v in params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(meta), **arrays)


def load_params(path, config: RunConfig | None = None) -> dict:
    """Load parameters; with ``config`` given, shapes are checked against it."""
    with np.load(path, allow_pickle=False) as z:
        if "__meta__" not in z.files:
            raise ValueError(f"{path}: not a parameter file")
        meta = json.loads(str(z["__meta__"]))
        if meta.get("version") != PARAMS_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported parameter format version {meta.get('version')}")
        params = {k: z[k] for k in z.files if k != "__meta__"}
    if config is not None:
        check_params(config.model_config(), params)
    return params


# ---------------------------------------------------------------------------
# evaluation


def f1_against_users(pred, users, mode: str = "max_over_users") -> float:
    pred = np.asarray(pred, dtype=bool)
    scores = []
    for user in users:
        user = np.asarray(user, dtype=bool)
        if user.shape != pred.shape:
            raise ValueError(f"mask length mismatch: {pred.shape} vs {user.shape}")
        overlap = np.count_nonzero(pred & user)
        p = overlap / pred.sum() if pred.any() else 0.0
        r = overlap / user.sum() if user.any() else 0.0
        scores.append(0.0 if p + r == 0 else 2 * p * r / (p + r))
    if not scores:
        raise ValueError("no user summaries to compare against")
    if mode == "max_over_users":
        return float(max(scores))
    if mode == "mean_over_users":
        return float(np.mean(scores))
    raise ValueError(f"unknown F1 mode {mode!r}")


def reference_masks(video) -> list:
    return video.user_masks() if video.user_summaries else [video.gt_mask()]


def evaluate(manifest: Manifest, config: RunConfig, params) -> dict:
    """Per-video F1 of generated summaries plus the mean."""
    per_video = {}
    for v in manifest.videos:
        summary = make_summary(manifest.features(v), config, params)
        per_video[v.id] = f1_against_users(summary.mask, reference_masks(v), manifest.f1_mode)
    return {"videos": per_video, "mean_f1": float(np.mean(list(per_video.values())))}


def training_pairs(manifest: Manifest) -> list:
    return [(manifest.features(v), video_gt(v)) for v in manifest.videos]


def cross_validate(manifest: Manifest, config: RunConfig, train_fraction: float = 0.8) -> dict:
    """Seeded k-fold training and evaluation; reports per-fold and mean F1."""
    folds = split_folds(len(manifest.videos), config.folds, train_fraction, config.seed)
    results = []
    for i, (train_idx, test_idx) in enumerate(folds):
        result = train(training_pairs(manifest.subset(train_idx)), config.model_config(),
                       config.train_config(), config.anchor_config())
        report = evaluate(manifest.subset(test_idx), config, result.params)
        report["fold"] = i
        report["test_videos"] = [manifest.videos[j].id for j in test_idx]
        results.append(report)
    fold_f1 = [r["mean_f1"] for r in results]
    return {"folds": results, "fold_f1": fold_f1, "mean_f1": float(np.mean(fold_f1)),
            "std_f1": float(np.std(fold_f1))}


# ---------------------------------------------------------------------------
# gradient check


def tiny_config(mixer: str, pooling: str) -> ModelConfig:
    return ModelConfig(mixer=mixer, pooling=pooling, anchor_scales=(2, 4), feat_dim=6,
                       hidden=4, fc_depth=2, dropout=0.25, nystrom_landmarks=4)


def gradient_check(cfg: ModelConfig, n_frames: int = 10, seed: int = 0, step: float = 1e-6) -> float:
    """Worst relative error between backprop and central differences.

    Runs in float64 over every entry of every parameter. The error of a
    parameter group is max|analytic - numeric| / max(max|analytic|, max|numeric|).
    """
    rng = np.random.default_rng(seed)
    with precision(np.float64):
        base = {k: v.astype(np.float64) for k, v in init_params(cfg, rng).items()}
        for k in base:
            if k.endswith(".b") or k.endswith("_b"):
                base[k] = base[k] + 0.1 * rng.standard_normal(base[k].shape)
        video = rng.standard_normal((n_frames, cfg.feat_dim))
        acfg = AnchorConfig(scales=cfg.anchor_scales, min_neg=4)
        gt = [[2, 6]]
        sample = draw_sample(n_frames, gt, acfg, rng)
        drop_seed = int(rng.integers(2**31))

        def loss_of(params):
            preds = model_forward(video, cfg, params, training=True, rng=np.random.default_rng(drop_seed))
            return multi_task_loss(preds, sample)

        tracked = as_trainable(base, dtype=np.float64)
        backward(loss_of(tracked))

        worst = 0.0
        for name, p in tracked.items():
            analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
            numeric = np.zeros_like(p.data)
            probe = {k: Tensor(v, dtype=np.float64) for k, v in base.items()}
            arr = probe[name].data
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + step
                up = loss_of(probe).item()
                arr[idx] = orig - step
                down = loss_of(probe).item()
                arr[idx] = orig
                numeric[idx] = (up - down) / (2 * step)
            scale = max(np.abs(analytic).max(), np.abs(numeric).max())
            if scale == 0:
                continue
            worst = max(worst, float(np.abs(analytic - numeric).max() / scale))
    return worst


__all__ = [
    "Sample",
    "TrainResult",
    "TrainingDiverged",
    "cross_validate",
    "draw_sample",
    "evaluate",
    "f1_against_users",
    "gradient_check",
    "load_params",
    "loss_terms",
    "multi_task_loss",
    "save_params",
    "tiny_config",
    "train",
    "write_history_csv",
]
