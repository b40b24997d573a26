"""Segment pooling (ROI / FFT / flat), the classification-localization head and
the whole-model forward pass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .mixers import encoder_forward, init_encoder_params, linear_init
from .numcore import (
    Tensor,
    as_tensor,
    concat,
    dft_real,
    layer_norm,
    relu,
    sigmoid,
    stack,
    take_rows,
)
from .proposals import anchor_bounds


@dataclass
class SegmentFeatures:
    coarse: Tensor
    fine: Tensor


@dataclass
class PredictionSet:
    """Per-anchor logits (N, K) and (dc, dl) offsets (N, K, 2)."""

    logits: Tensor
    offsets: Tensor

    @property
    def scores(self) -> np.ndarray:
        return sigmoid(self.logits.detach()).data

    @property
    def score_tensor(self) -> Tensor:
        return sigmoid(self.logits)


# ---------------------------------------------------------------------------
# segment extraction


def segment_rows(start: float, end: float, n: int) -> np.ndarray:
    """Integer frames i with max(start, 0) <= i < min(end, n)."""
    lo = math.ceil(max(start, 0.0))
    hi = math.ceil(min(end, float(n)))
    if hi <= lo:
        raise ValueError(f"segment [{start}, {end}) has no frames inside [0, {n})")
    return np.arange(lo, hi)


def extract_segment(features, proposal, n: int):
    start, end = (proposal.start, proposal.end) if hasattr(proposal, "start") else proposal
    rows = segment_rows(start, end, n)
    if isinstance(features, Tensor):
        return take_rows(features, rows)
    return np.asarray(features)[rows]


def segment_index(n: int, scale: int):
    """Row indices (n, scale) of every anchor of one scale, right-padded with ``n``.

    Index ``n`` points at an appended zero row. Also returns the true row counts.
    """
    starts, ends = anchor_bounds(n, (scale,))
    lo = np.ceil(np.clip(starts[:, 0], 0, n)).astype(np.intp)
    hi = np.ceil(np.clip(ends[:, 0], 0, n)).astype(np.intp)
    counts = hi - lo
    offs = np.arange(scale)[None, :]
    idx = lo[:, None] + offs
    idx = np.where(offs < counts[:, None], idx, n)
    return idx, counts


# ---------------------------------------------------------------------------
# pooling transforms


def roi_pool(segment) -> Tensor:
    segment = as_tensor(segment)
    if segment.shape[0] < 1:
        raise ValueError("cannot pool an empty segment")
    return segment.mean(axis=0)


def fft_pool_transform(segment) -> Tensor:
    """Real part of the per-channel DFT along time."""
    return dft_real(as_tensor(segment), axis=0)


def flat_pool_transform(segment):
    return segment


def pad_rows(segment, length: int) -> Tensor:
    segment = as_tensor(segment)
    if segment.shape[0] > length:
        raise ValueError("segment longer than its anchor scale")
    if segment.shape[0] == length:
        return segment
    pad = Tensor(np.zeros((length - segment.shape[0],) + segment.shape[1:]), dtype=segment.dtype)
    return concat([segment, pad], axis=0)


def coarse_fine(transformed, k: int, params, scales) -> SegmentFeatures:
    """Coarse = temporal mean; fine = per-scale FC over the flattened segment."""
    if not 0 <= k < len(scales):
        raise IndexError(f"scale index {k} out of range for {len(scales)} scales")
    transformed = as_tensor(transformed)
    if transformed.shape[0] != scales[k]:
        raise ValueError(f"segment must have exactly {scales[k]} rows, got {transformed.shape[0]}")
    coarse = transformed.mean(axis=0)
    flat = transformed.reshape(1, -1)
    fine = flat @ params[f"head.fine{k}.w"] + params[f"head.fine{k}.b"]
    return SegmentFeatures(coarse, fine.reshape(-1))


def _shared(x, params):
    h = relu(x @ params["head.shared.w"] + params["head.shared.b"])
    return layer_norm(h, params["head.ln.g"], params["head.ln.b"])


def head_logits(seg: SegmentFeatures, params, mode: str):
    """(classification logit, (dc, dl)) tensors for pooled features."""
    coarse_in = as_tensor(seg.coarse)
    fine_in = coarse_in if mode == "roi" else as_tensor(seg.fine)
    logit = _shared(coarse_in, params) @ params["head.cls.w"] + params["head.cls.b"]
    offsets = _shared(fine_in, params) @ params["head.reg.w"] + params["head.reg.b"]
    return logit, offsets


def heads_forward(seg: SegmentFeatures, params, mode: str):
    """Score in (0, 1) from the coarse path and (dc, dl) from the fine path.

    In ROI mode both branches read the single pooled vector.
    """
    logit, offsets = head_logits(seg, params, mode)
    return sigmoid(logit), offsets


# ---------------------------------------------------------------------------
# parameters


def init_head_params(cfg: ModelConfig, rng: np.random.Generator) -> dict:
    H = cfg.hidden
    params = {}
    if cfg.pooling != "roi":
        for k, scale in enumerate(cfg.anchor_scales):
            params[f"head.fine{k}.w"] = linear_init(rng, scale * H, H)
            params[f"head.fine{k}.b"] = np.zeros(H, np.float32)
    params["head.shared.w"] = linear_init(rng, H, H)
    params["head.shared.b"] = np.zeros(H, np.float32)
    params["head.ln.g"] = np.ones(H, np.float32)
    params["head.ln.b"] = np.zeros(H, np.float32)
    params["head.cls.w"] = linear_init(rng, H, 1)
    params["head.cls.b"] = np.zeros(1, np.float32)
    params["head.reg.w"] = linear_init(rng, H, 2)
    params["head.reg.b"] = np.zeros(2, np.float32)
    return params


def init_params(cfg: ModelConfig, seed=0) -> dict:
    """All model parameters as float32 numpy arrays, deterministic in ``seed``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = init_encoder_params(cfg, rng)
    params.update(init_head_params(cfg, rng))
    return params


def as_trainable(params: dict, dtype=None) -> dict:
    return {k: Tensor(v, requires_grad=True, dtype=dtype) for k, v in params.items()}


def param_shapes(cfg: ModelConfig) -> dict:
    F, H = cfg.feat_dim, cfg.hidden
    shapes = {}
    if cfg.mixer in ("softmax", "nystrom"):
        shapes.update({f"mixer.{n}": (F, F) for n in ("wq", "wk", "wv")})
    elif cfg.mixer == "dwt":
        shapes.update({
            "mixer.fc1_w": (F, F), "mixer.fc1_b": (F,),
            "mixer.fc2_w": (F, F), "mixer.fc2_b": (F,),
            "mixer.ln_g": (2 * F,), "mixer.ln_b": (2 * F,),
            "mixer.up_w": (2, 2 * F, F), "mixer.up_b": (F,),
        })
    width = F
    for i in range(cfg.fc_depth):
        shapes[f"enc.fc{i}.w"] = (width, H)
        shapes[f"enc.fc{i}.b"] = (H,)
        width = H
    shapes["enc.ln.g"] = shapes["enc.ln.b"] = (H,)
    if cfg.pooling != "roi":
        for k, scale in enumerate(cfg.anchor_scales):
            shapes[f"head.fine{k}.w"] = (scale * H, H)
            shapes[f"head.fine{k}.b"] = (H,)
    shapes["head.shared.w"] = (H, H)
    shapes["head.shared.b"] = shapes["head.ln.g"] = shapes["head.ln.b"] = (H,)
    shapes["head.cls.w"], shapes["head.cls.b"] = (H, 1), (1,)
    shapes["head.reg.w"], shapes["head.reg.b"] = (H, 2), (2,)
    return shapes


def count_params(cfg: ModelConfig) -> int:
    """Number of trainable scalars in the encoder, fine projections and heads."""
    return int(sum(math.prod(s) for s in param_shapes(cfg).values()))


def check_params(cfg: ModelConfig, params: dict) -> None:
    """Raise ValueError if ``params`` does not match the shapes ``cfg`` implies."""
    want = param_shapes(cfg)
    if set(want) != set(params):
        missing = sorted(set(want) - set(params))
        extra = sorted(set(params) - set(want))
        raise ValueError(f"parameter names do not match config (missing {missing}, unexpected {extra})")
    for name, shape in want.items():
        got = tuple(np.shape(params[name].data if isinstance(params[name], Tensor) else params[name]))
        if got != tuple(shape):
            raise ValueError(f"parameter {name!r} has shape {got}, config expects {tuple(shape)}")


# ---------------------------------------------------------------------------
# full model


def pooled_features(enc: Tensor, cfg: ModelConfig, k: int, params) -> SegmentFeatures:
    """Coarse and fine features for every anchor of scale ``k`` at once."""
    n, H = enc.shape
    scale = cfg.anchor_scales[k]
    idx, counts = segment_index(n, scale)
    padded = concat([enc, Tensor(np.zeros((1, H)), dtype=enc.dtype)], axis=0)
    seg = take_rows(padded, idx)  # (n, scale, H)
    if cfg.pooling == "roi":
        pooled = seg.sum(axis=1) * Tensor((1.0 / counts)[:, None], dtype=enc.dtype)
        return SegmentFeatures(pooled, pooled)
    if cfg.pooling == "fft":
        seg = dft_real(seg, axis=1)
    coarse = seg.mean(axis=1)
    fine = seg.reshape(n, scale * H) @ params[f"head.fine{k}.w"] + params[f"head.fine{k}.b"]
    return SegmentFeatures(coarse, fine)


def model_forward(video, cfg: ModelConfig, params, training=False, rng=None) -> PredictionSet:
    """Encoder, anchors, segment pooling and heads for one video."""
    enc = encoder_forward(video, cfg, params, training, rng)
    logits, offsets = [], []
    for k in range(len(cfg.anchor_scales)):
        seg = pooled_features(enc, cfg, k, params)
        logit, off = head_logits(seg, params, cfg.pooling)
        logits.append(logit.reshape(-1))
        offsets.append(off)
    return PredictionSet(stack(logits, axis=1), stack(offsets, axis=1))
