"""Token mixers (softmax, Fourier, Nystrom, Haar-DWT) and the frame encoder.

Every mixer maps an (N, F) feature sequence to (N, F). Parameters are passed
as a mapping of short names to tensors so the same functions serve training
(tracked tensors) and plain inference.
"""
from __future__ import annotations

import math

import numpy as np

from .config import ModelConfig
from .numcore import (
    Tensor,
    as_tensor,
    concat,
    dropout,
    fourier_mix_2d,
    gelu,
    haar_dwt_1level,
    layer_norm,
    pinv_iterative,
    relu,
    softmax_rows,
    take_rows,
    transposed_conv1d,
)
from .numcore.tensor import _node


def linear_init(rng, fan_in, fan_out, dtype=np.float32):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


def init_mixer_params(kind: str, feat_dim: int, rng: np.random.Generator) -> dict:
    """Fresh numpy parameters for one mixer, keyed by short name."""
    F = feat_dim
    if kind in ("softmax", "nystrom"):
        return {name: linear_init(rng, F, F) for name in ("wq", "wk", "wv")}
    if kind == "fourier":
        return {}
    if kind == "dwt":
        bound = 1.0 / math.sqrt(2 * F * 2)
        return {
            "fc1_w": linear_init(rng, F, F),
            "fc1_b": np.zeros(F, np.float32),
            "fc2_w": linear_init(rng, F, F),
            "fc2_b": np.zeros(F, np.float32),
            "ln_g": np.ones(2 * F, np.float32),
            "ln_b": np.zeros(2 * F, np.float32),
            "up_w": rng.uniform(-bound, bound, size=(2, 2 * F, F)).astype(np.float32),
            "up_b": np.zeros(F, np.float32),
        }
    raise ValueError(f"unknown mixer {kind!r}")


def _scores(q, k):
    return (q @ k.T) * (1.0 / math.sqrt(q.shape[-1]))


def softmax_attention(x, params) -> Tensor:
    """softmax(Q K^T / sqrt(F)) V with single-head projections, no biases."""
    x = as_tensor(x)
    q = x @ params["wq"]
    k = x @ params["wk"]
    v = x @ params["wv"]
    return softmax_rows(_scores(q, k)) @ v


def fourier_mix(x) -> Tensor:
    """FNet-style mixing: DFT along features, then along time, keep the real part."""
    return fourier_mix_2d(as_tensor(x))


def landmark_matrix(n: int, m: int, dtype=np.float32) -> np.ndarray:
    """(m, n) averaging matrix over m contiguous, near-equal segments."""
    if not 1 <= m <= n:
        raise ValueError(f"landmark count must satisfy 1 <= m <= N, got m={m}, N={n}")
    P = np.zeros((m, n), dtype=dtype)
    for i, seg in enumerate(np.array_split(np.arange(n), m)):
        P[i, seg] = 1.0 / len(seg)
    return P


def pinv_exact(a) -> Tensor:
    """Exact pseudo-inverse; gradient assumes the matrix is invertible."""
    a = as_tensor(a)
    z = np.linalg.pinv(a.data.astype(np.float64)).astype(a.dtype)

    def bw(g):
        return (-(z.T @ g @ z.T),)

    return _node(z, (a,), bw, "pinv_exact")


def nystrom_attention(x, params, landmarks: int, exact_inverse=False, pinv_iters=6) -> Tensor:
    """Nystrom approximation of softmax attention with segment-mean landmarks.

    Evaluated right to left so memory and time stay linear in N.
    """
    x = as_tensor(x)
    n = x.shape[0]
    P = Tensor(landmark_matrix(n, landmarks, x.dtype), dtype=x.dtype)
    q = x @ params["wq"]
    k = x @ params["wk"]
    v = x @ params["wv"]
    q_land = P @ q
    k_land = P @ k
    kernel_1 = softmax_rows(_scores(q, k_land))
    kernel_2 = softmax_rows(_scores(q_land, k_land))
    kernel_3 = softmax_rows(_scores(q_land, k))
    inv = pinv_exact(kernel_2) if exact_inverse else pinv_iterative(kernel_2, pinv_iters)
    return kernel_1 @ (inv @ (kernel_3 @ v))


def dwt_mix(x, params) -> Tensor:
    """Haar-DWT token mixer.

    Pads to even length by repeating the last frame, splits into approximation
    and detail halves, sends the approximation through FC-GELU-FC, concatenates
    the detail back on the feature axis, layer-normalizes and upsamples with a
    stride-2 transposed convolution. The output is truncated to the input length.
    """
    x = as_tensor(x)
    n = x.shape[0]
    if n % 2:
        x = take_rows(x, np.append(np.arange(n), n - 1))
    approx, detail = haar_dwt_1level(x)
    h = gelu(approx @ params["fc1_w"] + params["fc1_b"])
    h = h @ params["fc2_w"] + params["fc2_b"]
    h = concat([h, detail], axis=1)
    h = layer_norm(h, params["ln_g"], params["ln_b"])
    out = transposed_conv1d(h, params["up_w"], params["up_b"])
    if out.shape[0] != n:
        out = out[:n]
    return out


def apply_mixer(kind: str, x, params, landmarks: int = 16) -> Tensor:
    if kind == "softmax":
        return softmax_attention(x, params)
    if kind == "fourier":
        return fourier_mix(x)
    if kind == "nystrom":
        return nystrom_attention(x, params, min(landmarks, as_tensor(x).shape[0]))
    if kind == "dwt":
        return dwt_mix(x, params)
    raise ValueError(f"unknown mixer {kind!r}")


def init_encoder_params(cfg: ModelConfig, rng: np.random.Generator) -> dict:
    params = {f"mixer.{k}": v for k, v in init_mixer_params(cfg.mixer, cfg.feat_dim, rng).items()}
    width = cfg.feat_dim
    for i in range(cfg.fc_depth):
        params[f"enc.fc{i}.w"] = linear_init(rng, width, cfg.hidden)
        params[f"enc.fc{i}.b"] = np.zeros(cfg.hidden, np.float32)
        width = cfg.hidden
    params["enc.ln.g"] = np.ones(cfg.hidden, np.float32)
    params["enc.ln.b"] = np.zeros(cfg.hidden, np.float32)
    return params


def subparams(params, prefix: str) -> dict:
    n = len(prefix)
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix)}


def encoder_forward(x, cfg: ModelConfig, params, training=False, rng=None) -> Tensor:
    """Mix tokens, add the residual, compress to the hidden width."""
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] != cfg.feat_dim:
        raise ValueError(f"expected features of shape (N, {cfg.feat_dim}), got {x.shape}")
    if training and cfg.dropout > 0 and rng is None:
        raise ValueError("training mode with dropout needs an rng")
    h = apply_mixer(cfg.mixer, x, subparams(params, "mixer."), cfg.nystrom_landmarks) + x
    for i in range(cfg.fc_depth):
        h = relu(h @ params[f"enc.fc{i}.w"] + params[f"enc.fc{i}.b"])
        h = dropout(h, cfg.dropout, rng, training)
    return layer_norm(h, params["enc.ln.g"], params["enc.ln.b"])
