"""Fourier and Haar transforms, plus the stride-2 transposed convolution."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, _lift, _node, as_tensor, getitem

_SQRT2 = math.sqrt(2.0)


@dataclass
class ComplexSequence:
    real: np.ndarray
    imag: np.ndarray

    def __post_init__(self):
        if self.real.shape != self.imag.shape:
            raise ValueError("real and imaginary parts must share a shape")

    def to_complex(self):
        return self.real + 1j * self.imag


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _complex_dtype(dtype):
    return np.complex64 if np.dtype(dtype) == np.float32 else np.complex128


def fft(x, axis=-1) -> np.ndarray:
    """Complex DFT along ``axis``.

    Iterative radix-2 Cooley-Tukey when the length is a power of two, the
    direct O(n^2) sum otherwise.
    """
    x = np.asarray(x)
    rdtype = x.real.dtype if x.dtype.kind in "fc" else np.float64
    cdtype = _complex_dtype(rdtype)
    a = np.moveaxis(x, axis, -1).astype(cdtype)
    n = a.shape[-1]
    if n == 0:
        raise ValueError("cannot transform an empty sequence")
    if _is_pow2(n):
        lead = a.shape[:-1]
        a = a[..., _bit_reverse(n)]
        size = 2
        while size <= n:
            half = size // 2
            tw = np.exp(-2j * np.pi * np.arange(half) / size).astype(cdtype)
            blocks = a.reshape(lead + (n // size, size))
            even = blocks[..., :half]
            odd = blocks[..., half:] * tw
            a = np.concatenate([even + odd, even - odd], axis=-1).reshape(lead + (n,))
            size *= 2
        out = a
    else:
        out = a @ dft_matrix(n).astype(cdtype)
    return np.moveaxis(out, -1, axis)


def ifft(X, axis=-1) -> np.ndarray:
    X = np.asarray(X)
    n = X.shape[axis]
    return np.conj(fft(np.conj(X), axis=axis)) / n


def dft_matrix(n: int) -> np.ndarray:
    """Dense symmetric DFT matrix W[j, k] = exp(-2 pi i j k / n)."""
    jk = np.outer(np.arange(n), np.arange(n)) % n
    return np.exp(-2j * np.pi * jk / n)


def dft_1d(x) -> ComplexSequence:
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float32)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("dft_1d expects a non-empty 1-D sequence")
    X = fft(x)
    return ComplexSequence(X.real.astype(np.float32), X.imag.astype(np.float32))


def idft_1d(X: ComplexSequence) -> np.ndarray:
    return ifft(X.to_complex().astype(np.complex64)).real.astype(np.float32)


# ---------------------------------------------------------------------------
# differentiable real-part transforms


def dft_real(x, axis=0) -> Tensor:
    """Real part of the DFT of a real tensor along ``axis``.

    The map is x -> C x with C the symmetric cosine matrix, so the adjoint is
    the same transform applied to the incoming gradient.
    """
    x = as_tensor(x)
    dtype = x.dtype

    def bw(g):
        return (fft(g, axis=axis).real.astype(dtype),)

    return _node(fft(x.data, axis=axis).real.astype(dtype), (x,), bw, "dft_real")


def fourier_mix_2d(x) -> Tensor:
    """Re(DFT over axis 0 of DFT over axis 1). Self-adjoint as a real-linear map."""
    x = as_tensor(x)
    dtype = x.dtype

    def fwd(v):
        return fft(fft(v, axis=-1), axis=-2).real.astype(dtype)

    def bw(g):
        return (fwd(g),)

    return _node(fwd(x.data), (x,), bw, "fourier_mix")


# ---------------------------------------------------------------------------
# Haar wavelet


def haar_dwt_1level(x):
    """One-level orthonormal Haar transform along axis 0.

    Returns ``(approx, detail)`` tensors of half the length.
    """
    x = as_tensor(x)
    n = x.shape[0]
    if n < 2 or n % 2:
        raise ValueError(f"Haar transform needs an even length >= 2, got {n}")
    even = getitem(x, slice(0, None, 2))
    odd = getitem(x, slice(1, None, 2))
    inv = 1.0 / _SQRT2
    return (even + odd) * inv, (even - odd) * inv


def haar_idwt_1level(approx, detail) -> np.ndarray:
    a = np.asarray(approx.data if isinstance(approx, Tensor) else approx)
    d = np.asarray(detail.data if isinstance(detail, Tensor) else detail)
    out = np.empty((2 * a.shape[0],) + a.shape[1:], dtype=np.result_type(a, d))
    out[0::2] = (a + d) / _SQRT2
    out[1::2] = (a - d) / _SQRT2
    return out


# ---------------------------------------------------------------------------
# transposed convolution


def transposed_conv1d(x, weight, bias=None, stride=2) -> Tensor:
    """Transposed 1-D convolution along the time axis.

    x: (L, C_in); weight: (kernel, C_in, C_out); bias: (C_out,) or None.
    Output length is (L - 1) * stride + kernel, i.e. 2L for kernel 2, stride 2.
    """
    x = as_tensor(x)
    weight = _lift(weight, x)
    if x.ndim != 2 or weight.ndim != 3:
        raise ValueError("transposed_conv1d expects x (L, C_in) and weight (k, C_in, C_out)")
    L, c_in = x.shape
    k, w_in, c_out = weight.shape
    if w_in != c_in:
        raise ValueError(f"channel mismatch: input has {c_in}, kernel expects {w_in}")
    out_len = (L - 1) * stride + k
    span = stride * (L - 1) + 1

    out = np.zeros((out_len, c_out), dtype=x.dtype)
    for j in range(k):
        out[j:j + span:stride] += x.data @ weight.data[j]

    def bw(g):
        gx = np.zeros_like(x.data)
        gw = np.zeros_like(weight.data)
        for j in range(k):
            gj = g[j:j + span:stride]
            gx += gj @ weight.data[j].T
            gw[j] = x.data.T @ gj
        return gx, gw

    y = _node(out, (x, weight), bw, "transposed_conv1d")
    if bias is not None:
        y = y + _lift(bias, x)
    return y
