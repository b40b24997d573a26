"""Iterative Moore-Penrose pseudo-inverse used by the Nystrom mixer."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor, tabs, tmax


def pinv_iterative(a, iters: int = 6) -> Tensor:
    """Approximate ``pinv(a)`` with the cubic-order Newton-Schulz-style iteration.

    Z0 = a^T / (max row abs-sum * max column abs-sum), then
    Z <- Z (13 I - AZ (15 I - AZ (7 I - AZ))) / 4. Every step is a tracked op,
    so gradients flow through the unrolled iterations.
    """
    a = as_tensor(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"pinv_iterative expects a non-empty square matrix, got {a.shape}")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if not np.any(a.data):
        raise ValueError("pseudo-inverse of the all-zero matrix is not approximated")
    m = a.shape[0]
    eye = Tensor(np.eye(m), dtype=a.dtype)
    absa = tabs(a)
    scale = tmax(absa.sum(axis=1)) * tmax(absa.sum(axis=0))
    z = a.T / scale
    for _ in range(iters):
        az = a @ z
        z = (z @ (13.0 * eye - az @ (15.0 * eye - az @ (7.0 * eye - az)))) * 0.25
    return z
