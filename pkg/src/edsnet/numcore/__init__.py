"""Tensor math, transforms and the reverse-mode autodiff engine."""
from .linalg import pinv_iterative
from .optim import AdamState, adam_step
from .signal import (
    ComplexSequence,
    dft_1d,
    dft_matrix,
    dft_real,
    fft,
    fourier_mix_2d,
    haar_dwt_1level,
    haar_idwt_1level,
    idft_1d,
    ifft,
    transposed_conv1d,
)
from .tensor import (
    GraphError,
    Tensor,
    as_tensor,
    backward,
    concat,
    default_dtype,
    dropout,
    elementwise,
    exp,
    gelu,
    layer_norm,
    log,
    matmul,
    precision,
    relu,
    sigmoid,
    smooth_l1,
    softmax_rows,
    softplus,
    stack,
    take_rows,
    tmax,
)

__all__ = [
    "AdamState",
    "ComplexSequence",
    "GraphError",
    "Tensor",
    "adam_step",
    "as_tensor",
    "backward",
    "concat",
    "default_dtype",
    "dft_1d",
    "dft_matrix",
    "dft_real",
    "dropout",
    "elementwise",
    "exp",
    "fft",
    "fourier_mix_2d",
    "gelu",
    "haar_dwt_1level",
    "haar_idwt_1level",
    "idft_1d",
    "ifft",
    "layer_norm",
    "log",
    "matmul",
    "pinv_iterative",
    "precision",
    "relu",
    "sigmoid",
    "smooth_l1",
    "softmax_rows",
    "softplus",
    "stack",
    "take_rows",
    "tmax",
    "transposed_conv1d",
]
