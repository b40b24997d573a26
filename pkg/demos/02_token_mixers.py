"""
Four ways to mix tokens
=======================

Softmax attention, Fourier mixing, the Nystrom approximation and the Haar
wavelet mixer all map an N x F sequence to another N x F sequence. They
differ in parameters and in how cost grows with N.
"""
import numpy as np

from edsnet.config import ModelConfig
from edsnet.mixers import apply_mixer, init_mixer_params, nystrom_attention, softmax_attention
from edsnet.numcore import precision
from edsnet.pooling_heads import count_params

rng = np.random.default_rng(1)
x = rng.normal(size=(64, 16)).astype(np.float32)

for kind in ("softmax", "fourier", "nystrom", "dwt"):
    params = init_mixer_params(kind, 16, rng)
    out = apply_mixer(kind, x, params, landmarks=8)
    n_params = sum(p.size for p in params.values())
    print(f"{kind:8s} output {out.shape}, mixer parameters {n_params}")

# The Fourier mixer has nothing to learn, which is where the parameter saving
# of the full model comes from.
for mixer in ("softmax", "fourier"):
    print(f"full model with {mixer} mixer: {count_params(ModelConfig(mixer=mixer)):,} parameters")

# Nystrom attention approaches exact attention as landmarks are added.
params = {k: v.astype(np.float64) for k, v in init_mixer_params("nystrom", 16, rng).items()}
with precision(np.float64):
    exact = softmax_attention(x.astype(np.float64), params).data
    for m in (2, 4, 8, 16, 32, 64):
        approx = nystrom_attention(x.astype(np.float64), params, m, exact_inverse=True).data
        print(f"landmarks {m:2d}: relative error {np.linalg.norm(approx - exact) / np.linalg.norm(exact):.2e}")
