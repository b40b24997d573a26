"""
Reverse-mode gradients and signal transforms
============================================

The model is trained with a small tape-based autodiff engine over numpy.
This script builds a tiny expression, backpropagates through it, checks the
result against finite differences, then round-trips the FFT and the Haar
transform that the token mixers are built from.
"""
import numpy as np

from edsnet.numcore import Tensor, backward, fft, haar_dwt_1level, haar_idwt_1level, ifft, precision, relu

rng = np.random.default_rng(0)

# A two-layer map y = sum(relu(x W1) W2), in float64 so differences are clean.
with precision(np.float64):
    x = Tensor(rng.normal(size=(4, 3)))
    w1 = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    w2 = Tensor(rng.normal(size=(5, 1)), requires_grad=True)
    loss = (relu(x @ w1) @ w2).sum()
    backward(loss)

    def f(w):
        return (np.maximum(x.data @ w, 0) @ w2.data).sum()

    numeric = np.zeros_like(w1.data)
    for idx in np.ndindex(w1.shape):
        bump = np.zeros_like(w1.data)
        bump[idx] = 1e-6
        numeric[idx] = (f(w1.data + bump) - f(w1.data - bump)) / 2e-6

print("loss", round(loss.item(), 6))
print("max |backprop - finite difference| on W1:", np.abs(w1.grad - numeric).max())

# The radix-2 FFT inverts exactly and agrees with numpy's reference.
signal = rng.normal(size=16)
spectrum = fft(signal)
print("FFT matches numpy:", np.allclose(spectrum.real + 1j * spectrum.imag, np.fft.fft(signal)))
back = ifft(spectrum)
print("inverse FFT round trip error:", np.abs(back.real - signal).max())

# One Haar level splits a sequence into smooth and detail halves.
seq = np.repeat([1.0, 4.0, 2.0, 2.0], 2)[:, None]
approx, detail = haar_dwt_1level(seq)
print("approximation", approx.data.ravel().round(3))
print("detail (zero on constant pairs)", detail.data.ravel().round(3))
print("Haar round trip error:", np.abs(haar_idwt_1level(approx, detail) - seq).max())
