"""Minimal numpy neural-net layers with hand-derived backprop.

Every layer exposes `params` / `grads` dicts of float64 arrays plus
forward(x, train) and backward(grad_out). Forward in eval mode caches
nothing and mutates nothing, so a frozen model is safe to share across
threads; training requires exclusive access.

Conventions: batch-first; 1-D feature maps are (batch, channels, length);
sequences are (batch, time, features).
"""

from __future__ import annotations

import math

import numpy as np
import scipy.fft
from scipy.special import expit as _sigmoid

from .audio import hz_to_mel, mel_to_hz

LEAKY_SLOPE = 0.3
BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class Layer:
    """Base: parameterless layer with empty param/grad dicts."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grad(self):
        for k in self.grads:
            self.grads[k][...] = 0.0


def bandpass_kernel(f_low: np.ndarray, f_high: np.ndarray, kernel: int, window: np.ndarray):
    """Windowed ideal band-pass impulse responses for normalized cutoffs.

    f_low/f_high are (F,) in cycles per sample; returns (F, kernel) filters
    h[n] = (2*f_high*sinc(2*f_high*n) - 2*f_low*sinc(2*f_low*n)) * window[n]
    over centered taps, so h[center] = 2*(f_high - f_low).
    """
    n = np.arange(kernel) - (kernel - 1) / 2.0
    hi = 2.0 * f_high[:, None] * np.sinc(2.0 * f_high[:, None] * n[None, :])
    lo = 2.0 * f_low[:, None] * np.sinc(2.0 * f_low[:, None] * n[None, :])
    return (hi - lo) * window[None, :]


class SincConv(Layer):
    """Band-pass sinc filters with learnable cutoffs on a raw waveform.

    Parameters are unconstrained `low` and `band`; the effective band is
    f1 = |low|, f2 = f1 + |band| (normalized frequency). Filters start
    mel-spaced between init_min_hz and 0.98 * Nyquist. Input (B, L) maps to
    (B, F, L) via same-padded convolution (the kernels are even-symmetric,
    so convolution and correlation coincide).
    """

    def __init__(self, filters: int, kernel: int, sample_rate: int,
                 init_min_hz: float = 30.0):
        super().__init__()
        if kernel % 2 != 1:
            raise ValueError(f"kernel must be odd, got {kernel}")
        self.kernel = kernel
        self.filters = filters
        self.window = np.hamming(kernel)
        self._n = np.arange(kernel) - (kernel - 1) / 2.0
        edges_hz = mel_to_hz(
            np.linspace(hz_to_mel(init_min_hz), hz_to_mel(0.98 * sample_rate / 2), filters + 1)
        )
        edges = edges_hz / sample_rate
        self.params = {
            "low": edges[:-1].astype(np.float64).copy(),
            "band": np.diff(edges).astype(np.float64),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def _filters(self):
        f1 = np.abs(self.params["low"])
        f2 = f1 + np.abs(self.params["band"])
        return f1, f2, bandpass_kernel(f1, f2, self.kernel, self.window)

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        f1, f2, h = self._filters()
        B, L = x.shape
        pad = self.kernel // 2
        xp = np.pad(x, ((0, 0), (pad, pad)))
        # len(xp) = L + kernel - 1 already covers the full linear correlation:
        # every retained output, filter-gradient lag, and input-gradient sample
        # stays wrap-free at this size
        nfft = scipy.fft.next_fast_len(xp.shape[1], real=True)
        X = scipy.fft.rfft(xp, nfft, axis=1)
        Hc = np.conj(scipy.fft.rfft(h, nfft, axis=1))
        # correlation of padded input with kernels; valid part is exactly L long
        prod = (X[:, None, :] * Hc[None, :, :]).reshape(B * self.filters, -1)
        out = scipy.fft.irfft(prod, nfft, axis=1)[:, :L].reshape(B, self.filters, L)
        if train:
            self._cache = (X, Hc, f1, f2, L, nfft)
        return out

    def backward(self, gout: np.ndarray) -> np.ndarray:
        X, Hc, f1, f2, L, nfft = self._cache
        B = X.shape[0]
        pad = self.kernel // 2
        G = scipy.fft.rfft(gout.reshape(B * self.filters, L), nfft, axis=1)
        G = G.reshape(B, self.filters, -1)
        # dL/dh[f, n] = sum_b corr(x_pad_b, gout_bf)[n], n = 0..kernel-1
        dh = scipy.fft.irfft(
            np.einsum("bn,bfn->fn", X, np.conj(G), optimize=True), nfft, axis=1
        )[:, : self.kernel]
        # dL/dx_pad = conv(gout, h) full, then unpad
        dxp = scipy.fft.irfft(np.einsum("bfn,fn->bn", G, np.conj(Hc), optimize=True),
                              nfft, axis=1)
        dx = dxp[:, pad: pad + L]
        # chain to the cutoffs: dh/df = +-2 cos(2 pi f n) * window
        cos_hi = 2.0 * np.cos(2.0 * np.pi * f2[:, None] * self._n[None, :]) * self.window
        cos_lo = 2.0 * np.cos(2.0 * np.pi * f1[:, None] * self._n[None, :]) * self.window
        df2 = (dh * cos_hi).sum(axis=1)
        df1 = (dh * -cos_lo).sum(axis=1)
        self.grads["low"] += (df1 + df2) * np.sign(self.params["low"])
        self.grads["band"] += df2 * np.sign(self.params["band"])
        return dx


class Conv1d(Layer):
    """Same-padded 1-D convolution, stride 1, kernel k (odd).

    Set bias=False for convolutions feeding straight into a BatchNorm (the
    normalization cancels constant shifts, leaving the bias gradient zero).
    """

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
                 bias: bool = True):
        super().__init__()
        if kernel % 2 != 1:
            raise ValueError(f"kernel must be odd, got {kernel}")
        self.kernel = kernel
        scale = math.sqrt(2.0 / (c_in * kernel))  # He init for leaky-relu stacks
        self.params = {"W": rng.normal(0.0, scale, (c_out, c_in, kernel))}
        if bias:
            self.params["b"] = np.zeros(c_out)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        # im2col + one GEMM; the column matrix is cached so backward is two GEMMs
        pad = self.kernel // 2
        B, Ci, L = x.shape
        Co = self.params["W"].shape[0]
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
        cols = np.empty((Ci, self.kernel, B, L))
        for j in range(self.kernel):
            cols[:, j] = xp[:, :, j:j + L].transpose(1, 0, 2)
        cols = cols.reshape(Ci * self.kernel, B * L)
        out = (self.params["W"].reshape(Co, -1) @ cols).reshape(Co, B, L)
        out = out.transpose(1, 0, 2)
        if "b" in self.params:
            out = out + self.params["b"][None, :, None]
        if train:
            self._cache = (cols, x.shape)
        return out

    def backward(self, gout: np.ndarray) -> np.ndarray:
        cols, x_shape = self._cache
        B, Ci, L = x_shape
        pad = self.kernel // 2
        Co = gout.shape[1]
        g = gout.transpose(1, 0, 2).reshape(Co, B * L)
        self.grads["W"] += (g @ cols.T).reshape(self.grads["W"].shape)
        if "b" in self.params:
            self.grads["b"] += gout.sum(axis=(0, 2))
        dcols = (self.params["W"].reshape(Co, -1).T @ g).reshape(Ci, self.kernel, B, L)
        dxp = np.zeros((B, Ci, L + 2 * pad))
        for j in range(self.kernel):
            dxp[:, :, j:j + L] += dcols[:, j].transpose(1, 0, 2)
        return dxp[:, :, pad: pad + L]


class Linear(Layer):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        super().__init__()
        bound = math.sqrt(6.0 / (d_in + d_out))  # Glorot uniform
        self.params = {
            "W": rng.uniform(-bound, bound, (d_in, d_out)),
            "b": np.zeros(d_out),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if train:
            self._cache = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, gout: np.ndarray) -> np.ndarray:
        x = self._cache
        self.grads["W"] += x.T @ gout
        self.grads["b"] += gout.sum(axis=0)
        return gout @ self.params["W"].T


class BatchNorm1d(Layer):
    """Per-channel batch norm over (B, C, L); eval mode uses running stats."""

    def __init__(self, channels: int):
        super().__init__()
        self.params = {"gamma": np.ones(channels), "beta": np.zeros(channels)}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self._train_mode = False

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        self._train_mode = train
        if train:
            n = x.shape[0] * x.shape[2]
            mu = x.mean(axis=(0, 2))
            var = np.einsum("bcl,bcl->c", x, x, optimize=True) / n - mu * mu
            var = np.maximum(var, 0.0)  # guard fp cancellation on constant inputs
            self.running_mean += BN_MOMENTUM * (mu - self.running_mean)
            self.running_var += BN_MOMENTUM * (var - self.running_var)
        else:
            mu, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - mu[None, :, None]) * inv[None, :, None]
        out = self.params["gamma"][None, :, None] * xhat + self.params["beta"][None, :, None]
        if train:
            self._cache = (xhat, inv)
        return out

    def backward(self, gout: np.ndarray) -> np.ndarray:
        if not self._train_mode:
            raise RuntimeError("backward after eval-mode forward")
        xhat, inv = self._cache
        n = gout.shape[0] * gout.shape[2]
        sum_g = gout.sum(axis=(0, 2))
        sum_gx = np.einsum("bcl,bcl->c", gout, xhat, optimize=True)
        self.grads["gamma"] += sum_gx
        self.grads["beta"] += sum_g
        gamma = self.params["gamma"]
        coef = (gamma * inv)[None, :, None]
        return coef * (gout - (sum_g / n)[None, :, None] - xhat * (sum_gx / n)[None, :, None])


class LeakyReLU(Layer):
    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        out = np.where(x > 0, x, LEAKY_SLOPE * x)
        if train:
            self._cache = x > 0
        return out

    def backward(self, gout: np.ndarray) -> np.ndarray:
        mask = self._cache
        return np.where(mask, gout, LEAKY_SLOPE * gout)


class MaxPool1d(Layer):
    """Non-overlapping max pooling over the time axis; remainder truncated."""

    def __init__(self, size: int):
        super().__init__()
        self.size = size

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        B, C, L = x.shape
        m = L // self.size
        blocks = x[:, :, : m * self.size].reshape(B, C, m, self.size)
        if train:
            amax = blocks.argmax(axis=3)
            self._cache = (amax, x.shape)
            return np.take_along_axis(blocks, amax[..., None], axis=3)[..., 0]
        return blocks.max(axis=3)

    def backward(self, gout: np.ndarray) -> np.ndarray:
        amax, x_shape = self._cache
        B, C, L = x_shape
        m = gout.shape[2]
        blocks = np.zeros((B, C, m, self.size))
        np.put_along_axis(blocks, amax[..., None], gout[..., None], axis=3)
        dx = blocks.reshape(B, C, m * self.size)
        if m * self.size < L:
            dx = np.pad(dx, ((0, 0), (0, 0), (0, L - m * self.size)))
        return dx


class FeatureMapScale(Layer):
    """Filter-wise feature-map scaling: per-channel sigmoid gate computed from
    time-averaged activations, multiplied back onto the map."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        bound = math.sqrt(6.0 / (2 * channels))
        self.params = {
            "W": rng.uniform(-bound, bound, (channels, channels)),
            "b": np.zeros(channels),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        a = x.mean(axis=2)
        s = _sigmoid(a @ self.params["W"] + self.params["b"])
        if train:
            self._cache = (x, a, s)
        return x * s[:, :, None]

    def backward(self, gout: np.ndarray) -> np.ndarray:
        x, a, s = self._cache
        L = x.shape[2]
        ds = (gout * x).sum(axis=2)
        dz = ds * s * (1.0 - s)
        self.grads["W"] += a.T @ dz
        self.grads["b"] += dz.sum(axis=0)
        da = dz @ self.params["W"].T
        return gout * s[:, :, None] + da[:, :, None] / L


class GRU(Layer):
    """Single-layer GRU over (B, T, I); returns the final hidden state (B, H).

    Gate layout [r, z, n] with n = tanh(x W_n + r * (h W*_n) + b_n); the
    input projection for all steps is batched into one matmul.
    """

    def __init__(self, d_in: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        bx = math.sqrt(6.0 / (d_in + 3 * hidden))
        bh = math.sqrt(6.0 / (hidden + 3 * hidden))
        self.hidden = hidden
        self.params = {
            "Wx": rng.uniform(-bx, bx, (d_in, 3 * hidden)),
            "Wh": rng.uniform(-bh, bh, (hidden, 3 * hidden)),
            "b": np.zeros(3 * hidden),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        B, T, _ = x.shape
        H = self.hidden
        P = x @ self.params["Wx"] + self.params["b"]  # (B, T, 3H)
        h = np.zeros((B, H))
        if train:
            cache_h = np.empty((T, B, H))       # h_{t-1}
            cache_r = np.empty((T, B, H))
            cache_z = np.empty((T, B, H))
            cache_n = np.empty((T, B, H))
            cache_qn = np.empty((T, B, H))      # recurrent contribution to n, pre-gate
        Wh = self.params["Wh"]
        for t in range(T):
            q = h @ Wh
            r = _sigmoid(P[:, t, :H] + q[:, :H])
            z = _sigmoid(P[:, t, H:2 * H] + q[:, H:2 * H])
            n = np.tanh(P[:, t, 2 * H:] + r * q[:, 2 * H:])
            if train:
                cache_h[t] = h
                cache_r[t] = r
                cache_z[t] = z
                cache_n[t] = n
                cache_qn[t] = q[:, 2 * H:]
            h = (1.0 - z) * n + z * h
        if train:
            self._cache = (x, cache_h, cache_r, cache_z, cache_n, cache_qn)
        return h

    def backward(self, gout: np.ndarray) -> np.ndarray:
        x, hs, rs, zs, ns, qns = self._cache
        T, B, H = hs.shape
        Wh = self.params["Wh"]
        dh = gout.copy()
        dP = np.empty((T, B, 3 * H))
        dq = np.empty((B, 3 * H))
        for t in range(T - 1, -1, -1):
            h_prev, r, z, n, qn = hs[t], rs[t], zs[t], ns[t], qns[t]
            dz = dh * (h_prev - n) * z * (1.0 - z)
            da = dh * (1.0 - z) * (1.0 - n * n)   # pre-tanh of n
            dr = da * qn * r * (1.0 - r)
            dP[t, :, :H] = dr
            dP[t, :, H:2 * H] = dz
            dP[t, :, 2 * H:] = da
            dq[:, :H] = dr
            dq[:, H:2 * H] = dz
            dq[:, 2 * H:] = da * r
            dh = dh * z + dq @ Wh.T
        # batched parameter grads; dWh uses h_{t-1} against dq_t per step
        dq_all = dP.copy()
        dq_all[:, :, 2 * H:] *= rs  # rebuild dq from dP (r-gated n path)
        self.grads["Wh"] += np.einsum("tbh,tbk->hk", hs, dq_all, optimize=True)
        self.grads["Wx"] += np.einsum("tbi,tbk->ik", x.transpose(1, 0, 2), dP, optimize=True)
        self.grads["b"] += dP.sum(axis=(0, 1))
        dx = dP.transpose(1, 0, 2) @ self.params["Wx"].T
        return dx
