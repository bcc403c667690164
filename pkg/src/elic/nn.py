"""Deterministic forward-only inference primitives.

All tensors are float32 numpy arrays shaped (channels, height, width). Every
op is a pure function and bit-reproducible: the conv/tconv kernels accumulate
in float32 with a frozen per-element order (in_channel, kernel_row,
kernel_col), bias added last, so the decoder replays the encoder's arithmetic
exactly. See ``_kernels.pyx`` / ``_fallback.py`` for the twin backends.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _backend
from .errors import InvalidArgument


def as_tensor(a):
    """Coerce to a C-contiguous float32 (C, H, W) array."""
    t = np.ascontiguousarray(a, dtype=np.float32)
    if t.ndim != 3:
        raise InvalidArgument(f"expected rank-3 tensor, got shape {t.shape}")
    return t


@dataclass
class ConvSpec:
    """One convolution layer: weights (out, in, kh, kw), bias (out,).

    ``mask``, when given, has shape (kh, kw) and multiplies every filter once
    at construction; masked taps keep their zero weights in the accumulation
    so both kernel backends agree bitwise.
    """

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0
    mask: np.ndarray | None = field(default=None)

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float32)
        if w.ndim != 4:
            raise InvalidArgument(f"conv weights must be rank 4, got {w.shape}")
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=np.float32)
            if m.shape != w.shape[2:]:
                raise InvalidArgument(
                    f"mask shape {m.shape} does not match kernel {w.shape[2:]}")
            w = np.ascontiguousarray(w * m[None, None])
        self.weights = w
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float32)
        if self.bias.shape != (w.shape[0],):
            raise InvalidArgument(
                f"bias shape {self.bias.shape} does not match out={w.shape[0]}")
        if self.stride < 1:
            raise InvalidArgument("stride must be >= 1")

    @property
    def in_channels(self):
        return self.weights.shape[1]

    @property
    def out_channels(self):
        return self.weights.shape[0]

    @property
    def kernel(self):
        return self.weights.shape[2:]


def conv2d(x, spec):
    x = as_tensor(x)
    if x.shape[0] != spec.in_channels:
        raise InvalidArgument(
            f"conv input has {x.shape[0]} channels, spec wants {spec.in_channels}")
    kh, kw = spec.kernel
    s, p = spec.stride, spec.padding
    oh = (x.shape[1] + 2 * p - kh) // s + 1
    ow = (x.shape[2] + 2 * p - kw) // s + 1
    if oh < 1 or ow < 1:
        raise InvalidArgument(f"conv output would be empty: {(oh, ow)}")
    out = np.zeros((spec.out_channels, oh, ow), dtype=np.float32)
    _backend.conv2d_f32(x, spec.weights, spec.bias, s, p, out)
    return out


def tconv_output_padding(kernel, stride, padding):
    """Frozen convention: pick output-padding so a stride-s layer scales the
    spatial size by exactly s (1 for the 5x5/stride-2 layers used here)."""
    return min(max(stride + 2 * padding - kernel, 0), stride - 1)


def tconv2d(x, spec):
    x = as_tensor(x)
    if x.shape[0] != spec.in_channels:
        raise InvalidArgument(
            f"tconv input has {x.shape[0]} channels, spec wants {spec.in_channels}")
    kh, kw = spec.kernel
    s, p = spec.stride, spec.padding
    oh = (x.shape[1] - 1) * s - 2 * p + kh + tconv_output_padding(kh, s, p)
    ow = (x.shape[2] - 1) * s - 2 * p + kw + tconv_output_padding(kw, s, p)
    out = np.zeros((spec.out_channels, oh, ow), dtype=np.float32)
    _backend.tconv2d_f32(x, spec.weights, spec.bias, s, p, out)
    return out


def relu(x):
    return np.maximum(x, np.float32(0))


def sigmoid(x):
    return expit(x)


def softplus(x):
    """log(1 + exp(x)) with the linear tail above 20, matching the common
    float32 formulation; smooth so the training harness can share it."""
    x = np.asarray(x, dtype=np.float32)
    return np.where(x > np.float32(20.0), x,
                    np.log1p(np.exp(np.minimum(x, np.float32(20.0)))))


def add(a, b):
    if a.shape != b.shape:
        raise InvalidArgument(f"add shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def concat_channels(tensors):
    hw = {t.shape[1:] for t in tensors}
    if len(hw) != 1:
        raise InvalidArgument(f"concat spatial mismatch: {sorted(hw)}")
    return np.concatenate([as_tensor(t) for t in tensors], axis=0)


def crop(x, top, left, height, width):
    if top < 0 or left < 0 or top + height > x.shape[1] or left + width > x.shape[2]:
        raise InvalidArgument("crop window outside tensor")
    return np.ascontiguousarray(x[:, top:top + height, left:left + width])


def replicate_pad(x, top, bottom, left, right):
    return np.pad(x, ((0, 0), (top, bottom), (left, right)), mode="edge")


def _spec(params, name, stride=1, padding=0, mask=None):
    return ConvSpec(params[name + ".weight"], params[name + ".bias"],
                    stride=stride, padding=padding, mask=mask)


def residual_bottleneck(x, params, prefix=""):
    """x + conv1x1(N/2->N) . relu . conv3x3(N/2->N/2) . relu . conv1x1(N->N/2).

    Channel-preserving; requires an even channel count.
    """
    x = as_tensor(x)
    if x.shape[0] % 2 != 0:
        raise InvalidArgument("residual bottleneck needs an even channel count")
    p = prefix + "." if prefix else ""
    h = conv2d(x, _spec(params, p + "c0"))
    h = relu(h)
    h = conv2d(h, _spec(params, p + "c1", padding=1))
    h = relu(h)
    h = conv2d(h, _spec(params, p + "c2"))
    return add(x, h)


def attention_block(x, params, prefix=""):
    """x + trunk(x) * sigmoid(gate(x)); trunk and gate are 3 residual
    bottlenecks each, the gate followed by a 1x1 projection."""
    x = as_tensor(x)
    p = prefix + "." if prefix else ""
    t = x
    g = x
    for i in range(3):
        t = residual_bottleneck(t, params, p + f"trunk.rb{i}")
        g = residual_bottleneck(g, params, p + f"gate.rb{i}")
    g = conv2d(g, _spec(params, p + "gate.proj"))
    return add(x, t * sigmoid(g))


def gdn(x, beta, gamma, inverse=False):
    """Generalized divisive normalization (ablation-only nonlinearity):
    y_i = x_i / sqrt(beta_i + sum_j gamma_ij * x_j^2); inverse multiplies."""
    x = as_tensor(x)
    beta = np.asarray(beta, dtype=np.float32)
    gamma = np.asarray(gamma, dtype=np.float32)
    c = x.shape[0]
    if beta.shape != (c,) or gamma.shape != (c, c):
        raise InvalidArgument("gdn parameter shapes must be (C,) and (C, C)")
    if not np.all(beta > 0):
        raise InvalidArgument("gdn beta must be positive")
    if not np.all(gamma >= 0):
        raise InvalidArgument("gdn gamma must be non-negative")
    norm = np.sqrt(beta[:, None, None] + np.tensordot(gamma, x * x, axes=1))
    return x * norm if inverse else x / norm


def bilinear_upsample2x(x):
    """Double both spatial dims with align-corners-false bilinear sampling:
    output pixel o reads source coordinate (o + 0.5)/2 - 0.5, edges clamped."""
    x = as_tensor(x)
    out = _upsample_axis(x, axis=1)
    return _upsample_axis(out, axis=2)


def _upsample_axis(x, axis):
    n = x.shape[axis]
    src = (np.arange(2 * n, dtype=np.float32) + np.float32(0.5)) / np.float32(2.0) \
        - np.float32(0.5)
    i0 = np.floor(src).astype(np.int64)
    t = (src - i0.astype(np.float32)).astype(np.float32)
    i0c = np.clip(i0, 0, n - 1)
    i1c = np.clip(i0 + 1, 0, n - 1)
    a = np.take(x, i0c, axis=axis)
    b = np.take(x, i1c, axis=axis)
    shape = [1, 1, 1]
    shape[axis] = 2 * n
    t = t.reshape(shape)
    return a * (np.float32(1.0) - t) + b * t
