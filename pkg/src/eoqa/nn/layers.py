"""Layers over NCHW float64 arrays with explicit forward/backward passes.

Menu: conv3x3 (zero padding 1, optional stride), relu, maxpool2,
global_avg_pool, linear, softmax, pixel_shuffle, and a two-conv residual
block.  Each layer caches what its backward pass needs; backward returns the
input gradient and accumulates parameter gradients on Param.grad.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ParameterError


class Param:
    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)


def _kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    def params(self) -> list[Param]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError


_OFFSETS = [(dy, dx) for dy in range(3) for dx in range(3)]


class Conv3x3(Layer):
    def __init__(self, in_ch: int, out_ch: int, stride: int = 1,
                 rng: np.random.Generator | None = None):
        if stride < 1:
            raise ParameterError(f"stride must be >= 1, got {stride}")
        self.in_ch, self.out_ch, self.stride = in_ch, out_ch, stride
        rng = rng or np.random.default_rng(0)
        self.w = Param(_kaiming_uniform(rng, (out_ch, in_ch * 9), in_ch * 9))
        self.b = Param(np.zeros(out_ch))

    def params(self):
        return [self.w, self.b]

    def spec(self):
        return {"type": "conv3x3", "in_ch": self.in_ch, "out_ch": self.out_ch,
                "stride": self.stride}

    def _cols(self, xp: np.ndarray, ho: int, wo: int) -> np.ndarray:
        B, C = xp.shape[:2]
        s = self.stride
        cols = np.empty((B, C, 9, ho, wo))
        for i, (dy, dx) in enumerate(_OFFSETS):
            cols[:, :, i] = xp[:, :, dy:dy + s * (ho - 1) + 1:s, dx:dx + s * (wo - 1) + 1:s]
        return cols.reshape(B, C * 9, ho * wo)

    def forward(self, x: np.ndarray) -> np.ndarray:
        B, C, H, W = x.shape
        if C != self.in_ch:
            raise ParameterError(f"conv expects {self.in_ch} channels, got {C}")
        s = self.stride
        ho, wo = (H - 1) // s + 1, (W - 1) // s + 1
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        cols = self._cols(xp, ho, wo)
        out = np.matmul(self.w.value, cols)
        self._cache = (x.shape, cols)
        return out.reshape(B, self.out_ch, ho, wo) + self.b.value[None, :, None, None]

    def backward(self, gy: np.ndarray) -> np.ndarray:
        (B, C, H, W), cols = self._cache
        s = self.stride
        ho, wo = gy.shape[2], gy.shape[3]
        g = gy.reshape(B, self.out_ch, ho * wo)
        self.w.grad += np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0)
        self.b.grad += gy.sum(axis=(0, 2, 3))
        gcols = np.matmul(self.w.value.T, g)
        gcols = gcols.reshape(B, C, 9, ho, wo)
        gxp = np.zeros((B, C, H + 2, W + 2))
        for i, (dy, dx) in enumerate(_OFFSETS):
            gxp[:, :, dy:dy + s * (ho - 1) + 1:s, dx:dx + s * (wo - 1) + 1:s] += gcols[:, :, i]
        return gxp[:, :, 1:-1, 1:-1]


class ReLU(Layer):
    def spec(self):
        return {"type": "relu"}

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, gy):
        return np.where(self._mask, gy, 0.0)


class MaxPool2(Layer):
    """2x2 max pooling, stride 2; odd trailing rows/cols are dropped."""

    def spec(self):
        return {"type": "maxpool2"}

    def forward(self, x):
        B, C, H, W = x.shape
        h2, w2 = H // 2, W // 2
        if h2 < 1 or w2 < 1:
            raise ParameterError(f"input {H}x{W} too small for 2x2 pooling")
        win = x[:, :, :h2 * 2, :w2 * 2].reshape(B, C, h2, 2, w2, 2)
        win = win.transpose(0, 1, 2, 4, 3, 5).reshape(B, C, h2, w2, 4)
        self._idx = win.argmax(axis=-1)
        self._shape = (B, C, H, W)
        return np.take_along_axis(win, self._idx[..., None], axis=-1)[..., 0]

    def backward(self, gy):
        B, C, H, W = self._shape
        h2, w2 = H // 2, W // 2
        gwin = np.zeros((B, C, h2, w2, 4))
        np.put_along_axis(gwin, self._idx[..., None], gy[..., None], axis=-1)
        gx = np.zeros((B, C, H, W))
        gx[:, :, :h2 * 2, :w2 * 2] = (gwin.reshape(B, C, h2, w2, 2, 2)
                                      .transpose(0, 1, 2, 4, 3, 5)
                                      .reshape(B, C, h2 * 2, w2 * 2))
        return gx


class GlobalAvgPool(Layer):
    """(B, C, H, W) -> (B, C) spatial mean."""

    def spec(self):
        return {"type": "gap"}

    def forward(self, x):
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, gy):
        B, C, H, W = self._shape
        return np.broadcast_to(gy[:, :, None, None], self._shape) / (H * W)


class Linear(Layer):
    def __init__(self, in_f: int, out_f: int, rng: np.random.Generator | None = None):
        self.in_f, self.out_f = in_f, out_f
        rng = rng or np.random.default_rng(0)
        self.w = Param(_kaiming_uniform(rng, (out_f, in_f), in_f))
        self.b = Param(np.zeros(out_f))

    def params(self):
        return [self.w, self.b]

    def spec(self):
        return {"type": "linear", "in_f": self.in_f, "out_f": self.out_f}

    def forward(self, x):
        self._in_shape = x.shape
        x2 = x.reshape(x.shape[0], -1)
        if x2.shape[1] != self.in_f:
            raise ParameterError(f"linear expects {self.in_f} features, got {x2.shape[1]}")
        self._x = x2
        return x2 @ self.w.value.T + self.b.value

    def backward(self, gy):
        self.w.grad += gy.T @ self._x
        self.b.grad += gy.sum(axis=0)
        return (gy @ self.w.value).reshape(self._in_shape)


class Softmax(Layer):
    """Softmax over axis 1 (class axis)."""

    def spec(self):
        return {"type": "softmax"}

    def forward(self, x):
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        self._p = e / e.sum(axis=1, keepdims=True)
        return self._p

    def backward(self, gy):
        p = self._p
        dot = (gy * p).sum(axis=1, keepdims=True)
        return p * (gy - dot)


class PixelShuffle(Layer):
    """(B, c*r^2, H, W) -> (B, c, rH, rW) channel-to-space rearrangement."""

    def __init__(self, scale: int):
        if scale < 1:
            raise ParameterError(f"scale must be >= 1, got {scale}")
        self.scale = scale

    def spec(self):
        return {"type": "pixel_shuffle", "scale": self.scale}

    def forward(self, x):
        B, C, H, W = x.shape
        r = self.scale
        if C % (r * r) != 0:
            raise ParameterError(f"{C} channels not divisible by {r}^2")
        c = C // (r * r)
        self._shape = x.shape
        y = x.reshape(B, c, r, r, H, W).transpose(0, 1, 4, 2, 5, 3)
        return np.ascontiguousarray(y.reshape(B, c, H * r, W * r))

    def backward(self, gy):
        B, C, H, W = self._shape
        r = self.scale
        c = C // (r * r)
        g = gy.reshape(B, c, H, r, W, r).transpose(0, 1, 3, 5, 2, 4)
        return np.ascontiguousarray(g.reshape(B, C, H, W))


class ResidualBlock(Layer):
    """x + conv(relu(conv(x))), then relu."""

    def __init__(self, ch: int, rng: np.random.Generator | None = None):
        self.ch = ch
        rng = rng or np.random.default_rng(0)
        self.conv1 = Conv3x3(ch, ch, rng=rng)
        self.conv2 = Conv3x3(ch, ch, rng=rng)
        self.relu1 = ReLU()
        self.relu2 = ReLU()

    def params(self):
        return self.conv1.params() + self.conv2.params()

    def spec(self):
        return {"type": "resblock", "ch": self.ch}

    def forward(self, x):
        h = self.conv2.forward(self.relu1.forward(self.conv1.forward(x)))
        return self.relu2.forward(x + h)

    def backward(self, gy):
        g = self.relu2.backward(gy)
        gh = self.conv1.backward(self.relu1.backward(self.conv2.backward(g)))
        return g + gh


class Sequential(Layer):
    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def params(self):
        out = []
        for l in self.layers:
            out.extend(l.params())
        return out

    def spec(self):
        return [l.spec() for l in self.layers]

    def forward(self, x):
        for l in self.layers:
            x = l.forward(x)
        return x

    def backward(self, gy):
        for l in reversed(self.layers):
            gy = l.backward(gy)
        return gy


_BUILDERS = {
    "conv3x3": lambda s, rng: Conv3x3(s["in_ch"], s["out_ch"], s.get("stride", 1), rng),
    "relu": lambda s, rng: ReLU(),
    "maxpool2": lambda s, rng: MaxPool2(),
    "gap": lambda s, rng: GlobalAvgPool(),
    "linear": lambda s, rng: Linear(s["in_f"], s["out_f"], rng),
    "softmax": lambda s, rng: Softmax(),
    "pixel_shuffle": lambda s, rng: PixelShuffle(s["scale"]),
    "resblock": lambda s, rng: ResidualBlock(s["ch"], rng),
}


def build_model(spec: list[dict], seed: int) -> Sequential:
    """Instantiate a Sequential from its layer descriptors.

    Initialization is Kaiming-uniform (fan-in) with zero biases; every layer
    draws from its own seeded substream, so identical (spec, seed) pairs
    produce identical parameters.
    """
    root = np.random.SeedSequence(int(seed))
    children = root.spawn(len(spec))
    layers = []
    for s, child in zip(spec, children):
        t = s.get("type")
        if t not in _BUILDERS:
            raise ParameterError(f"unknown layer type {t!r}")
        layers.append(_BUILDERS[t](s, np.random.Generator(np.random.Philox(child))))
    return Sequential(layers)
