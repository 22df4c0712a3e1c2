"""Layers of the sequential network engine.

Every layer exposes ``forward(x, train, rng) -> (y, cache)`` and
``backward(cache, grad_y) -> (grad_x, grads)`` where ``grads`` mirrors
``params``. Tensors are NCHW for feature maps and NC for vectors.
"""

from dataclasses import dataclass, field

import numpy as np

from .. import _accel
from ..errors import ConfigurationError, DimensionError

LAYER_KINDS = ("conv2d", "batchnorm", "relu", "maxpool", "adaptive_avg_pool", "dense", "dropout")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    hparams: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        for key, value in self.hparams.items():
            if key == "padding":
                if value < 0:
                    raise ConfigurationError(f"padding must be non-negative, got {value}")
            elif key == "rate":
                if not 0.0 <= value < 1.0:
                    raise ConfigurationError(f"dropout rate must be in [0, 1), got {value}")
            elif isinstance(value, (int, float)) and not isinstance(value, bool) and value <= 0:
                raise ConfigurationError(f"{self.kind}.{key} must be positive, got {value}")

    def to_json(self):
        return {"kind": self.kind, **self.hparams}

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        kind = obj.pop("kind")
        return cls(kind, obj)


def kaiming_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    kind = ""

    def __init__(self):
        self.params = {}
        self.buffers = {}
        self.name = self.kind

    def init(self, rng, dtype):
        pass

    def check_input(self, x):
        pass

    def kink_signature(self, cache):
        return None

    def spec(self):
        return LayerSpec(self.kind, self._hparams())

    def _hparams(self):
        return {}

    def _dim_error(self, msg):
        return DimensionError(f"{self.name}: {msg}")


class Conv2d(Layer):
    kind = "conv2d"

    def __init__(self, in_channels, out_channels, kernel_size=3, padding=None):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.padding = kernel_size // 2 if padding is None else padding

    def _hparams(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel_size": self.kernel_size, "padding": self.padding}

    def init(self, rng, dtype):
        k = self.kernel_size
        fan_in = self.in_channels * k * k
        self.params["weight"] = kaiming_uniform(
            rng, (self.out_channels, self.in_channels, k, k), fan_in, dtype)
        self.params["bias"] = np.zeros(self.out_channels, dtype=dtype)

    def check_input(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise self._dim_error(
                f"expected (N, {self.in_channels}, H, W) input, got {x.shape}")

    def forward(self, x, train=False, rng=None):
        self.check_input(x)
        n, c, h, w = x.shape
        k, p = self.kernel_size, self.padding
        ho, wo = h + 2 * p - k + 1, w + 2 * p - k + 1
        if ho < 1 or wo < 1:
            raise self._dim_error(f"input {h}x{w} too small for kernel {k}")
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        wmat = self.params["weight"].reshape(self.out_channels, -1)
        y = np.empty((n, self.out_channels, ho * wo), dtype=x.dtype)
        for i in range(n):
            y[i] = wmat @ _accel.im2col(xp[i], k, k, ho, wo)
        y += self.params["bias"][None, :, None]
        return y.reshape(n, self.out_channels, ho, wo), (xp, x.shape)

    def backward(self, cache, gy):
        xp, xshape = cache
        n, c, h, w = xshape
        k, p = self.kernel_size, self.padding
        ho, wo = gy.shape[2], gy.shape[3]
        wmat = self.params["weight"].reshape(self.out_channels, -1)
        g2 = gy.reshape(n, self.out_channels, ho * wo)
        dw = np.zeros_like(wmat)
        dx = np.empty(xshape, dtype=gy.dtype)
        for i in range(n):
            cols = _accel.im2col(xp[i], k, k, ho, wo)
            dw += g2[i] @ cols.T
            dxp = _accel.col2im(wmat.T @ g2[i], c, k, k, ho, wo)
            dx[i] = dxp[:, p:p + h, p:p + w]
        grads = {"weight": dw.reshape(self.params["weight"].shape),
                 "bias": g2.sum(axis=(0, 2))}
        return dx, grads


class BatchNorm2d(Layer):
    kind = "batchnorm"

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        super().__init__()
        self.channels = channels
        self.momentum = momentum
        self.eps = eps

    def _hparams(self):
        return {"channels": self.channels, "momentum": self.momentum, "eps": self.eps}

    def init(self, rng, dtype):
        self.params["gamma"] = np.ones(self.channels, dtype=dtype)
        self.params["beta"] = np.zeros(self.channels, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(self.channels, dtype=dtype)
        self.buffers["running_var"] = np.ones(self.channels, dtype=dtype)

    def check_input(self, x):
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise self._dim_error(f"expected (N, {self.channels}, H, W) input, got {x.shape}")

    def forward(self, x, train=False, rng=None):
        self.check_input(x)
        shape = (1, -1, 1, 1)
        if train:
            m = x.shape[0] * x.shape[2] * x.shape[3]
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            mom = self.momentum
            unbiased = var * (m / max(m - 1, 1))
            rm, rv = self.buffers["running_mean"], self.buffers["running_var"]
            rm *= 1 - mom
            rm += mom * mean
            rv *= 1 - mom
            rv += mom * unbiased
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
        y = xhat * self.params["gamma"].reshape(shape) + self.params["beta"].reshape(shape)
        return y.astype(x.dtype, copy=False), (xhat, inv_std, train)

    def backward(self, cache, gy):
        xhat, inv_std, train = cache
        shape = (1, -1, 1, 1)
        dgamma = (gy * xhat).sum(axis=(0, 2, 3))
        dbeta = gy.sum(axis=(0, 2, 3))
        dxhat = gy * self.params["gamma"].reshape(shape)
        if train:
            dx = (dxhat - dxhat.mean(axis=(0, 2, 3), keepdims=True)
                  - xhat * (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True))
            dx *= inv_std.reshape(shape)
        else:
            dx = dxhat * inv_std.reshape(shape)
        return dx.astype(gy.dtype, copy=False), {"gamma": dgamma, "beta": dbeta}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False, rng=None):
        mask = x > 0
        return x * mask, (mask, x)

    def backward(self, cache, gy):
        return gy * cache[0], {}

    def kink_signature(self, cache):
        return cache[0]


class MaxPool2d(Layer):
    kind = "maxpool"

    def __init__(self, pool_size=2):
        super().__init__()
        self.pool_size = pool_size

    def _hparams(self):
        return {"pool_size": self.pool_size}

    def check_input(self, x):
        k = self.pool_size
        if x.ndim != 4 or x.shape[2] < k or x.shape[3] < k:
            raise self._dim_error(f"cannot pool {x.shape} with size {k}")

    def forward(self, x, train=False, rng=None):
        self.check_input(x)
        y, arg = _accel.maxpool_forward(x, self.pool_size)
        return y, (arg, x.shape)

    def backward(self, cache, gy):
        arg, (n, c, h, w) = cache
        return _accel.maxpool_backward(gy, arg, self.pool_size, h, w), {}

    def kink_signature(self, cache):
        return cache[0]


class AdaptiveAvgPool(Layer):
    """Global mean per channel: (N, C, H, W) -> (N, C)."""

    kind = "adaptive_avg_pool"

    def check_input(self, x):
        if x.ndim != 4:
            raise self._dim_error(f"expected a 4-d feature map, got {x.shape}")

    def forward(self, x, train=False, rng=None):
        self.check_input(x)
        return x.mean(axis=(2, 3)), x.shape

    def backward(self, cache, gy):
        n, c, h, w = cache
        dx = np.broadcast_to(gy[:, :, None, None] / (h * w), cache)
        return np.ascontiguousarray(dx), {}


class Dense(Layer):
    """y = x @ W + b with W stored as (in_features, out_features)."""

    kind = "dense"

    def __init__(self, in_features, out_features):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features

    def _hparams(self):
        return {"in_features": self.in_features, "out_features": self.out_features}

    def init(self, rng, dtype):
        self.params["weight"] = kaiming_uniform(
            rng, (self.in_features, self.out_features), self.in_features, dtype)
        self.params["bias"] = np.zeros(self.out_features, dtype=dtype)

    def check_input(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise self._dim_error(f"expected (N, {self.in_features}) input, got {x.shape}")

    def forward(self, x, train=False, rng=None):
        self.check_input(x)
        return x @ self.params["weight"] + self.params["bias"], x

    def backward(self, x, gy):
        grads = {"weight": x.T @ gy, "bias": gy.sum(axis=0)}
        return gy @ self.params["weight"].T, grads


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate=0.5):
        super().__init__()
        self.rate = rate

    def _hparams(self):
        return {"rate": self.rate}

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            return x, None
        if rng is None:
            raise ConfigurationError(f"{self.name}: rng_state required for dropout in train mode")
        keep = 1.0 - self.rate
        mask = (rng.random(x.shape) < keep).astype(x.dtype) / keep
        return x * mask, mask

    def backward(self, mask, gy):
        return (gy if mask is None else gy * mask), {}


_REGISTRY = {
    "conv2d": Conv2d, "batchnorm": BatchNorm2d, "relu": ReLU, "maxpool": MaxPool2d,
    "adaptive_avg_pool": AdaptiveAvgPool, "dense": Dense, "dropout": Dropout,
}


def layer_from_spec(spec):
    return _REGISTRY[spec.kind](**spec.hparams)
