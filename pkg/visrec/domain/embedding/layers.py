"""Layers with exact reverse-mode gradients.

Each layer is stateless: `forward` returns (out, cache) and `backward` takes
the upstream gradient and that cache, returning (dx, parameter gradients).
Tensors are NCHW float64.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

Grads = dict[str, np.ndarray]


class Layer:
    name: str

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {}

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        return {}

    def forward(self, params: dict[str, np.ndarray], x: np.ndarray) -> tuple[np.ndarray, tuple]:
        raise NotImplementedError

    def backward(self, params: dict[str, np.ndarray], dout: np.ndarray, cache: tuple) -> tuple[np.ndarray, Grads]:
        raise NotImplementedError


class Conv2D(Layer):
    def __init__(self, name: str, in_channels: int, filters: int, kernel: int, stride: int, padding: int):
        self.name = name
        self.in_channels = in_channels
        self.filters = filters
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.w_key = f"{name}.w"
        self.b_key = f"{name}.b"

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {
            self.w_key: (self.filters, self.in_channels, self.kernel, self.kernel),
            self.b_key: (self.filters,),
        }

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        fan_in = self.in_channels * self.kernel * self.kernel
        w = rng.standard_normal(self.param_shapes()[self.w_key]) * np.sqrt(2.0 / fan_in)
        return {self.w_key: w, self.b_key: np.zeros(self.filters)}

    def _windows(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        windows = sliding_window_view(xp, (self.kernel, self.kernel), axis=(2, 3))
        return xp, windows[:, :, :: self.stride, :: self.stride]

    def forward(self, params: dict[str, np.ndarray], x: np.ndarray) -> tuple[np.ndarray, tuple]:
        w, b = params[self.w_key], params[self.b_key]
        xp, windows = self._windows(x)
        # (N, C, OH, OW, k, k) x (F, C, k, k) -> (N, OH, OW, F)
        out = np.tensordot(windows, w, axes=([1, 4, 5], [1, 2, 3]))
        out = out.transpose(0, 3, 1, 2) + b[None, :, None, None]
        return np.ascontiguousarray(out), (x.shape, xp.shape, windows)

    def backward(self, params: dict[str, np.ndarray], dout: np.ndarray, cache: tuple) -> tuple[np.ndarray, Grads]:
        w = params[self.w_key]
        x_shape, xp_shape, windows = cache
        _, _, oh, ow = dout.shape
        k, s, p = self.kernel, self.stride, self.padding

        dw = np.tensordot(dout, windows, axes=([0, 2, 3], [0, 2, 3]))
        db = dout.sum(axis=(0, 2, 3))

        # (N, F, OH, OW) x (F, C, k, k) -> (N, OH, OW, C, k, k), scattered back onto the padded input
        dcols = np.tensordot(dout, w, axes=([1], [0]))
        dxp = np.zeros(xp_shape)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i : i + s * oh : s, j : j + s * ow : s] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        dx = dxp[:, :, p : p + x_shape[2], p : p + x_shape[3]] if p else dxp
        return np.ascontiguousarray(dx), {self.w_key: dw, self.b_key: db}


class ReLU(Layer):
    def __init__(self, name: str):
        self.name = name

    def forward(self, params: dict[str, np.ndarray], x: np.ndarray) -> tuple[np.ndarray, tuple]:
        mask = x > 0
        return x * mask, (mask,)

    def backward(self, params: dict[str, np.ndarray], dout: np.ndarray, cache: tuple) -> tuple[np.ndarray, Grads]:
        (mask,) = cache
        return dout * mask, {}


class MaxPool2D(Layer):
    """Non-overlapping max pooling; trailing rows/columns that do not fill a window are dropped."""

    def __init__(self, name: str, size: int):
        self.name = name
        self.size = size

    def forward(self, params: dict[str, np.ndarray], x: np.ndarray) -> tuple[np.ndarray, tuple]:
        n, c, h, w = x.shape
        s = self.size
        oh, ow = h // s, w // s
        cropped = x[:, :, : oh * s, : ow * s]
        regions = cropped.reshape(n, c, oh, s, ow, s).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, s * s)
        # argmax picks the first maximum, so ties route the gradient deterministically
        idx = regions.argmax(axis=-1)
        out = np.take_along_axis(regions, idx[..., None], axis=-1)[..., 0]
        return out, (x.shape, idx)

    def backward(self, params: dict[str, np.ndarray], dout: np.ndarray, cache: tuple) -> tuple[np.ndarray, Grads]:
        x_shape, idx = cache
        n, c, h, w = x_shape
        s = self.size
        oh, ow = h // s, w // s
        dregions = np.zeros((n, c, oh, ow, s * s))
        np.put_along_axis(dregions, idx[..., None], dout[..., None], axis=-1)
        dcropped = dregions.reshape(n, c, oh, ow, s, s).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh * s, ow * s)
        dx = np.zeros(x_shape)
        dx[:, :, : oh * s, : ow * s] = dcropped
        return dx, {}


class Dense(Layer):
    def __init__(self, name: str, in_features: int, units: int, relu_follows: bool):
        self.name = name
        self.in_features = in_features
        self.units = units
        self.relu_follows = relu_follows
        self.w_key = f"{name}.w"
        self.b_key = f"{name}.b"

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {self.w_key: (self.in_features, self.units), self.b_key: (self.units,)}

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        gain = 2.0 if self.relu_follows else 1.0
        w = rng.standard_normal((self.in_features, self.units)) * np.sqrt(gain / self.in_features)
        return {self.w_key: w, self.b_key: np.zeros(self.units)}

    def forward(self, params: dict[str, np.ndarray], x: np.ndarray) -> tuple[np.ndarray, tuple]:
        flat = x.reshape(x.shape[0], -1)
        out = flat @ params[self.w_key] + params[self.b_key]
        return out, (x.shape, flat)

    def backward(self, params: dict[str, np.ndarray], dout: np.ndarray, cache: tuple) -> tuple[np.ndarray, Grads]:
        x_shape, flat = cache
        dw = flat.T @ dout
        db = dout.sum(axis=0)
        dx = (dout @ params[self.w_key].T).reshape(x_shape)
        return dx, {self.w_key: dw, self.b_key: db}


def l2_normalize(z: np.ndarray, min_norm: float) -> tuple[np.ndarray, tuple]:
    norms = np.sqrt(np.sum(z * z, axis=1, keepdims=True))
    safe = np.where(norms < min_norm, 1.0, norms)
    y = np.where(norms < min_norm, 0.0, z / safe)
    return y, (y, safe, norms < min_norm)


def l2_normalize_backward(dy: np.ndarray, cache: tuple) -> np.ndarray:
    y, norms, degenerate = cache
    dz = (dy - y * np.sum(y * dy, axis=1, keepdims=True)) / norms
    return np.where(degenerate, 0.0, dz)
