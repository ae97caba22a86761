"""Layers with explicit forward/backward passes.

Activations use a (channels, batch, height, width) layout internally so that
the im2col matrix product of a convolution lands directly in that layout.
Each layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``Param.grad``.
"""

from __future__ import annotations

import numpy as np


class Param:
    """A trainable array and its gradient buffer."""

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size


class Layer:
    def params(self) -> list[tuple[str, Param]]:
        return []

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        return []


def _he_normal(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d(Layer):
    """k x k convolution without bias (a batch norm always follows)."""

    def __init__(self, in_ch, out_ch, k=3, stride=1, rng=None, dtype=np.float32):
        self.in_ch, self.out_ch, self.k, self.stride = in_ch, out_ch, k, stride
        self.pad = k // 2
        rng = rng or np.random.default_rng(0)
        self.weight = Param(_he_normal(rng, (out_ch, in_ch, k, k), in_ch * k * k, dtype))

    def params(self):
        return [("weight", self.weight)]

    def out_hw(self, h, w):
        return (h + 2 * self.pad - self.k) // self.stride + 1, (w + 2 * self.pad - self.k) // self.stride + 1

    def forward(self, x, train=False):
        C, B, H, W = x.shape
        k, s, p = self.k, self.stride, self.pad
        Ho, Wo = self.out_hw(H, W)
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        cols = np.empty((C, k, k, B, Ho, Wo), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                cols[:, i, j] = xp[:, :, i:i + s * (Ho - 1) + 1:s, j:j + s * (Wo - 1) + 1:s]
        cols = cols.reshape(C * k * k, B * Ho * Wo)
        self._cache = (cols, x.shape, (Ho, Wo))
        out = self.weight.value.reshape(self.out_ch, -1) @ cols
        return out.reshape(self.out_ch, B, Ho, Wo)

    def backward(self, dout):
        cols, (C, B, H, W), (Ho, Wo) = self._cache
        k, s, p = self.k, self.stride, self.pad
        d2 = dout.reshape(self.out_ch, -1)
        self.weight.grad += (d2 @ cols.T).reshape(self.weight.shape)
        dcols = (self.weight.value.reshape(self.out_ch, -1).T @ d2).reshape(C, k, k, B, Ho, Wo)
        dxp = np.zeros((C, B, H + 2 * p, W + 2 * p), dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + s * (Ho - 1) + 1:s, j:j + s * (Wo - 1) + 1:s] += dcols[:, i, j]
        return dxp[:, :, p:p + H, p:p + W] if p else dxp


class BatchNorm2d(Layer):
    """Per-channel batch norm; batch statistics in training, running ones otherwise.

    Running statistics follow ``r <- momentum * r + (1 - momentum) * batch``.
    """

    def __init__(self, ch, eps=1e-5, momentum=0.9, dtype=np.float32):
        self.eps, self.momentum = eps, momentum
        self.gamma = Param(np.ones((ch, 1, 1, 1), dtype=dtype))
        self.beta = Param(np.zeros((ch, 1, 1, 1), dtype=dtype))
        self.running_mean = np.zeros((ch, 1, 1, 1), dtype=dtype)
        self.running_var = np.ones((ch, 1, 1, 1), dtype=dtype)
        self.track_stats = True

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def forward(self, x, train=False):
        if train:
            mean = x.mean(axis=(1, 2, 3), keepdims=True)
            var = x.var(axis=(1, 2, 3), keepdims=True)
            if self.track_stats:
                m = self.momentum
                self.running_mean[...] = m * self.running_mean + (1 - m) * mean
                self.running_var[...] = m * self.running_var + (1 - m) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, train)
        return self.gamma.value * xhat + self.beta.value

    def backward(self, dout):
        xhat, inv_std, train = self._cache
        self.gamma.grad += (dout * xhat).sum(axis=(1, 2, 3), keepdims=True)
        self.beta.grad += dout.sum(axis=(1, 2, 3), keepdims=True)
        dxhat = dout * self.gamma.value
        if not train:
            return dxhat * inv_std
        n = xhat[0].size
        return (inv_std / n) * (
            n * dxhat
            - dxhat.sum(axis=(1, 2, 3), keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=(1, 2, 3), keepdims=True)
        )


class ReLU(Layer):
    def forward(self, x, train=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class ResidualBlock(Layer):
    """conv-BN-ReLU-conv-BN plus shortcut, then ReLU.

    The shortcut is the identity, or a strided 1x1 conv + BN projection when
    the stride or the channel count changes.
    """

    def __init__(self, in_ch, out_ch, stride=1, rng=None, dtype=np.float32):
        self.conv1 = Conv2d(in_ch, out_ch, 3, stride, rng, dtype)
        self.bn1 = BatchNorm2d(out_ch, dtype=dtype)
        self.relu1 = ReLU()
        self.conv2 = Conv2d(out_ch, out_ch, 3, 1, rng, dtype)
        self.bn2 = BatchNorm2d(out_ch, dtype=dtype)
        self.projection = stride != 1 or in_ch != out_ch
        if self.projection:
            self.short_conv = Conv2d(in_ch, out_ch, 1, stride, rng, dtype)
            self.short_bn = BatchNorm2d(out_ch, dtype=dtype)
        self.relu_out = ReLU()

    def _parts(self):
        parts = [("conv1", self.conv1), ("bn1", self.bn1), ("conv2", self.conv2), ("bn2", self.bn2)]
        if self.projection:
            parts += [("short_conv", self.short_conv), ("short_bn", self.short_bn)]
        return parts

    def params(self):
        return [(f"{n}.{pn}", p) for n, layer in self._parts() for pn, p in layer.params()]

    def buffers(self):
        return [(f"{n}.{bn}", b) for n, layer in self._parts() for bn, b in layer.buffers()]

    def shortcut(self, x, train=False):
        if self.projection:
            return self.short_bn.forward(self.short_conv.forward(x, train), train)
        return x

    def branch(self, x, train=False):
        h = self.relu1.forward(self.bn1.forward(self.conv1.forward(x, train), train), train)
        return self.bn2.forward(self.conv2.forward(h, train), train)

    def forward(self, x, train=False):
        return self.relu_out.forward(self.branch(x, train) + self.shortcut(x, train), train)

    def backward(self, dout):
        d = self.relu_out.backward(dout)
        db = self.bn2.backward(d)
        db = self.conv2.backward(db)
        db = self.relu1.backward(db)
        db = self.bn1.backward(db)
        dx = self.conv1.backward(db)
        if self.projection:
            dx = dx + self.short_conv.backward(self.short_bn.backward(d))
        else:
            dx = dx + d
        return dx


class GlobalAvgPool(Layer):
    """(C, B, H, W) -> (B, C)."""

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.mean(axis=(2, 3)).T

    def backward(self, dout):
        C, B, H, W = self._shape
        return np.broadcast_to((dout.T / (H * W))[:, :, None, None], self._shape).copy()


class Dense(Layer):
    def __init__(self, n_in, n_out, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.weight = Param(_he_normal(rng, (n_in, n_out), n_in, dtype))
        self.bias = Param(np.zeros(n_out, dtype=dtype))

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def forward(self, x, train=False):
        self._x = x
        return x @ self.weight.value + self.bias.value

    def backward(self, dout):
        self.weight.grad += self._x.T @ dout
        self.bias.grad += dout.sum(axis=0)
        return dout @ self.weight.value.T
