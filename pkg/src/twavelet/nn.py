"""Neural layers, the subband attention fusion and the classifier head."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidInput

LEAKY_SLOPE = 0.01
BN_MOMENTUM = 0.9
BN_EPS = 1e-5
KEY_DIM = 32
HIDDEN_DIM = 1024


class Module:
    """Minimal parameter container with train/eval switching."""

    training: bool = True

    def children(self) -> Iterator[tuple[str, Module]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, dict):
                for k, v in value.items():
                    if isinstance(v, Module):
                        yield f"{name}.{k}", v

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name in getattr(self, "_buffers", ()):
            yield prefix + name, getattr(self, name)
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def train(self, mode: bool = True) -> Module:
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self) -> Module:
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def _uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


def _zeros(shape, dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


class Conv1d(Module):
    """Kernel-``k`` convolution with mirror padding so length is preserved."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 3, rng=None, zero_init=False, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.kernel = kernel
        if zero_init:
            self.weight = _zeros((out_ch, in_ch, kernel), dtype)
            self.bias = _zeros((out_ch,), dtype)
        else:
            self.weight = _uniform(rng, (out_ch, in_ch, kernel), in_ch * kernel, dtype)
            self.bias = _uniform(rng, (out_ch,), in_ch * kernel, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        left = (self.kernel - 1) // 2
        right = self.kernel - 1 - left
        if left or right:
            idx = ad.reflect_indices(x.shape[-1], max(left, right))
            if left != right:
                idx = idx[max(left, right) - left : len(idx) - (max(left, right) - right)]
            x = ad.take(x, idx, axis=-1)
        return ad.conv1d(x, self.weight, self.bias)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = _uniform(rng, (out_dim, in_dim), in_dim, dtype)
        self.bias = _uniform(rng, (out_dim,), in_dim, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[1]:
            raise InvalidInput(f"linear expects {self.weight.shape[1]} features, got {x.shape[-1]}")
        return x @ self.weight.T + self.bias


class BatchNorm1d(Module):
    """Batch normalization over the leading (batch) axis of a (batch, features) input."""

    _buffers = ("running_mean", "running_var")

    def __init__(self, dim: int, momentum: float = BN_MOMENTUM, eps: float = BN_EPS, dtype=np.float32):
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones(dim, dtype=dtype), requires_grad=True)
        self.beta = _zeros((dim,), dtype)
        self.running_mean = np.zeros(dim, dtype=dtype)
        self.running_var = np.ones(dim, dtype=dtype)

    def __call__(self, x: Tensor, use_batch_stats: bool | None = None) -> Tensor:
        if use_batch_stats is None:
            use_batch_stats = self.training
        if use_batch_stats:
            if x.shape[0] < 2:
                raise InvalidInput("batch norm needs a batch of at least 2 in training mode")
            mu = x.mean(axis=0, keepdims=True)
            xc = x - mu
            var = (xc * xc).mean(axis=0, keepdims=True)
            y = xc * ad.power(var + self.eps, -0.5)
            # running stats kept in double then stored back
            m = self.momentum
            n = x.shape[0]
            batch_var = var.data[0].astype(np.float64) * n / (n - 1)
            self.running_mean[...] = m * self.running_mean + (1 - m) * mu.data[0].astype(np.float64)
            self.running_var[...] = m * self.running_var + (1 - m) * batch_var
        else:
            scale = 1.0 / np.sqrt(self.running_var.astype(np.float64) + self.eps)
            y = (x - self.running_mean.astype(x.dtype)) * scale.astype(x.dtype)
        return y * self.gamma + self.beta


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: kept units are scaled by 1/(1-rate) during training."""
    if not training or rate == 0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / np.asarray(1 - rate, dtype=x.dtype)
    return x * keep


class Subnet(Module):
    """Conv(k3, C->3C) -> LeakyReLU -> Dropout -> Conv(k3, 3C->C) -> tanh."""

    def __init__(self, channels: int, rng=None, dropout_rate: float = 0.5, widen: int = 3, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.conv1 = Conv1d(channels, widen * channels, 3, rng=rng, dtype=dtype)
        self.conv2 = Conv1d(widen * channels, channels, 3, rng=rng, zero_init=True, dtype=dtype)
        self.dropout_rate = dropout_rate
        self.rng = rng

    def __call__(self, x: Tensor) -> Tensor:
        h = ad.leaky_relu(self.conv1(x), LEAKY_SLOPE)
        h = dropout(h, self.dropout_rate, self.rng, self.training)
        return ad.tanh(self.conv2(h))


class FusionHead(Module):
    """Query/key/value projections of the leaf features (``W h + b``)."""

    def __init__(self, in_dim: int, key_dim: int = KEY_DIM, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim = in_dim
        self.key_dim = key_dim
        for name in ("q", "k", "v"):
            setattr(self, f"W_{name}", _uniform(rng, (key_dim, in_dim), in_dim, dtype))
            setattr(self, f"b_{name}", _uniform(rng, (key_dim,), in_dim, dtype))

    def project(self, h: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """h: (..., c, m) -> q, k, v each (..., d, m)."""
        out = []
        for name in ("q", "k", "v"):
            W, b = getattr(self, f"W_{name}"), getattr(self, f"b_{name}")
            out.append(W @ h + b.reshape(-1, 1))
        return out[0], out[1], out[2]


def attention_weights(q: Tensor, k: Tensor) -> Tensor:
    """alpha[..., i, j] = softmax over keys i of k_i . q_j; columns sum to one."""
    scores = ad.transpose(k, _swap_last(k.ndim)) @ q
    return ad.softmax(scores, axis=-2)


def _swap_last(ndim: int) -> tuple[int, ...]:
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


def attention_fuse(h: Tensor, head: FusionHead, uniform: bool = False) -> Tensor:
    """Fuse leaf features ``h`` (..., c, m) into H (..., m, d).

    Row ``j`` of H is the alpha-weighted sum of value columns for query ``j``.
    With ``uniform=True`` every weight is 1/m (equal-weight fusion).
    """
    h = ad.as_tensor(h)
    if h.ndim < 2 or h.shape[-1] < 1:
        raise InvalidInput("attention_fuse needs at least one leaf feature")
    if h.shape[-2] != head.in_dim:
        raise InvalidInput(f"feature dim {h.shape[-2]} does not match fusion head {head.in_dim}")
    q, k, v = head.project(h)
    if uniform:
        m = h.shape[-1]
        alpha = Tensor(np.full(h.shape[:-2] + (m, m), 1.0 / m, dtype=h.dtype))
    else:
        alpha = attention_weights(q, k)
    # (v alpha)^T : (..., d, m) @ (..., m, m) -> (..., d, m) -> (..., m, d)
    return ad.transpose(v @ alpha, _swap_last(v.ndim))


class ClassifierHead(Module):
    def __init__(self, num_classes: int, in_dim: int = KEY_DIM, hidden: int = HIDDEN_DIM, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim = in_dim
        self.num_classes = num_classes
        self.fc1 = Linear(in_dim, hidden, rng=rng, dtype=dtype)
        self.bn = BatchNorm1d(hidden, dtype=dtype)
        self.fc2 = Linear(hidden, num_classes, rng=rng, dtype=dtype)

    def logits(self, H: Tensor, use_batch_stats: bool | None = None) -> Tensor:
        if H.shape[-1] != self.in_dim:
            raise InvalidInput(f"classifier expects d={self.in_dim}, got {H.shape[-1]}")
        z = H.mean(axis=-2)  # pool over the m leaf axis
        squeeze = z.ndim == 1
        if squeeze:
            z = z.reshape(1, -1)
        a = self.fc1(z)
        a = self.bn(a, use_batch_stats=use_batch_stats)
        a = ad.leaky_relu(a, LEAKY_SLOPE)
        out = self.fc2(a)
        return out.reshape(-1) if squeeze else out


def classify(H: Tensor, head: ClassifierHead, use_batch_stats: bool | None = None) -> Tensor:
    """Class probabilities for H of shape (m, d) or (batch, m, d)."""
    H = ad.as_tensor(H)
    if H.ndim == 2 and head.training and use_batch_stats is None:
        use_batch_stats = False
    return ad.softmax(head.logits(H, use_batch_stats), axis=-1)


def layer_forward(kind: str, x, params: dict | None = None) -> Tensor:
    """Apply a single layer of the given kind.

    ``params`` carries the layer's weights (``weight``/``bias``) or options
    (``slope``, ``rate``, ``rng``, ``training``, ``axis``, ``bn``).
    """
    params = params or {}
    x = ad.as_tensor(x)
    if kind == "conv1d":
        w = ad.as_tensor(params["weight"])
        b = params.get("bias")
        pad = params.get("padding", (w.shape[2] - 1) // 2)
        return ad.conv1d(ad.pad_reflect(x, pad), w, None if b is None else ad.as_tensor(b))
    if kind == "leaky_relu":
        return ad.leaky_relu(x, params.get("slope", LEAKY_SLOPE))
    if kind == "dropout":
        return dropout(x, params.get("rate", 0.5), params.get("rng", np.random.default_rng(0)), params.get("training", True))
    if kind == "tanh":
        return ad.tanh(x)
    if kind == "linear":
        w = ad.as_tensor(params["weight"])
        if x.shape[-1] != w.shape[1]:
            raise InvalidInput(f"linear expects {w.shape[1]} features, got {x.shape[-1]}")
        out = x @ w.T
        if params.get("bias") is not None:
            out = out + ad.as_tensor(params["bias"])
        return out
    if kind == "batchnorm":
        bn = params["bn"]
        return bn(x, use_batch_stats=params.get("training", bn.training))
    if kind == "softmax":
        return ad.softmax(x, axis=params.get("axis", -1))
    raise InvalidInput(f"unknown layer kind {kind!r}")
