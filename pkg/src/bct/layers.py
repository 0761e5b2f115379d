"""Neural-net layers composed from tensor ops, plus the two model builders.

Convolution and pooling register their own backward closures rather than
composing primitives: patches are gathered with strided slicing (one slice
per kernel offset) and contracted with BLAS matmuls, which keeps a full
training run at desk scale in the seconds-to-minutes range. The scatter in
the conv/pool backward uses the same fixed slice order, so gradients are
bit-reproducible.

Layout is NCHW. Parameter names inside a layer are "weight" and "bias";
Model prefixes them with the layer's name ("conv1.weight", ...).
"""

import numpy as np

from .rng import Rng, derive
from .tensor import DomainError, ShapeError, Tensor


def glorot_uniform(rng: Rng, shape: tuple, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    """Uniform(-limit, limit) with limit = sqrt(6 / (fan_in + fan_out))."""
    limit = float(np.sqrt(6.0 / (fan_in + fan_out)))
    n = int(np.prod(shape))
    return rng.uniform(n, -limit, limit).reshape(shape).astype(dtype)


def _gather_patches(xp: np.ndarray, kh: int, kw: int, s: int, ho: int, wo: int) -> np.ndarray:
    """(N,C,Hp,Wp) -> (N,C,kh,kw,ho,wo) window view copies, fixed offset order."""
    n, c = xp.shape[:2]
    out = np.empty((n, c, kh, kw, ho, wo), dtype=xp.dtype)
    for ky in range(kh):
        for kx in range(kw):
            out[:, :, ky, kx] = xp[:, :, ky : ky + s * ho : s, kx : kx + s * wo : s]
    return out


def _scatter_patches(dxp: np.ndarray, dp: np.ndarray, kh: int, kw: int, s: int, ho: int, wo: int):
    """Adjoint of _gather_patches: accumulate window grads back into dxp."""
    for ky in range(kh):
        for kx in range(kw):
            dxp[:, :, ky : ky + s * ho : s, kx : kx + s * wo : s] += dp[:, :, ky, kx]


class Conv2d:
    """2-D cross-correlation with optional zero padding.

    weight shape (out_channels, in_channels, kh, kw), bias shape (out_channels,).
    Output spatial dims must come out integral: (H + 2p - k) divisible by stride.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int = 3,
        stride: int = 1,
        padding: int = 0,
        weight=None,
        bias=None,
        rng: Rng | None = None,
        dtype=np.float32,
    ):
        if min(in_channels, out_channels, kernel_size, stride) < 1 or padding < 0:
            raise ValueError("conv: channels/kernel/stride must be >= 1, padding >= 0")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        wshape = (out_channels, in_channels, kernel_size, kernel_size)
        if weight is None:
            if rng is None:
                raise ValueError("conv: pass an explicit weight or an init rng")
            fan = in_channels * kernel_size * kernel_size, out_channels * kernel_size * kernel_size
            weight = glorot_uniform(rng, wshape, fan[0], fan[1], dtype)
        weight = np.asarray(weight, dtype=dtype)
        if weight.shape != wshape:
            raise ShapeError(f"conv: weight shape {weight.shape} != {wshape}")
        bias = np.zeros(out_channels, dtype=dtype) if bias is None else np.asarray(bias, dtype=dtype)
        if bias.shape != (out_channels,):
            raise ShapeError(f"conv: bias shape {bias.shape} != ({out_channels},)")
        self.weight = Tensor(weight, requires_grad=True, dtype=dtype)
        self.bias = Tensor(bias, requires_grad=True, dtype=dtype)

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def out_shape(self, h: int, w: int) -> tuple[int, int]:
        k, s, p = self.kernel_size, self.stride, self.padding
        for name, dim in (("height", h), ("width", w)):
            if dim + 2 * p < k:
                raise ShapeError(f"conv: kernel {k} does not fit input {name} {dim} (padding {p})")
            if (dim + 2 * p - k) % s != 0:
                raise ShapeError(
                    f"conv: {name} {dim} with padding {p}, kernel {k}, stride {s} "
                    f"leaves a remainder; output size must be exact"
                )
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4:
            raise ShapeError(f"conv: expected NCHW input, got shape {x.shape}")
        n, c, h, w = x.shape
        if c != self.in_channels:
            raise ShapeError(f"conv: input has {c} channels, layer expects {self.in_channels}")
        ho, wo = self.out_shape(h, w)
        k, s, p = self.kernel_size, self.stride, self.padding
        weight, bias = self.weight, self.bias

        xp = x.data
        if p:
            xp = np.pad(xp, ((0, 0), (0, 0), (p, p), (p, p)))
        patches = _gather_patches(xp, k, k, s, ho, wo).reshape(n, c * k * k, ho * wo)
        w2 = weight.data.reshape(self.out_channels, c * k * k)
        out = np.matmul(w2, patches)  # (N, out_c, ho*wo)
        out += bias.data[None, :, None]
        out = out.reshape(n, self.out_channels, ho, wo)

        def backward(g):
            g2 = g.reshape(n, self.out_channels, ho * wo)
            weight.accumulate_grad(
                np.tensordot(g2, patches, axes=([0, 2], [0, 2])).reshape(weight.shape)
            )
            bias.accumulate_grad(g2.sum(axis=(0, 2)))
            if x.requires_grad:
                dpatches = np.matmul(w2.T, g2).reshape(n, c, k, k, ho, wo)
                dxp = np.zeros_like(xp)
                _scatter_patches(dxp, dpatches, k, k, s, ho, wo)
                x.accumulate_grad(dxp[:, :, p : p + h, p : p + w] if p else dxp)

        return Tensor.from_op(out, (x, weight, bias), backward)

    __call__ = forward


class MaxPool2d:
    """Window max pooling; ties give the gradient to the lowest flat index."""

    def __init__(self, window: int = 2, stride: int | None = None):
        if window < 1:
            raise ValueError("pool: window must be >= 1")
        self.window = window
        self.stride = window if stride is None else stride
        if self.stride < 1:
            raise ValueError("pool: stride must be >= 1")

    def params(self):
        return {}

    def out_shape(self, h: int, w: int) -> tuple[int, int]:
        k, s = self.window, self.stride
        for name, dim in (("height", h), ("width", w)):
            if dim < k:
                raise ShapeError(f"pool: window {k} does not fit input {name} {dim}")
            if (dim - k) % s != 0:
                raise ShapeError(
                    f"pool: {name} {dim} with window {k}, stride {s} leaves a remainder"
                )
        return (h - k) // s + 1, (w - k) // s + 1

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4:
            raise ShapeError(f"pool: expected NCHW input, got shape {x.shape}")
        n, c, h, w = x.shape
        ho, wo = self.out_shape(h, w)
        k, s = self.window, self.stride
        windows = _gather_patches(x.data, k, k, s, ho, wo).reshape(n, c, k * k, ho * wo)
        idx = np.argmax(windows, axis=2)  # first max wins on ties
        out = np.take_along_axis(windows, idx[:, :, None, :], axis=2)[:, :, 0, :]
        out = out.reshape(n, c, ho, wo)

        def backward(g):
            dwin = np.zeros((n, c, k * k, ho * wo), dtype=g.dtype)
            np.put_along_axis(dwin, idx[:, :, None, :], g.reshape(n, c, 1, ho * wo), axis=2)
            dx = np.zeros_like(x.data)
            _scatter_patches(dx, dwin.reshape(n, c, k, k, ho, wo), k, k, s, ho, wo)
            x.accumulate_grad(dx)

        return Tensor.from_op(out, (x,), backward)

    __call__ = forward


class Flatten:
    """(N, C, H, W) -> (N, C*H*W), row-major."""

    def params(self):
        return {}

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim < 2:
            raise ShapeError(f"flatten: expected batched input, got shape {x.shape}")
        n = x.shape[0]
        return x.reshape(n, x.size // n)

    __call__ = forward


class Dense:
    """Affine map y = x W^T + b with weight shape (out_features, in_features)."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        weight=None,
        bias=None,
        rng: Rng | None = None,
        dtype=np.float32,
    ):
        if min(in_features, out_features) < 1:
            raise ValueError("dense: feature counts must be >= 1")
        self.in_features = in_features
        self.out_features = out_features
        if weight is None:
            if rng is None:
                raise ValueError("dense: pass an explicit weight or an init rng")
            weight = glorot_uniform(rng, (out_features, in_features), in_features, out_features, dtype)
        weight = np.asarray(weight, dtype=dtype)
        if weight.shape != (out_features, in_features):
            raise ShapeError(f"dense: weight shape {weight.shape} != {(out_features, in_features)}")
        bias = np.zeros(out_features, dtype=dtype) if bias is None else np.asarray(bias, dtype=dtype)
        if bias.shape != (out_features,):
            raise ShapeError(f"dense: bias shape {bias.shape} != ({out_features},)")
        self.weight = Tensor(weight, requires_grad=True, dtype=dtype)
        self.bias = Tensor(bias, requires_grad=True, dtype=dtype)

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2:
            raise ShapeError(f"dense: expected (N, features) input, got shape {x.shape}")
        if x.shape[1] != self.in_features:
            raise ShapeError(f"dense: input has {x.shape[1]} features, layer expects {self.in_features}")
        weight, bias = self.weight, self.bias
        out = x.data @ weight.data.T + bias.data

        def backward(g):
            if x.requires_grad:
                x.accumulate_grad(g @ weight.data)
            weight.accumulate_grad(g.T @ x.data)
            bias.accumulate_grad(g.sum(axis=0))

        return Tensor.from_op(out, (x, weight, bias), backward)

    __call__ = forward


def sigmoid(x: Tensor) -> Tensor:
    """Numerically stable logistic: exp only ever sees non-positive arguments."""
    a = x.data
    pos = a >= 0
    e = np.exp(np.where(pos, -a, a))
    s = np.where(pos, 1.0 / (1.0 + e), e / (1.0 + e)).astype(a.dtype)

    def backward(g):
        x.accumulate_grad(g * s * (1.0 - s))

    return Tensor.from_op(s, (x,), backward)


def relu(x: Tensor) -> Tensor:
    """max(0, x); the gradient at exactly 0 is 0."""
    a = x.data
    mask = a > 0
    out = np.where(mask, a, a.dtype.type(0))

    def backward(g):
        x.accumulate_grad(g * mask)

    return Tensor.from_op(out, (x,), backward)


def softmax(x: Tensor) -> Tensor:
    """Row softmax over the last axis, max-shifted for stability."""
    a = x.data
    shifted = a - a.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * s).sum(axis=-1, keepdims=True)
        x.accumulate_grad(s * (g - dot))

    return Tensor.from_op(s, (x,), backward)


_ACTIVATIONS = {"sigmoid": sigmoid, "relu": relu, "softmax": softmax}


class Activation:
    """Named nonlinearity layer; kind is one of sigmoid / relu / softmax."""

    def __init__(self, kind: str):
        if kind not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}")
        self.kind = kind
        self._fn = _ACTIVATIONS[kind]

    def params(self):
        return {}

    def forward(self, x: Tensor) -> Tensor:
        return self._fn(x)

    __call__ = forward


class Model:
    """An ordered stack of layers with a flat, name-addressed parameter registry.

    Registry keys are "<layer name>.<param name>" in layer order; iteration
    order is definition order everywhere (init, updates, checkpoints).
    """

    def __init__(self, layers: list):
        self.layers = []
        self.params: dict[str, Tensor] = {}
        for name, layer in layers:
            self.layers.append((name, layer))
            lparams = layer.params()
            if lparams and not name:
                raise ValueError("layers with parameters must be named")
            for pname, tensor in lparams.items():
                full = f"{name}.{pname}"
                if full in self.params:
                    raise ValueError(f"duplicate parameter name {full!r}")
                self.params[full] = tensor

    def forward(self, x: Tensor) -> Tensor:
        for _, layer in self.layers:
            x = layer(x)
        return x

    __call__ = forward

    def param_count(self) -> int:
        return sum(t.size for t in self.params.values())

    def state(self) -> dict[str, np.ndarray]:
        """Copies of all parameter arrays, registry order."""
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        """Strict in-place load: names and shapes must match the registry exactly."""
        missing = sorted(set(self.params) - set(state))
        extra = sorted(set(state) - set(self.params))
        if missing or extra:
            raise KeyError(f"state mismatch: missing {missing}, unexpected {extra}")
        for name, t in self.params.items():
            arr = np.asarray(state[name])
            if arr.shape != t.shape:
                raise ShapeError(f"param {name!r}: shape {arr.shape} != {t.shape}")
            t.data[...] = arr.astype(t.dtype)


_INIT_STREAM = 0x1A7E57  # model-init stream tag, keeps init draws apart from other uses


def build_cnn(
    input_shape: tuple = (3, 64, 64),
    channels: tuple = (8, 16, 32),
    dense_width: int = 64,
    num_classes: int = 2,
    kernel_size: int = 3,
    pool_size: int = 2,
    seed: int = 0,
    dtype=np.float32,
) -> Model:
    """Three sigmoid conv+pool blocks, a relu dense layer, and a softmax head.

    Convs keep spatial size (stride 1, padding kernel//2 for odd kernels);
    each pool divides H and W by pool_size, so both must divide out exactly.
    Weights are Glorot-uniform from the seed, biases zero; the same seed and
    config always produce bit-identical parameters.
    """
    c, h, w = input_shape
    rng = Rng(derive(seed, _INIT_STREAM))
    pad = kernel_size // 2
    stack = []
    in_c = c
    for i, out_c in enumerate(channels, start=1):
        conv = Conv2d(in_c, out_c, kernel_size, stride=1, padding=pad, rng=rng, dtype=dtype)
        h, w = conv.out_shape(h, w)
        pool = MaxPool2d(pool_size)
        stack.append((f"conv{i}", conv))
        stack.append((None, Activation("sigmoid")))
        h, w = pool.out_shape(h, w)
        stack.append((None, pool))
        in_c = out_c
    stack.append((None, Flatten()))
    feat = in_c * h * w
    stack.append(("dense1", Dense(feat, dense_width, rng=rng, dtype=dtype)))
    stack.append((None, Activation("relu")))
    stack.append(("dense2", Dense(dense_width, num_classes, rng=rng, dtype=dtype)))
    stack.append((None, Activation("softmax")))
    return Model(stack)


def build_backbone(
    input_shape: tuple = (3, 32, 32),
    channels: tuple = (8, 16, 32, 32),
    dense_width: int = 64,
    num_classes: int = 2,
    kernel_size: int = 3,
    pool_size: int = 2,
    seed: int = 0,
    dtype=np.float32,
) -> Model:
    """Deeper relu conv stack for transfer runs, split into backbone.* and head.*.

    The first three conv blocks pool; any further convs keep spatial size.
    Parameter names partition exactly into backbone.conv*/head.dense* so
    freeze patterns like "backbone.*" address the feature extractor.
    """
    c, h, w = input_shape
    rng = Rng(derive(seed, _INIT_STREAM))
    pad = kernel_size // 2
    stack = []
    in_c = c
    for i, out_c in enumerate(channels, start=1):
        conv = Conv2d(in_c, out_c, kernel_size, stride=1, padding=pad, rng=rng, dtype=dtype)
        h, w = conv.out_shape(h, w)
        stack.append((f"backbone.conv{i}", conv))
        stack.append((None, Activation("relu")))
        if i <= 3:
            pool = MaxPool2d(pool_size)
            h, w = pool.out_shape(h, w)
            stack.append((None, pool))
        in_c = out_c
    stack.append((None, Flatten()))
    feat = in_c * h * w
    stack.append(("head.dense1", Dense(feat, dense_width, rng=rng, dtype=dtype)))
    stack.append((None, Activation("relu")))
    stack.append(("head.dense2", Dense(dense_width, num_classes, rng=rng, dtype=dtype)))
    stack.append((None, Activation("softmax")))
    return Model(stack)
