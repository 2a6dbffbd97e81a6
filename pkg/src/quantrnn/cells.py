"""Recurrent cells and layers built on the autograd tensor ops.

Cells hold their gate weights as :class:`Param` objects (full-precision
shadow weights plus optimizer moments). During a quantized forward pass a
:class:`QuantContext` swaps each eligible weight for its quantized image
through a straight-through node, so gradients land on the shadows
unchanged. Gate math follows the usual formulations; the concatenated
[h_prev, x] products are realized as separate recurrent/input matmuls so
quantization statistics stay per weight matrix.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import ShapeError
from .quantize import FULL_PRECISION, QuantKind, QuantScheme, quantize, quantize_with_stats
from .tensor import (
    F32,
    Tensor,
    _accum,
    add,
    add_scalar,
    batchnorm_train,
    bias_add,
    channel_affine,
    conv2d_same,
    conv3d_same,
    hadamard,
    hadamard_bcast,
    matmul,
    scale,
    sigmoid,
    sub,
    take_rows,
    tanh_op,
)

# parameter roles, used by the quantization policy
KERNEL = "kernel"
BIAS = "bias"
PEEPHOLE = "peephole"
EMBEDDING = "embedding"
NORM = "norm"


class Param:
    """A trainable parameter: full-precision shadow value + Adam moments.

    ``value.data`` keeps its array identity for the lifetime of the param;
    optimizer updates are in place and quantized images live only in
    forward-pass tensors.
    """

    def __init__(self, data, name: str = "", kind: str = KERNEL, quantizable: bool | None = None,
                 stat_group: str | None = None):
        self.value = Tensor(np.array(data), requires_grad=True)
        self.m = np.zeros_like(self.value.data)
        self.v = np.zeros_like(self.value.data)
        self.name = name
        self.kind = kind
        self.quantizable = (kind == KERNEL) if quantizable is None else quantizable
        self.stat_group = stat_group

    @property
    def grad(self):
        return self.value.grad

    def zero_grad(self):
        self.value.zero_grad()

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.value.shape}, kind={self.kind})"


def straight_through(value: Tensor, qdata: np.ndarray) -> Tensor:
    """Forward the quantized data, pass the gradient to the shadow unchanged."""
    return Tensor(qdata, requires_grad=value.requires_grad, parents=(value,),
                  backward=lambda g: _accum(value, g))


class QuantContext:
    """Threads the active quantization scheme through a forward pass.

    One context lives for one forward pass: the first resolution of a
    parameter quantizes the current shadow tensor (fresh statistics) and the
    result is cached, so a weight reused across time steps maps to a single
    straight-through node. ``hook`` (if set) receives
    ``(param_name, quantized_array)`` once per swapped weight.
    """

    def __init__(self, scheme: QuantScheme = FULL_PRECISION, hook=None):
        self.scheme = scheme
        self.hook = hook
        self._cache: dict[int, Tensor] = {}

    def weight(self, p: Param) -> Tensor:
        if not p.quantizable or self.scheme.kind is QuantKind.FULL_PRECISION:
            return p.value
        cached = self._cache.get(id(p))
        if cached is not None:
            return cached
        q = quantize(p.value.data, self.scheme)
        if self.hook is not None:
            self.hook(p.name, q)
        node = straight_through(p.value, q)
        self._cache[id(p)] = node
        return node


FP_CTX = QuantContext()


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype=F32):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class LstmState(NamedTuple):
    h: Tensor
    c: Tensor


class GruState(NamedTuple):
    h: Tensor


class ConvLstmState(NamedTuple):
    h: Tensor
    c: Tensor


class RnnCell:
    """Elman step: h = tanh(W_h x + U_h h_prev + b_h), y = W_y h + b_y."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator, dtype=F32):
        self.in_dim, self.hidden, self.out_dim = in_dim, hidden, out_dim
        self.W_h = Param(glorot_uniform(rng, (in_dim, hidden), in_dim, hidden, dtype), "W_h")
        self.U_h = Param(glorot_uniform(rng, (hidden, hidden), hidden, hidden, dtype), "U_h")
        self.b_h = Param(np.zeros(hidden, dtype=dtype), "b_h", BIAS)
        self.W_y = Param(glorot_uniform(rng, (hidden, out_dim), hidden, out_dim, dtype), "W_y")
        self.b_y = Param(np.zeros(out_dim, dtype=dtype), "b_y", BIAS)
        self.dtype = dtype

    def params(self):
        return [self.W_h, self.U_h, self.b_h, self.W_y, self.b_y]

    def init_state(self, batch: int) -> Tensor:
        return Tensor(np.zeros((batch, self.hidden), dtype=self.dtype))

    def step(self, x: Tensor, h_prev: Tensor, qctx: QuantContext = FP_CTX):
        w = qctx.weight
        h = tanh_op(bias_add(add(matmul(x, w(self.W_h)), matmul(h_prev, w(self.U_h))), w(self.b_h)))
        y = bias_add(matmul(h, w(self.W_y)), w(self.b_y))
        return h, y


class LstmCell:
    """LSTM step with forget/input/output gates and a candidate update.

    Forget-gate bias starts at 1.0 so the cell initially remembers.
    """

    GATES = ("f", "i", "c", "o")

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator, dtype=F32):
        self.in_dim, self.hidden = in_dim, hidden
        self.dtype = dtype
        for gate in self.GATES:
            setattr(self, f"W_{gate}", Param(glorot_uniform(rng, (in_dim, hidden), in_dim, hidden, dtype), f"W_{gate}"))
            setattr(self, f"U_{gate}", Param(glorot_uniform(rng, (hidden, hidden), hidden, hidden, dtype), f"U_{gate}"))
            init = np.ones(hidden, dtype=dtype) if gate == "f" else np.zeros(hidden, dtype=dtype)
            setattr(self, f"b_{gate}", Param(init, f"b_{gate}", BIAS))

    def params(self):
        out = []
        for gate in self.GATES:
            out += [getattr(self, f"W_{gate}"), getattr(self, f"U_{gate}"), getattr(self, f"b_{gate}")]
        return out

    def init_state(self, batch: int) -> LstmState:
        z = np.zeros((batch, self.hidden), dtype=self.dtype)
        return LstmState(Tensor(z), Tensor(z.copy()))

    def _gate(self, name: str, x: Tensor, h: Tensor, qctx: QuantContext) -> Tensor:
        w = qctx.weight
        return bias_add(add(matmul(x, w(getattr(self, f"W_{name}"))),
                            matmul(h, w(getattr(self, f"U_{name}")))),
                        w(getattr(self, f"b_{name}")))

    def step(self, x: Tensor, state: LstmState, qctx: QuantContext = FP_CTX) -> LstmState:
        h_prev, c_prev = state
        f = sigmoid(self._gate("f", x, h_prev, qctx))
        i = sigmoid(self._gate("i", x, h_prev, qctx))
        c_tilde = tanh_op(self._gate("c", x, h_prev, qctx))
        c = add(hadamard(f, c_prev), hadamard(i, c_tilde))
        o = sigmoid(self._gate("o", x, h_prev, qctx))
        h = hadamard(o, tanh_op(c))
        return LstmState(h, c)


class GruCell:
    """GRU step: update/reset gates and a reset-modulated candidate."""

    GATES = ("z", "r", "h")

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator, dtype=F32):
        self.in_dim, self.hidden = in_dim, hidden
        self.dtype = dtype
        for gate in self.GATES:
            setattr(self, f"W_{gate}", Param(glorot_uniform(rng, (in_dim, hidden), in_dim, hidden, dtype), f"W_{gate}"))
            setattr(self, f"U_{gate}", Param(glorot_uniform(rng, (hidden, hidden), hidden, hidden, dtype), f"U_{gate}"))
            setattr(self, f"b_{gate}", Param(np.zeros(hidden, dtype=dtype), f"b_{gate}", BIAS))

    def params(self):
        out = []
        for gate in self.GATES:
            out += [getattr(self, f"W_{gate}"), getattr(self, f"U_{gate}"), getattr(self, f"b_{gate}")]
        return out

    def init_state(self, batch: int) -> GruState:
        return GruState(Tensor(np.zeros((batch, self.hidden), dtype=self.dtype)))

    def step(self, x: Tensor, state: GruState, qctx: QuantContext = FP_CTX) -> GruState:
        w = qctx.weight
        h_prev = state.h
        z = sigmoid(bias_add(add(matmul(x, w(self.W_z)), matmul(h_prev, w(self.U_z))), w(self.b_z)))
        r = sigmoid(bias_add(add(matmul(x, w(self.W_r)), matmul(h_prev, w(self.U_r))), w(self.b_r)))
        h_tilde = tanh_op(bias_add(add(matmul(x, w(self.W_h)),
                                       matmul(hadamard(r, h_prev), w(self.U_h))),
                                   w(self.b_h)))
        one_minus_z = add_scalar(scale(z, -1.0), 1.0)
        h = add(hadamard(one_minus_z, h_prev), hadamard(z, h_tilde))
        return GruState(h)


class ConvLstmCell:
    """ConvLSTM step: convolutional input/recurrent transforms, elementwise
    peephole weights on the cell state, same padding throughout.

    Peephole weights W_ci/W_cf/W_co share the state's (channels, H, W) shape.
    """

    GATES = ("i", "f", "c", "o")

    def __init__(self, in_channels: int, channels: int, hw: tuple[int, int], rng: np.random.Generator,
                 kernel: int = 3, dtype=F32):
        if kernel % 2 == 0:
            raise ShapeError(f"ConvLSTM kernel must be odd, got {kernel}")
        self.in_channels, self.channels, self.hw, self.kernel = in_channels, channels, tuple(hw), kernel
        self.dtype = dtype
        k2 = kernel * kernel
        for gate in self.GATES:
            setattr(self, f"W_x{gate}",
                    Param(glorot_uniform(rng, (channels, in_channels, kernel, kernel),
                                         in_channels * k2, channels * k2, dtype), f"W_x{gate}"))
            setattr(self, f"W_h{gate}",
                    Param(glorot_uniform(rng, (channels, channels, kernel, kernel),
                                         channels * k2, channels * k2, dtype), f"W_h{gate}"))
            init = np.ones(channels, dtype=dtype) if gate == "f" else np.zeros(channels, dtype=dtype)
            setattr(self, f"b_{gate}", Param(init, f"b_{gate}", BIAS))
        for gate in ("i", "f", "o"):
            setattr(self, f"W_c{gate}",
                    Param(np.zeros((channels,) + self.hw, dtype=dtype), f"W_c{gate}", PEEPHOLE))

    def params(self):
        out = []
        for gate in self.GATES:
            out += [getattr(self, f"W_x{gate}"), getattr(self, f"W_h{gate}"), getattr(self, f"b_{gate}")]
        out += [self.W_ci, self.W_cf, self.W_co]
        return out

    def init_state(self, batch: int) -> ConvLstmState:
        z = np.zeros((batch, self.channels) + self.hw, dtype=self.dtype)
        return ConvLstmState(Tensor(z), Tensor(z.copy()))

    def _pre(self, gate: str, x: Tensor, h: Tensor, qctx: QuantContext) -> Tensor:
        w = qctx.weight
        return add(conv2d_same(x, w(getattr(self, f"W_x{gate}")), w(getattr(self, f"b_{gate}"))),
                   conv2d_same(h, w(getattr(self, f"W_h{gate}"))))

    def step(self, x: Tensor, state: ConvLstmState, qctx: QuantContext = FP_CTX) -> ConvLstmState:
        h_prev, c_prev = state
        if x.data.shape[-2:] != self.hw:
            raise ShapeError(f"ConvLSTM expects spatial dims {self.hw}, got input {x.data.shape}")
        w = qctx.weight
        i = sigmoid(add(self._pre("i", x, h_prev, qctx), hadamard_bcast(w(self.W_ci), c_prev)))
        f = sigmoid(add(self._pre("f", x, h_prev, qctx), hadamard_bcast(w(self.W_cf), c_prev)))
        c_tilde = tanh_op(self._pre("c", x, h_prev, qctx))
        c = add(hadamard(f, c_prev), hadamard(i, c_tilde))
        o = sigmoid(add(self._pre("o", x, h_prev, qctx), hadamard_bcast(w(self.W_co), c)))
        h = hadamard(o, tanh_op(c))
        return ConvLstmState(h, c)


class Dense:
    """Affine layer y = x W + b."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, dtype=F32):
        self.W = Param(glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim, dtype), "W")
        self.b = Param(np.zeros(out_dim, dtype=dtype), "b", BIAS)

    def params(self):
        return [self.W, self.b]

    def forward(self, x: Tensor, qctx: QuantContext = FP_CTX) -> Tensor:
        return bias_add(matmul(x, qctx.weight(self.W)), qctx.weight(self.b))


class Embedding:
    """Token-id to vector lookup; the gradient scatters into the used rows."""

    def __init__(self, vocab: int, dim: int, rng: np.random.Generator, dtype=F32):
        table = rng.uniform(-0.05, 0.05, size=(vocab, dim)).astype(dtype)
        self.table = Param(table, "table", EMBEDDING)

    def params(self):
        return [self.table]

    def forward(self, ids, qctx: QuantContext = FP_CTX) -> Tensor:
        return take_rows(qctx.weight(self.table), ids)


class BatchNorm:
    """Per-channel batch normalization (channels on axis 1).

    Training mode normalizes with batch statistics and updates the running
    mean/variance with momentum 0.99; eval mode applies the running stats.
    """

    def __init__(self, channels: int, momentum: float = 0.99, eps: float = 1e-3, dtype=F32):
        self.gamma = Param(np.ones(channels, dtype=dtype), "gamma", NORM)
        self.beta = Param(np.zeros(channels, dtype=dtype), "beta", NORM)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps

    def params(self):
        return [self.gamma, self.beta]

    def forward(self, x: Tensor, qctx: QuantContext = FP_CTX, training: bool = False) -> Tensor:
        gamma, beta = qctx.weight(self.gamma), qctx.weight(self.beta)
        if training:
            out, mu, var = batchnorm_train(x, gamma, beta, self.eps)
            m = self.momentum
            self.running_mean = (m * self.running_mean + (1.0 - m) * mu).astype(self.running_mean.dtype)
            self.running_var = (m * self.running_var + (1.0 - m) * var).astype(self.running_var.dtype)
            return out
        s = 1.0 / np.sqrt(self.running_var + self.eps)
        scale_t = hadamard(gamma, Tensor(s.astype(x.dtype)))
        shift_t = sub(beta, hadamard(scale_t, Tensor(self.running_mean.astype(x.dtype))))
        return channel_affine(x, scale_t, shift_t)


class Reconstruct3d:
    """3-D convolutional head mapping a hidden sequence to pixel intensities.

    A single (1, C, 3, 3, 3) kernel with same padding followed by a sigmoid,
    so outputs live in (0, 1).
    """

    def __init__(self, in_channels: int, rng: np.random.Generator, kernel: int = 3, dtype=F32):
        kvol = kernel ** 3
        self.k = Param(glorot_uniform(rng, (1, in_channels, kernel, kernel, kernel),
                                      in_channels * kvol, kvol, dtype), "k")
        self.b = Param(np.zeros(1, dtype=dtype), "b", BIAS)

    def params(self):
        return [self.k, self.b]

    def forward(self, h_seq: Tensor, qctx: QuantContext = FP_CTX) -> Tensor:
        return sigmoid(conv3d_same(h_seq, qctx.weight(self.k), qctx.weight(self.b)))
