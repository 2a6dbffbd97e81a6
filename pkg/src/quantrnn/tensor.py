"""Dense tensors with reverse-mode automatic differentiation.

Everything is built on numpy arrays in row-major order. A :class:`Tensor` is
a node in a dynamically recorded computation graph: leaves hold data (and
receive gradients when they require them), interior nodes remember their
parents and a closure that routes the incoming gradient to them. Calling
:meth:`Tensor.backward` on a scalar result walks the graph once in reverse
topological order.

Two dtypes are supported: float32 for training speed, float64 for
finite-difference verification. There is no implicit broadcasting; the only
shape-extending operations are the explicitly named ones (`bias_add`,
`hadamard_bcast`, `channel_affine`, the bias term inside the convolutions).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DataError, DomainError, ShapeError, StateError

F32 = np.dtype(np.float32)
F64 = np.dtype(np.float64)


def _coerce(data, dtype):
    arr = np.asarray(data)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    elif arr.dtype != F64:
        arr = arr.astype(F32, copy=False)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.size == 0:
        raise ShapeError(f"every tensor dimension must be >= 1, got shape {arr.shape}")
    return arr


class Tensor:
    """N-dimensional value node; data is immutable once wrapped in graph ops."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, dtype=None, requires_grad=False, parents=(), backward=None):
        self.data = _coerce(data, dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self):
        """Accumulate gradients of this scalar into every reachable leaf."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise StateError("backward() called on a tensor with no recorded graph")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # operator sugar over the module-level ops
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return hadamard(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _accum(t: Tensor, g: np.ndarray):
    # gradients are never mutated in place, so aliasing the first contribution is safe
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _unary(x: Tensor, out_data, grad_fn) -> Tensor:
    if not x.requires_grad:
        return Tensor(out_data)
    return Tensor(out_data, requires_grad=True, parents=(x,),
                  backward=lambda g: _accum(x, grad_fn(g)))


def _require_same_shape(a: Tensor, b: Tensor, op: str):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two equally shaped tensors."""
    _require_same_shape(a, b, "add")
    req = a.requires_grad or b.requires_grad
    if not req:
        return Tensor(a.data + b.data)

    def back(g):
        _accum(a, g)
        _accum(b, g)

    return Tensor(a.data + b.data, requires_grad=True, parents=(a, b), backward=back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "sub")
    req = a.requires_grad or b.requires_grad
    if not req:
        return Tensor(a.data - b.data)

    def back(g):
        _accum(a, g)
        _accum(b, -g)

    return Tensor(a.data - b.data, requires_grad=True, parents=(a, b), backward=back)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two equally shaped tensors."""
    _require_same_shape(a, b, "hadamard")
    req = a.requires_grad or b.requires_grad
    if not req:
        return Tensor(a.data * b.data)
    ad, bd = a.data, b.data

    def back(g):
        _accum(a, g * bd)
        _accum(b, g * ad)

    return Tensor(ad * bd, requires_grad=True, parents=(a, b), backward=back)


def scale(a: Tensor, s: float) -> Tensor:
    """Multiply every element by the python scalar ``s``."""
    s = float(s)
    return _unary(a, a.data * np.asarray(s, dtype=a.dtype), lambda g: g * s)


def add_scalar(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _unary(a, a.data + np.asarray(c, dtype=a.dtype), lambda g: g)


def bias_add(x: Tensor, b: Tensor) -> Tensor:
    """Add a vector ``b`` along the last axis, broadcast over leading dims."""
    if b.data.ndim != 1 or x.data.shape[-1] != b.data.shape[0]:
        raise ShapeError(f"bias_add: bias {b.data.shape} does not match last dim of {x.data.shape}")
    req = x.requires_grad or b.requires_grad
    if not req:
        return Tensor(x.data + b.data)
    lead = tuple(range(x.data.ndim - 1))

    def back(g):
        _accum(x, g)
        _accum(b, g.sum(axis=lead) if lead else g)

    return Tensor(x.data + b.data, requires_grad=True, parents=(x, b), backward=back)


def hadamard_bcast(w: Tensor, x: Tensor) -> Tensor:
    """Elementwise product with ``w`` broadcast over the leading dims of ``x``.

    ``w.shape`` must equal ``x.shape[-w.ndim:]``; used for per-element gate
    weights applied across a batch.
    """
    k = w.data.ndim
    if x.data.ndim < k or x.data.shape[x.data.ndim - k:] != w.data.shape:
        raise ShapeError(f"hadamard_bcast: {w.data.shape} does not trail {x.data.shape}")
    req = w.requires_grad or x.requires_grad
    if not req:
        return Tensor(w.data * x.data)
    wd, xd = w.data, x.data
    lead = tuple(range(x.data.ndim - k))

    def back(g):
        _accum(x, g * wd)
        gw = g * xd
        _accum(w, gw.sum(axis=lead) if lead else gw)

    return Tensor(wd * xd, requires_grad=True, parents=(w, x), backward=back)


def channel_affine(x: Tensor, s: Tensor, t: Tensor) -> Tensor:
    """Per-channel ``x * s + t`` where channels live on axis 1."""
    c = x.data.shape[1] if x.data.ndim > 1 else x.data.shape[0]
    if s.data.shape != (c,) or t.data.shape != (c,):
        raise ShapeError(f"channel_affine: scale {s.data.shape}/shift {t.data.shape} vs channels {c}")
    bshape = (1, c) + (1,) * (x.data.ndim - 2) if x.data.ndim > 1 else (c,)
    sd = s.data.reshape(bshape)
    td = t.data.reshape(bshape)
    out = x.data * sd + td
    req = x.requires_grad or s.requires_grad or t.requires_grad
    if not req:
        return Tensor(out)
    axes = tuple(i for i in range(x.data.ndim) if i != (1 if x.data.ndim > 1 else 0))
    xd = x.data

    def back(g):
        _accum(x, g * sd)
        _accum(s, (g * xd).sum(axis=axes) if axes else g * xd)
        _accum(t, g.sum(axis=axes) if axes else g)

    return Tensor(out, requires_grad=True, parents=(x, s, t), backward=back)


# ---------------------------------------------------------------------------
# nonlinearities

def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    e = np.exp(xd[~pos])
    out[~pos] = e / (1.0 + e)
    return _unary(x, out, lambda g: g * (out * (1.0 - out)))


def tanh_op(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _unary(x, out, lambda g: g * (1.0 - out * out))


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise DomainError("log: inputs must be strictly positive")
    out = np.log(x.data)
    xd = x.data
    return _unary(x, out, lambda g: g / xd)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient is blocked where the clamp is active."""
    out = np.clip(x.data, lo, hi)
    mask = (x.data > lo) & (x.data < hi)
    return _unary(x, out, lambda g: g * mask)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)
    return _unary(x, out, lambda g: out * (g - (g * out).sum(axis=-1, keepdims=True)))


# ---------------------------------------------------------------------------
# reductions and statistics

def sum_all(x: Tensor) -> Tensor:
    """Sum of all elements, returned as a shape-(1,) tensor."""
    out = np.asarray([x.data.sum()], dtype=x.dtype)
    shape = x.data.shape
    return _unary(x, out, lambda g: np.full(shape, g[0], dtype=g.dtype))


def mean_all(x: Tensor) -> Tensor:
    """Arithmetic mean of all elements, returned as a shape-(1,) tensor."""
    n = x.data.size
    out = np.asarray([x.data.mean()], dtype=x.dtype)
    shape = x.data.shape
    return _unary(x, out, lambda g: np.full(shape, g[0] / n, dtype=g.dtype))


def mean_std(x) -> tuple[float, float]:
    """Mean and population standard deviation over all elements.

    Accepts a Tensor or anything array-like; not differentiable.
    """
    arr = x.data if isinstance(x, Tensor) else np.asarray(x)
    if arr.size == 0:
        raise DomainError("mean_std: empty tensor")
    return float(arr.mean()), float(arr.std())


# ---------------------------------------------------------------------------
# shape plumbing

def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    old = x.data.shape
    out = x.data.reshape(shape)
    return _unary(x, out, lambda g: g.reshape(old))


def stack(tensors, axis: int = 0) -> Tensor:
    """Stack equally shaped tensors along a new axis."""
    tensors = list(tensors)
    base = tensors[0].data.shape
    for t in tensors[1:]:
        if t.data.shape != base:
            raise ShapeError(f"stack: shapes {base} and {t.data.shape} differ")
    out = np.stack([t.data for t in tensors], axis=axis)
    req = any(t.requires_grad for t in tensors)
    if not req:
        return Tensor(out)

    def back(g):
        for i, t in enumerate(tensors):
            _accum(t, np.take(g, i, axis=axis))

    return Tensor(out, requires_grad=True, parents=tuple(tensors), backward=back)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of size ``length`` starting at ``start`` along ``axis``."""
    if start < 0 or start + length > x.data.shape[axis]:
        raise ShapeError(f"narrow: [{start}, {start + length}) outside axis {axis} of {x.data.shape}")
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    full_shape = x.data.shape

    def grad_fn(g):
        gx = np.zeros(full_shape, dtype=g.dtype)
        gx[idx] = g
        return gx

    return _unary(x, x.data[idx], grad_fn)


def take_rows(table: Tensor, ids) -> Tensor:
    """Gather rows of a 2-D table; gradient scatter-adds into the rows."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise DataError("take_rows: ids must be integers")
    vocab = table.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        bad = int(ids.min()) if ids.min() < 0 else int(ids.max())
        raise DataError(f"take_rows: id {bad} outside vocabulary of size {vocab}")
    out = table.data[ids]
    if not table.requires_grad:
        return Tensor(out)

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        _accum(table, gt)

    return Tensor(out, requires_grad=True, parents=(table,), backward=back)


# ---------------------------------------------------------------------------
# matrix product

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product a[m,k] @ b[k,n]."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: operands must be 2-D, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: inner dims of {a.data.shape} and {b.data.shape} disagree")
    req = a.requires_grad or b.requires_grad
    out = a.data @ b.data
    if not req:
        return Tensor(out)
    ad, bd = a.data, b.data

    def back(g):
        _accum(a, g @ bd.T)
        _accum(b, ad.T @ g)

    return Tensor(out, requires_grad=True, parents=(a, b), backward=back)


# ---------------------------------------------------------------------------
# same-padded cross-correlation (stride 1)

def _conv_same_raw(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    # x: (B, C, *S), k: (Co, C, *K) with odd K -> (B, Co, *S)
    n = k.ndim - 2
    pads = [(0, 0), (0, 0)] + [(d // 2, d // 2) for d in k.shape[2:]]
    xp = np.pad(x, pads)
    cols = np.lib.stride_tricks.sliding_window_view(xp, k.shape[2:], axis=tuple(range(2, 2 + n)))
    # cols: (B, C, *S, *K); contract channel + kernel axes against k
    ax_cols = [1] + list(range(2 + n, 2 + 2 * n))
    ax_k = [1] + list(range(2, 2 + n))
    out = np.tensordot(cols, k, axes=(ax_cols, ax_k))  # (B, *S, Co)
    return np.ascontiguousarray(np.moveaxis(out, -1, 1))


def _conv_same_kgrad(x: np.ndarray, kshape, dout: np.ndarray) -> np.ndarray:
    n = len(kshape) - 2
    pads = [(0, 0), (0, 0)] + [(d // 2, d // 2) for d in kshape[2:]]
    xp = np.pad(x, pads)
    cols = np.lib.stride_tricks.sliding_window_view(xp, kshape[2:], axis=tuple(range(2, 2 + n)))
    ax = [0] + list(range(2, 2 + n))  # batch + spatial axes on both operands
    return np.tensordot(dout, cols, axes=(ax, ax))  # (Co, C, *K)


def _conv_same_xgrad(k: np.ndarray, dout: np.ndarray) -> np.ndarray:
    n = k.ndim - 2
    kt = np.flip(k, axis=tuple(range(2, 2 + n))).swapaxes(0, 1)
    return _conv_same_raw(dout, np.ascontiguousarray(kt))


def _conv_same(x: Tensor, k: Tensor, b, spatial_rank: int, name: str) -> Tensor:
    batched = x.data.ndim == spatial_rank + 2
    if x.data.ndim not in (spatial_rank + 1, spatial_rank + 2):
        raise ShapeError(f"{name}: input must have {spatial_rank + 1} or {spatial_rank + 2} dims, got {x.data.shape}")
    if k.data.ndim != spatial_rank + 2:
        raise ShapeError(f"{name}: kernel must have {spatial_rank + 2} dims, got {k.data.shape}")
    for d in k.data.shape[2:]:
        if d % 2 == 0:
            raise ConfigError(f"{name}: kernel dims must be odd for same padding, got {k.data.shape[2:]}")
    xd = x.data if batched else x.data[None]
    if xd.shape[1] != k.data.shape[1]:
        raise ShapeError(f"{name}: input channels {xd.shape[1:]} do not match kernel {k.data.shape}")
    if b is not None and b.data.shape != (k.data.shape[0],):
        raise ShapeError(f"{name}: bias {b.data.shape} does not match {k.data.shape[0]} output channels")

    out = _conv_same_raw(xd, k.data)
    if b is not None:
        out += b.data.reshape((1, -1) + (1,) * spatial_rank)
    req = x.requires_grad or k.requires_grad or (b is not None and b.requires_grad)
    if not req:
        return Tensor(out if batched else out[0])

    kd = k.data
    parents = (x, k) if b is None else (x, k, b)

    def back(g):
        gb = g if batched else g[None]
        if x.requires_grad:
            gx = _conv_same_xgrad(kd, gb)
            _accum(x, gx if batched else gx[0])
        if k.requires_grad:
            _accum(k, _conv_same_kgrad(xd, kd.shape, gb))
        if b is not None and b.requires_grad:
            _accum(b, gb.sum(axis=(0,) + tuple(range(2, 2 + spatial_rank))))

    return Tensor(out if batched else out[0], requires_grad=True, parents=parents, backward=back)


def conv2d_same(x: Tensor, k: Tensor, b: Tensor | None = None) -> Tensor:
    """Same-padded 2-D cross-correlation.

    ``x`` is (C_in, H, W) or batched (B, C_in, H, W); ``k`` is
    (C_out, C_in, k_h, k_w) with odd kernel dims; optional ``b`` is (C_out,).
    Spatial extents are preserved.
    """
    return _conv_same(x, k, b, 2, "conv2d_same")


def conv3d_same(x: Tensor, k: Tensor, b: Tensor | None = None) -> Tensor:
    """Same-padded 3-D cross-correlation over (T, H, W) volumes."""
    return _conv_same(x, k, b, 3, "conv3d_same")


# ---------------------------------------------------------------------------
# batch normalization primitives (channels on axis 1)

def batchnorm_train(x: Tensor, gamma: Tensor, beta: Tensor, eps: float):
    """Normalize per channel with batch statistics.

    Returns ``(out, batch_mean, batch_var)``; the statistics are plain arrays
    (population variance) for the caller's running-average update.
    """
    if x.data.ndim < 2:
        raise ShapeError(f"batchnorm: input must have a channel axis, got {x.data.shape}")
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(f"batchnorm: gamma {gamma.data.shape}/beta {beta.data.shape} vs {c} channels")
    axes = (0,) + tuple(range(2, x.data.ndim))
    n = x.data.size // c
    mu = x.data.mean(axis=axes)
    var = x.data.var(axis=axes)
    bshape = (1, c) + (1,) * (x.data.ndim - 2)
    ivar = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(bshape)) * ivar.reshape(bshape)
    out = gamma.data.reshape(bshape) * xhat + beta.data.reshape(bshape)
    req = x.requires_grad or gamma.requires_grad or beta.requires_grad
    if not req:
        return Tensor(out), mu, var

    gd = gamma.data

    def back(g):
        _accum(beta, g.sum(axis=axes))
        _accum(gamma, (g * xhat).sum(axis=axes))
        if x.requires_grad:
            dxhat = g * gd.reshape(bshape)
            term = (n * dxhat - dxhat.sum(axis=axes, keepdims=True)
                    - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True))
            _accum(x, term * ivar.reshape(bshape) / n)

    return Tensor(out, requires_grad=True, parents=(x, gamma, beta), backward=back), mu, var
