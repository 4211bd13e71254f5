"""Reverse-mode automatic differentiation on dense numpy arrays.

A Tensor wraps an ndarray plus an optional gradient.  Operations record
a vjp (vector-Jacobian product) closure; backward() walks the graph in
reverse topological order and accumulates gradients into every tensor
with requires_grad.  Training runs in float32; gradient checks build
float64 tensors and every op preserves the input dtype.

Transcendentals are always evaluated on full arrays (masked ufunc calls
defeat SIMD); branch selection happens afterwards with arithmetic blends
rather than np.where, which is an order of magnitude slower here.
"""
from __future__ import annotations

import contextlib
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionError, NumericError, ValidationError

SELU_ALPHA = 1.6732632423543772
SELU_LAMBDA = 1.0507009873554805
BCE_EPS = 1e-7
_LN_EPS = 1e-5   # layer_norm variance floor

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording, e.g. for evaluation sweeps."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Dense real array with optional gradient of identical shape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: Tuple["Tensor", ...] = ()
        self._vjp: Optional[Callable] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def backward(self) -> "Graph":
        return backward(self)

    # operator sugar; the named functions below are the primary interface
    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __sub__(self, other):
        return subtract(self, _as_tensor(other, self.dtype))

    def __mul__(self, other):
        return multiply(self, _as_tensor(other, self.dtype))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{tag})"


class Graph:
    """Topologically ordered record of the operations reaching one root."""

    __slots__ = ("nodes",)

    def __init__(self, nodes: List[Tensor]):
        self.nodes = nodes

    def __len__(self) -> int:
        return len(self.nodes)


def _as_tensor(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


def _make(data: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def topological_order(root: Tensor) -> Graph:
    order: List[Tensor] = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad:
                stack.append((p, False))
    return Graph(order)


def backward(loss: Tensor) -> Graph:
    """Populate .grad for every requires_grad tensor reaching loss.

    Each call computes a fresh pass and adds it onto existing grads, so two
    calls without zeroing double the gradients exactly.
    """
    if loss.data.size != 1:
        raise DimensionError(f"backward needs a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise NumericError("backward on a tensor with no recorded graph")
    graph = topological_order(loss)
    flowing = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        g = flowing.pop(id(node), None)
        if g is None:
            continue
        # grads are never mutated in place anywhere, so sharing g is safe
        if node.grad is None:
            node.grad = g
        else:
            node.grad = node.grad + g
        if node._vjp is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if not parent.requires_grad or pg is None:
                continue
            acc = flowing.get(id(parent))
            flowing[id(parent)] = pg if acc is None else acc + pg
    return graph


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data
    return _make(data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def subtract(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data
    return _make(data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(np.negative(g), b.shape)))


def multiply(a: Tensor, b: Tensor) -> Tensor:
    # skip the product for a constant operand; backward drops None grads
    data = a.data * b.data
    na, nb = a.requires_grad, b.requires_grad
    return _make(data, (a, b), lambda g: (_unbroadcast(g * b.data, a.shape) if na else None,
                                          _unbroadcast(g * a.data, b.shape) if nb else None))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim == 0 or b.data.ndim == 0:
        raise DimensionError("matmul needs at least 1-D operands")
    if a.shape[-1] != b.shape[-2 if b.data.ndim > 1 else 0]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if b.data.ndim > 1 else np.multiply.outer(g, b.data)
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if a.data.ndim > 1 else np.multiply.outer(a.data, g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(data, (a, b), vjp)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Fused x @ w + b for 2-D x; one output buffer instead of two."""
    if x.data.ndim != 2 or w.data.ndim != 2 or b.data.ndim != 1:
        raise DimensionError(
            f"linear expects 2-D x, 2-D w, 1-D b, got {x.shape}, {w.shape}, {b.shape}")
    if x.shape[1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise DimensionError(f"linear dims differ: {x.shape} @ {w.shape} + {b.shape}")
    data = np.matmul(x.data, w.data)
    data += b.data

    def vjp(g):
        return np.matmul(g, w.data.T), np.matmul(x.data.T, g), g.sum(axis=0)

    return _make(data, (x, w, b), vjp)


def absolute_value(x: Tensor) -> Tensor:
    data = np.abs(x.data)
    return _make(data, (x,), lambda g: (g * np.sign(x.data),))


def _selu_forward(x: np.ndarray) -> np.ndarray:
    """selu(x) = lambda*(max(x,0) + alpha*(exp(min(x,0))-1)), branch-free;
    np.where is an order of magnitude slower than the extra arithmetic on
    large arrays."""
    out = np.exp(np.minimum(x, 0))
    out -= 1.0
    out *= SELU_ALPHA
    out += np.maximum(x, 0)
    out *= SELU_LAMBDA
    return out


def _selu_slope(activation: np.ndarray) -> np.ndarray:
    """Derivative recovered from the activation itself, no exp needed: for
    x <= 0 the output is lambda*alpha*(e^x - 1), so the slope
    lambda*alpha*e^x equals activation + lambda*alpha; for x > 0 (activation
    > 0) the slope is the constant lambda."""
    la = SELU_LAMBDA * SELU_ALPHA
    slope = np.minimum(activation, 0)
    slope += la
    pos = (activation > 0).astype(activation.dtype)
    pos *= SELU_LAMBDA - la
    slope += pos
    return slope


def selu(x: Tensor) -> Tensor:
    """Self-normalizing linear unit with the published constants."""
    data = _selu_forward(x.data)
    return _make(data, (x,), lambda g: (g * _selu_slope(data),))


def sigmoid(x: Tensor) -> Tensor:
    """Stable logistic: exp of a non-positive argument only, numerator
    blended branch-free between 1 (x >= 0) and e (x < 0)."""
    e = np.exp(-np.abs(x.data))
    num = 1.0 - e
    num *= (x.data >= 0).astype(x.dtype)
    num += e
    e += 1.0
    data = num
    data /= e
    return _make(data, (x,), lambda g: (g * data * (1 - data),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        return (data * (g - inner),)

    return _make(data, (x,), vjp)


def layer_norm(x: Tensor, axis: int = -1) -> Tensor:
    """Normalize to zero mean, unit variance along axis (no learned affine;
    compose with multiply/add for gain and bias)."""
    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    data = (xc * inv).astype(x.dtype)

    def vjp(g):
        gm = g.mean(axis=axis, keepdims=True)
        gym = (g * data).mean(axis=axis, keepdims=True)
        return ((inv * (g - gm - data * gym)).astype(g.dtype, copy=False),)

    return _make(data, (x,), vjp)


def mean(x: Tensor, axis=None) -> Tensor:
    data = x.data.mean(axis=axis)
    # keep count a python int: dividing by a numpy integer scalar would
    # promote float32 gradients to float64 for the whole upstream graph
    count = x.data.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))

    def vjp(g):
        if axis is None:
            return (np.full_like(x.data, 1.0 / count) * g,)
        gg = np.expand_dims(g, axis) / count
        return (np.broadcast_to(gg, x.shape),)

    return _make(data, (x,), vjp)


def concatenate(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis)
                     for i in range(len(tensors)))

    return _make(data, tuple(tensors), vjp)


def reshape(x: Tensor, shape) -> Tensor:
    data = x.data.reshape(shape)
    return _make(data, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    data = np.transpose(x.data, axes)
    return _make(data, (x,), lambda g: (np.transpose(g, inverse),))


def cospi(x: Tensor) -> Tensor:
    """cos(pi * x) with argument reduction so integer inputs give exactly
    +-1 and the derivative there is exactly 0; this keeps the continuous
    syndrome extension literally equal to the parity map on binary inputs."""
    data = cospi_array(x.data)
    return _make(data, (x,), lambda g: (g * (-np.pi * sinpi_array(x.data)).astype(g.dtype),))


def cospi_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    k = np.round(x)
    sign = 1.0 - 2.0 * np.mod(k, 2.0)
    return (sign * np.cos(np.pi * (x - k))).astype(x.dtype, copy=False)


def sinpi_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    k = np.round(x)
    sign = 1.0 - 2.0 * np.mod(k, 2.0)
    return (sign * np.sin(np.pi * (x - k))).astype(x.dtype, copy=False)


# ---------------------------------------------------------------------------
# losses (fused forward/backward)
# ---------------------------------------------------------------------------

def loss_mse(pred: Tensor, target: Tensor) -> Tensor:
    if pred.shape != target.shape:
        raise DimensionError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    data = np.asarray((diff * diff).mean(), dtype=pred.dtype)
    scale = 2.0 / pred.data.size

    def vjp(g):
        base = (scale * g) * diff
        return base, -base

    return _make(data, (pred, target), vjp)


def loss_bce(pred: Tensor, target: Tensor, eps: float = BCE_EPS) -> Tensor:
    """Mean binary cross-entropy with epsilon clamping; the gradient is cut
    to zero where the clamp binds, matching the true derivative of the
    clamped objective."""
    if pred.shape != target.shape:
        raise DimensionError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if np.isnan(pred.data).any() or np.isnan(target.data).any():
        raise NumericError("NaN input to loss_bce")
    p = np.clip(pred.data, eps, 1 - eps)
    t = target.data
    data = np.asarray(-(t * np.log(p) + (1 - t) * np.log1p(-p)).mean(), dtype=pred.dtype)
    unclamped = (pred.data > eps) & (pred.data < 1 - eps)

    def vjp(g):
        gp = np.where(unclamped, (p - t) / (p * (1 - p)), 0.0) / p.size
        gt = (np.log1p(-p) - np.log(p)) / p.size
        return (g * gp).astype(p.dtype), (g * gt).astype(p.dtype)

    return _make(data, (pred, target), vjp)


# ---------------------------------------------------------------------------
# fused blocks
#
# Compositions of the primitives above, with hand-written vjps.  On one core
# the granular graph spends a third of its time on temporaries and closure
# bookkeeping; fusing a whole attention or feed-forward block into one node
# removes most of that while computing the same function (the equivalence is
# pinned by tests against the granular composition).
# ---------------------------------------------------------------------------

def layer_norm_affine(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """layer_norm(x) * gain + bias over the last axis in one node."""
    if gain.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
        raise DimensionError(
            f"gain/bias must match last axis: {x.shape} vs {gain.shape}, {bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xhat = x.data - mu
    var = (xhat * xhat).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat *= inv
    data = xhat * gain.data
    data += bias.data

    def vjp(g):
        lead = tuple(range(g.ndim - 1))
        dbias = g.sum(axis=lead)
        dgain = (g * xhat).sum(axis=lead)
        gx = g * gain.data
        gm = gx.mean(axis=-1, keepdims=True)
        gym = (gx * xhat).mean(axis=-1, keepdims=True)
        gx -= gm
        gx -= xhat * gym
        gx *= inv
        return gx, dgain.astype(gain.dtype, copy=False), dbias.astype(bias.dtype, copy=False)

    return _make(data, (x, gain, bias), vjp)


def _last_axis_max(a: np.ndarray) -> np.ndarray:
    """Pairwise-fold max over the last axis, keepdims.  numpy's reduce over a
    short inner axis is iterator-bound; folding halves keeps every maximum on
    full-length arrays.  Exact (same values, associative op)."""
    m = a
    width = m.shape[-1]
    while width > 1:
        half = width // 2
        tail = m[..., 2 * half:]
        m2 = np.maximum(m[..., :half], m[..., half:2 * half])
        if tail.shape[-1]:
            m2[..., :1] = np.maximum(m2[..., :1], tail)
        m = m2
        width = half
    return m


def _last_axis_sum(a: np.ndarray) -> np.ndarray:
    """Sum over the last axis via a matvec, keepdims; BLAS beats the strided
    reduce loop by an order of magnitude on short inner axes."""
    width = a.shape[-1]
    ones = np.ones(width, dtype=a.dtype)
    return np.matmul(a.reshape(-1, width), ones).reshape(a.shape[:-1] + (1,))


def self_attention(x: Tensor, wqkv: Tensor, bqkv: Tensor, wo: Tensor,
                   bo: Tensor, heads: int) -> Tensor:
    """Multi-head scaled dot-product self-attention on (batch, seq, dim).

    The three projections live in one (dim, 3*dim) matrix so each direction
    costs two large matmuls instead of six small ones."""
    if x.data.ndim != 3:
        raise DimensionError(f"self_attention expects (batch, seq, dim), got {x.shape}")
    B, L, D = x.shape
    if D % heads != 0:
        raise DimensionError(f"dim {D} not divisible by {heads} heads")
    if wqkv.shape != (D, 3 * D) or bqkv.shape != (3 * D,):
        raise DimensionError(f"qkv projection must be ({D}, {3 * D}) + ({3 * D},)")
    if wo.shape != (D, D) or bo.shape != (D,):
        raise DimensionError(f"output projection must be ({D}, {D}) + ({D},)")
    dh = D // heads
    scale = 1.0 / float(np.sqrt(dh))

    flat = x.data.reshape(B * L, D)
    qkv = np.matmul(flat, wqkv.data)
    qkv += bqkv.data
    parts = qkv.reshape(B, L, 3, heads, dh)
    q = parts[:, :, 0].transpose(0, 2, 1, 3)     # (B, H, L, dh) views
    k = parts[:, :, 1].transpose(0, 2, 1, 3)
    v = parts[:, :, 2].transpose(0, 2, 1, 3)
    att = np.matmul(q, k.swapaxes(-1, -2))
    att *= scale
    att -= _last_axis_max(att)
    np.exp(att, out=att)
    att /= _last_axis_sum(att)
    ctx = np.matmul(att, v).transpose(0, 2, 1, 3).reshape(B * L, D)
    data = np.matmul(ctx, wo.data)
    data += bo.data

    def vjp(g):
        go = g.reshape(B * L, D)
        dwo = np.matmul(ctx.T, go)
        dbo = go.sum(axis=0)
        gctx = np.matmul(go, wo.data.T)
        gc = gctx.reshape(B, L, heads, dh).transpose(0, 2, 1, 3)
        gatt = np.matmul(gc, v.swapaxes(-1, -2))
        gv = np.matmul(att.swapaxes(-1, -2), gc)
        inner = _last_axis_sum(gatt * att)
        gatt -= inner
        gatt *= att
        gatt *= scale
        gq = np.matmul(gatt, k)
        gk = np.matmul(gatt.swapaxes(-1, -2), q)
        gqkv = np.empty_like(parts)
        gqkv[:, :, 0] = gq.transpose(0, 2, 1, 3)
        gqkv[:, :, 1] = gk.transpose(0, 2, 1, 3)
        gqkv[:, :, 2] = gv.transpose(0, 2, 1, 3)
        g2 = gqkv.reshape(B * L, 3 * D)
        dwqkv = np.matmul(flat.T, g2)
        dbqkv = g2.sum(axis=0)
        gx = np.matmul(g2, wqkv.data.T)
        return gx.reshape(B, L, D), dwqkv, dbqkv, dwo, dbo

    return _make(data.reshape(B, L, D), (x, wqkv, bqkv, wo, bo), vjp)


def ff_block(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """linear -> selu -> linear on (batch, seq, dim) in one node."""
    if x.data.ndim != 3:
        raise DimensionError(f"ff_block expects (batch, seq, dim), got {x.shape}")
    B, L, D = x.shape
    if w1.shape[0] != D or w1.shape[1] != b1.shape[0] or \
            w2.shape != (w1.shape[1], D) or b2.shape != (D,):
        raise DimensionError(
            f"ff_block shapes inconsistent: {w1.shape}, {b1.shape}, {w2.shape}, {b2.shape}")
    flat = x.data.reshape(B * L, D)
    hidden = np.matmul(flat, w1.data)
    hidden += b1.data
    act = _selu_forward(hidden)
    data = np.matmul(act, w2.data)
    data += b2.data

    def vjp(g):
        go = g.reshape(B * L, D)
        dw2 = np.matmul(act.T, go)
        db2 = go.sum(axis=0)
        ga = np.matmul(go, w2.data.T)
        ga *= _selu_slope(act)
        dw1 = np.matmul(flat.T, ga)
        db1 = ga.sum(axis=0)
        gx = np.matmul(ga, w1.data.T)
        return gx.reshape(B, L, D), dw1, db1, dw2, db2

    return _make(data.reshape(B, L, D), (x, w1, b1, w2, b2), vjp)


def binary_token_embed(m: Tensor, emb0: Tensor, emb1: Tensor, pos: Tensor) -> Tensor:
    """Token blend m*emb1 + (1-m)*emb0 + pos for (batch, seq) inputs.

    m is treated as data (no gradient flows into it); continuous values
    interpolate the two symbol embeddings."""
    if m.requires_grad:
        raise ValidationError("token inputs are constants in this embedding")
    if m.data.ndim != 2:
        raise DimensionError(f"binary_token_embed expects (batch, seq), got {m.shape}")
    B, L = m.shape
    D = emb0.shape[-1]
    if emb0.shape != (D,) or emb1.shape != (D,) or pos.shape != (L, D):
        raise DimensionError(
            f"embedding shapes inconsistent: {emb0.shape}, {emb1.shape}, {pos.shape}")
    m3 = m.data[:, :, None]
    data = m3 * (emb1.data - emb0.data)
    data += emb0.data
    data += pos.data

    def vjp(g):
        dpos = g.sum(axis=0)
        demb1 = (g * m3).sum(axis=(0, 1))
        demb0 = dpos.sum(axis=0) - demb1
        return (None, demb0.astype(emb0.dtype, copy=False),
                demb1.astype(emb1.dtype, copy=False), dpos.astype(pos.dtype, copy=False))

    return _make(data, (m, emb0, emb1, pos), vjp)


# ---------------------------------------------------------------------------
# parameter initialization
# ---------------------------------------------------------------------------

def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int,
                    dtype=np.float32) -> np.ndarray:
    """Uniform fan-in scaled init, bound 1/sqrt(fan_in)."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


__all__ = [
    "Tensor", "Graph", "no_grad", "backward", "topological_order",
    "add", "subtract", "multiply", "matmul", "linear",
    "absolute_value", "selu", "sigmoid", "softmax", "layer_norm",
    "mean", "concatenate", "reshape", "transpose", "cospi",
    "cospi_array", "sinpi_array",
    "layer_norm_affine", "self_attention", "ff_block", "binary_token_embed",
    "loss_mse", "loss_bce",
    "kaiming_uniform",
    "SELU_ALPHA", "SELU_LAMBDA", "BCE_EPS",
]
