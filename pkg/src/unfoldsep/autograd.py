"""A small tape-based reverse-mode differentiation engine over numpy arrays.

Only the operations needed to train a mask-inference network through
unfolded STFT / iSTFT phase-reconstruction layers are provided.  Complex
spectrograms travel through the graph as real ``T x F x 2`` arrays holding
the real and imaginary planes.

Example::

    tape = Tape()
    w = tape.leaf(np.ones(3))
    loss = ad.sum(ad.tanh(w * 2.0))
    tape.backward(loss)
    w.grad
"""

from __future__ import annotations

import numpy as np

from . import dsp
from .errors import GraphError
from .masks import sigmoid as _sigmoid

MAX_RANK = 3


class Node:
    """A value on a :class:`Tape` plus its gradient accumulator."""

    __slots__ = ("value", "_grad", "parents", "backward_fn", "tape", "requires_grad", "index", "name")
    # make numpy defer to our reflected operators (ndarray - Node -> Node)
    __array_ufunc__ = None

    def __init__(self, tape, value, parents=(), backward_fn=None, requires_grad=False, name=None):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim > MAX_RANK:
            raise GraphError(f"rank {value.ndim} tensors are not supported")
        self.tape = tape
        self.value = value
        self._grad = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.name = name
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            return np.zeros_like(self.value)
        return self._grad

    def _accumulate(self, g):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != self.value.shape:
            raise GraphError(f"gradient shape {g.shape} != value shape {self.value.shape}")
        self._grad = g.copy() if self._grad is None else self._grad + g

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Node{label}(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)


class Tape:
    """Records nodes in creation order.

    Creation order is always a valid topological order, so the default
    backward pass simply walks the tape in reverse.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def leaf(self, value, name=None, requires_grad=True) -> Node:
        return Node(self, value, requires_grad=requires_grad, name=name)

    def constant(self, value) -> Node:
        return Node(self, value)

    def zero_grad(self):
        for node in self.nodes:
            node._grad = None

    def _ancestors(self, root):
        seen = {id(root)}
        stack = [root]
        found = []
        while stack:
            node = stack.pop()
            found.append(node)
            for p in node.parents:
                if p.requires_grad and id(p) not in seen:
                    seen.add(id(p))
                    stack.append(p)
        return found

    def _dfs_order(self, root):
        """Reverse DFS postorder: a topological order independent of creation order."""
        post, seen = [], {id(root)}
        stack = [(root, iter(reversed(root.parents)))]
        while stack:
            node, children = stack[-1]
            for p in children:
                if p.requires_grad and id(p) not in seen:
                    seen.add(id(p))
                    stack.append((p, iter(reversed(p.parents))))
                    break
            else:
                stack.pop()
                post.append(node)
        return post[::-1]

    def backward(self, root: Node, order: str = "tape"):
        """Accumulate d(root)/d(node) into ``node.grad`` for every ancestor.

        ``order`` selects the topological order ("tape" or "dfs"); both must
        give the same gradients.  Each node is visited exactly once.
        """
        if root.tape is not self:
            raise GraphError("root belongs to a different tape")
        if root.value.size != 1:
            raise GraphError("backward needs a scalar root")
        if not root.requires_grad:
            return
        if order == "tape":
            nodes = sorted(self._ancestors(root), key=lambda n: n.index, reverse=True)
        elif order == "dfs":
            nodes = self._dfs_order(root)
        else:
            raise GraphError(f"unknown order {order!r}")
        root._accumulate(np.ones_like(root.value))
        for node in nodes:
            if node.backward_fn is None or node._grad is None:
                continue
            for parent, g in zip(node.parents, node.backward_fn(node._grad)):
                if g is not None and parent.requires_grad:
                    parent._accumulate(g)


def _lift(tape, x) -> Node:
    if isinstance(x, Node):
        if x.tape is not tape:
            raise GraphError("operands live on different tapes")
        return x
    return tape.constant(x)


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    raise GraphError("at least one operand must be a Node")


def _op(value, parents, backward_fn, name=None) -> Node:
    tape = parents[0].tape
    needs = any(p.requires_grad for p in parents)
    return Node(tape, value, parents, backward_fn if needs else None, needs, name)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise GraphError(f"incompatible shapes {a.shape} and {b.shape}") from exc


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    _check_broadcast(a, b)
    return _op(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    _check_broadcast(a, b)
    return _op(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
    )


def mul(a, b) -> Node:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    _check_broadcast(a, b)
    return _op(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def matmul(a, b) -> Node:
    """2-D @ 2-D or 2-D @ 1-D matrix product."""
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    if a.value.ndim != 2 or b.value.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise GraphError(f"cannot matmul {a.shape} and {b.shape}")

    def backward(g):
        if b.value.ndim == 1:
            return np.outer(g, b.value), a.value.T @ g
        return g @ b.value.T, a.value.T @ g

    return _op(a.value @ b.value, (a, b), backward)


def sum(a: Node) -> Node:  # noqa: A001 - mirrors numpy
    return _op(np.sum(a.value), (a,), lambda g: (np.full(a.shape, float(g)),))


def mean(a: Node) -> Node:
    n = a.value.size
    return _op(np.mean(a.value), (a,), lambda g: (np.full(a.shape, float(g) / n),))


# ------------------------------------------------------------ elementwise


def sigmoid(a: Node) -> Node:
    y = _sigmoid(a.value)
    return _op(y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a: Node) -> Node:
    y = np.tanh(a.value)
    return _op(y, (a,), lambda g: (g * (1.0 - y * y),))


def relu_clip(a: Node, lo: float = 0.0, hi: float = 2.0) -> Node:
    """clamp(a, lo, hi); the subgradient is 0 at both kinks."""
    inside = (a.value > lo) & (a.value < hi)
    return _op(np.clip(a.value, lo, hi), (a,), lambda g: (g * inside,))


def softmax3(a: Node) -> Node:
    """Softmax over a trailing axis of length 3."""
    if a.value.ndim == 0 or a.shape[-1] != 3:
        raise GraphError("softmax3 needs a trailing axis of length 3")
    z = a.value - a.value.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    return _op(y, (a,), lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),))


def log_mag(z: Node, delta: float = 1e-7) -> Node:
    """log(|z| + delta) for a ``... x 2`` real/imag node."""
    r = np.sqrt(z.value[..., 0] ** 2 + z.value[..., 1] ** 2)

    def backward(g):
        safe = np.where(r > 0, r, 1.0)
        scale = np.where(r > 0, g / ((r + delta) * safe), 0.0)
        return (z.value * scale[..., None],)

    return _op(np.log(r + delta), (z,), backward)


def normalize_rows(a: Node, eps: float = 1e-12) -> Node:
    """Scale each row of a 2-D node to unit L2 norm."""
    n = np.maximum(np.linalg.norm(a.value, axis=1, keepdims=True), eps)
    u = a.value / n

    def backward(g):
        return ((g - (g * u).sum(axis=1, keepdims=True) * u) / n,)

    return _op(u, (a,), backward)


# ------------------------------------------------------------- structural


def reshape(a: Node, shape) -> Node:
    return _op(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Node, axes) -> Node:
    inverse = np.argsort(axes)
    return _op(np.transpose(a.value, axes), (a,), lambda g: (np.transpose(g, inverse),))


def index(a: Node, key) -> Node:
    """Basic (non-fancy) indexing; the backward pass scatters into zeros."""

    def backward(g):
        out = np.zeros_like(a.value)
        out[key] += g
        return (out,)

    return _op(a.value[key], (a,), backward)


def stack(nodes, axis: int = 0) -> Node:
    tape = _tape_of(*nodes)
    nodes = [_lift(tape, n) for n in nodes]
    value = np.stack([n.value for n in nodes], axis=axis)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(nodes)))

    return _op(value, nodes, backward)


# -------------------------------------------------------- signal layers


def stft(x: Node, config: dsp.StftConfig) -> Node:
    """STFT layer: length-L signal -> ``T x F x 2`` planes."""
    if x.value.ndim != 1:
        raise GraphError("stft expects a 1-D signal node")
    length = x.shape[0]
    value = dsp.to_planes(dsp.stft_array(x.value, config))
    return _op(
        value,
        (x,),
        lambda g: (dsp.stft_adjoint(dsp.from_planes(g), config, length),),
    )


def istft(z: Node, config: dsp.StftConfig, length: int) -> Node:
    """iSTFT layer: ``T x F x 2`` planes -> signal trimmed to ``length``."""
    expected = (config.n_frames(length), config.n_freq, 2)
    if z.shape != expected:
        raise GraphError(f"istft input {z.shape} does not match config/length {expected}")
    value = dsp.istft_array(dsp.from_planes(z.value), config, length)
    return _op(value, (z,), lambda g: (dsp.to_planes(dsp.istft_adjoint(g, config)),))


def polar_reassign(z, new_mag, eps: float = 1e-8) -> Node:
    """Keep the phase of ``z`` and replace its magnitude: new_mag * z / max(|z|, eps).

    This is the composite "take the phase of an STFT, then attach a fixed
    magnitude to it", written without an explicit angle so it stays smooth
    away from |z| <= eps.
    """
    tape = _tape_of(z, new_mag)
    z, new_mag = _lift(tape, z), _lift(tape, new_mag)
    if z.shape != new_mag.shape + (2,):
        raise GraphError(f"shape mismatch: {z.shape} vs {new_mag.shape} + (2,)")
    r = np.sqrt(z.value[..., 0] ** 2 + z.value[..., 1] ** 2)
    d = np.maximum(r, eps)
    u = z.value / d[..., None]
    m = new_mag.value

    def backward(g):
        g_dot_u = (g * u).sum(axis=-1)
        # on the floored region u = z/eps is linear in z: no projection term
        radial = np.where(r > eps, g_dot_u, 0.0)
        grad_z = (m / d)[..., None] * (g - radial[..., None] * u)
        return grad_z, g_dot_u

    return _op(m[..., None] * u, (z, new_mag), backward)


# ------------------------------------------------------------------ losses


def l1(a: Node, b) -> Node:
    """sum |a - b| against a constant target; sign(0) is taken as 0."""
    b = np.asarray(b.value if isinstance(b, Node) else b, dtype=np.float64)
    if a.shape != b.shape:
        raise GraphError(f"l1 shape mismatch: {a.shape} vs {b.shape}")
    diff = a.value - b
    return _op(np.abs(diff).sum(), (a,), lambda g: (float(g) * np.sign(diff),))


def min_perm(losses) -> Node:
    """Minimum over per-permutation scalar losses.

    The gradient goes to the first minimizer only.
    """
    losses = list(losses)
    if not losses:
        raise GraphError("min_perm needs at least one loss")
    values = np.array([float(n.value) for n in losses])
    best = int(np.argmin(values))

    def backward(g):
        return tuple(g if i == best else None for i in range(len(losses)))

    out = _op(values[best], losses, backward)
    out.name = f"perm{best}"
    return out


def dc_classic(v: Node, y) -> Node:
    """||V V^T - Y Y^T||_F^2 via D x D / D x C / C x C Gram matrices."""
    y = np.asarray(y, dtype=np.float64)
    if v.value.ndim != 2 or y.ndim != 2 or v.shape[0] != y.shape[0]:
        raise GraphError(f"dc_classic shape mismatch: {v.shape} vs {y.shape}")
    vv = v.value.T @ v.value
    vy = v.value.T @ y
    yy = y.T @ y
    value = np.sum(vv**2) - 2.0 * np.sum(vy**2) + np.sum(yy**2)
    return _op(value, (v,), lambda g: (float(g) * 4.0 * (v.value @ vv - y @ vy.T),))


def dc_whitened(v: Node, y, ridge: float = 1e-8) -> Node:
    """D - tr((V^T V)^-1 V^T Y (Y^T Y)^-1 Y^T V), with ``ridge`` on both Grams."""
    y = np.asarray(y, dtype=np.float64)
    if v.value.ndim != 2 or y.ndim != 2 or v.shape[0] != y.shape[0]:
        raise GraphError(f"dc_whitened shape mismatch: {v.shape} vs {y.shape}")
    d = v.shape[1]
    a_inv = np.linalg.inv(v.value.T @ v.value + ridge * np.eye(d))
    w = np.linalg.inv(y.T @ y + ridge * np.eye(y.shape[1]))
    b = v.value.T @ y
    p = b @ w @ b.T
    value = d - np.trace(a_inv @ p)

    def backward(g):
        q = a_inv @ p @ a_inv
        return (float(g) * (2.0 * v.value @ q - 2.0 * y @ w @ b.T @ a_inv),)

    return _op(value, (v,), backward)
