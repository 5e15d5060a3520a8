"""Forward-over-reverse differentiation for small coordinate-based networks.

Every value is a :class:`Jet`: an array whose leading axis holds Taylor slots
with respect to the two spatial inputs ``(x, y)``::

    order 0:  [v]
    order 1:  [v, v_x, v_y]
    order 2:  [v, v_x, v_y, v_xx, v_xy, v_yy]

Jet arithmetic propagates the spatial tangents forward.  When a :class:`Tape`
is active, each primitive also records a vector-Jacobian product covering all
of its slots, so a scalar loss built from tangents (e.g. ``u.dx ** 2``) can be
differentiated exactly with respect to the network parameters in one reverse
sweep.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

NSLOTS = {0: 1, 1: 3, 2: 6}
_ORDER_OF = {1: 0, 3: 1, 6: 2}
V, X, Y, XX, XY, YY = range(6)

# slot gathers used by Jet.diff
_DIFF_SLOTS = {
    (1, "x"): [X],
    (1, "y"): [Y],
    (2, "x"): [X, XX, XY],
    (2, "y"): [Y, XY, YY],
}


class DivergedLossError(FloatingPointError):
    """Raised when a loss evaluates to NaN or infinity."""


class Tape:
    """Ordered record of the primitive operations executed while active.

    Use as a context manager; nested tapes are allowed and only the innermost
    one records.
    """

    _stack: list["Tape"] = []

    def __init__(self):
        self.nodes: list[Jet] = []

    def __enter__(self) -> "Tape":
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc):
        Tape._stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    @classmethod
    def active(cls) -> "Tape | None":
        return cls._stack[-1] if cls._stack else None

    def backward(self, out: "Jet", seed=None) -> dict[int, np.ndarray]:
        """Reverse sweep from ``out``; returns adjoints keyed by ``id(node)``.

        Nodes are visited in exact reverse recording order, which is a valid
        reverse topological order because a node is recorded after its inputs.
        """
        grads = {id(out): np.ones_like(out.data) if seed is None else seed}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if pg.dtype != parent.data.dtype:
                    # adjoints follow their node's precision
                    pg = pg.astype(parent.data.dtype)
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        return grads


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (numpy broadcasting rules, slot axis included)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _pad(data: np.ndarray, nslots: int) -> np.ndarray:
    if data.shape[0] == nslots:
        return data
    out = np.zeros((nslots,) + data.shape[1:], dtype=data.dtype)
    out[: data.shape[0]] = data
    return out


def _bshape(a: np.ndarray, b: np.ndarray) -> tuple:
    return np.broadcast_shapes(a.shape[1:], b.shape[1:])


class Jet:
    """Array of Taylor slots in ``(x, y)``; the node type of the tape."""

    __slots__ = ("data", "parents", "vjp", "requires_grad", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, parents: tuple = (), vjp=None, requires_grad=False):
        data = np.asarray(data)
        if data.ndim == 0 or data.shape[0] not in _ORDER_OF:
            raise ValueError(f"leading slot axis must have length 1, 3 or 6, got {data.shape}")
        self.data = data
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad

    # -- construction ------------------------------------------------------
    @classmethod
    def constant(cls, value, order: int = 0) -> "Jet":
        value = np.asarray(value, dtype=float) if not isinstance(value, np.ndarray) else value
        return cls(_pad(value[None], NSLOTS[order]))

    @classmethod
    def leaf(cls, value: np.ndarray) -> "Jet":
        """Trainable order-0 leaf (a parameter array); adjoints accumulate for it."""
        return cls(np.asarray(value)[None], requires_grad=True)

    def detach(self) -> "Jet":
        """Same values, cut off from the tape (no adjoint flows back)."""
        return Jet(self.data)

    @property
    def order(self) -> int:
        return _ORDER_OF[self.data.shape[0]]

    @property
    def shape(self) -> tuple:
        return self.data.shape[1:]

    def numpy(self) -> np.ndarray:
        """Value slot as a plain array."""
        return self.data[V]

    def __repr__(self):
        return f"Jet(order={self.order}, shape={self.shape})"

    def __len__(self):
        return self.data.shape[1]

    # -- slot access -------------------------------------------------------
    def slot(self, i: int) -> "Jet":
        if i >= self.data.shape[0]:
            raise ValueError(f"slot {i} not tracked by an order-{self.order} jet")
        return _gather_slots(self, [i])

    value = property(lambda self: self.slot(V))
    dx = property(lambda self: self.slot(X))
    dy = property(lambda self: self.slot(Y))
    dxx = property(lambda self: self.slot(XX))
    dxy = property(lambda self: self.slot(XY))
    dyy = property(lambda self: self.slot(YY))

    def diff(self, axis: str) -> "Jet":
        """Spatial derivative as a jet one order lower (``u.diff('x').dy == u_xy``)."""
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        return _gather_slots(self, _DIFF_SLOTS[(self.order, axis)])

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError("truncate cannot raise the order")
        if order == self.order:
            return self
        return _gather_slots(self, list(range(NSLOTS[order])))

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, -other if not isinstance(other, Jet) else neg(other))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return mul(self, reciprocal(other))
        return mul(self, 1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return mul(reciprocal(self), other)

    def __pow__(self, p):
        if p == 2:
            return square(self)
        if p == 1:
            return self
        raise NotImplementedError("only p in {1, 2} is supported")

    def __getitem__(self, index) -> "Jet":
        """Index the trailing (non-slot) axes, e.g. ``u[:100]`` or ``h[:, 0]``."""
        return take(self, index)

    def sum(self) -> "Jet":
        return reduce_sum(self)

    def mean(self) -> "Jet":
        n = int(np.prod(self.shape)) if self.shape else 1
        if n == 0:
            raise ValueError("mean of an empty jet")
        return reduce_sum(self) * (1.0 / n)


def _as_jet(x) -> Jet:
    if isinstance(x, Jet):
        return x
    return Jet(np.asarray(x, dtype=float)[None])


def _record(data: np.ndarray, parents: Sequence[Jet], vjp) -> Jet:
    tape = Tape.active()
    if tape is None or not any(p.requires_grad for p in parents):
        return Jet(data)
    out = Jet(data, tuple(parents), vjp, requires_grad=True)
    tape.nodes.append(out)
    return out


# -- primitives ------------------------------------------------------------

def add(a, b) -> Jet:
    a, b = _as_jet(a), _as_jet(b)
    sa, sb = a.data.shape[0], b.data.shape[0]
    if sa == sb:
        data = a.data + b.data
    else:
        shape = (max(sa, sb),) + _bshape(a.data, b.data)
        data = np.zeros(shape, dtype=np.result_type(a.data, b.data))
        data[:sa] += a.data
        data[:sb] += b.data
    ashape, bshape = a.data.shape, b.data.shape

    def vjp(g):
        return (_unbroadcast(g[:sa], ashape), _unbroadcast(g[:sb], bshape))

    return _record(data, (a, b), vjp)


def neg(a: Jet) -> Jet:
    return _record(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Jet:
    a, b = _as_jet(a), _as_jet(b)
    sa, sb = a.data.shape[0], b.data.shape[0]
    ashape, bshape = a.data.shape, b.data.shape
    A, B = a.data, b.data
    if sb == 1 or sa == 1:
        # one factor is constant in space: plain slot-wise scaling
        data = A * B

        # _unbroadcast also folds the slot axis when the factor is order 0
        def vjp(g):
            ga = _unbroadcast(g * B, ashape) if a.requires_grad else None
            gb = _unbroadcast(g * A, bshape) if b.requires_grad else None
            return ga, gb

        return _record(data, (a, b), vjp)

    s = max(sa, sb)
    A, B = _pad(A, s), _pad(B, s)
    data = np.empty((s,) + _bshape(A, B), dtype=np.result_type(A, B))
    data[V] = A[V] * B[V]
    data[X] = A[X] * B[V] + A[V] * B[X]
    data[Y] = A[Y] * B[V] + A[V] * B[Y]
    if s == 6:
        data[XX] = A[XX] * B[V] + 2.0 * A[X] * B[X] + A[V] * B[XX]
        data[XY] = A[XY] * B[V] + A[X] * B[Y] + A[Y] * B[X] + A[V] * B[XY]
        data[YY] = A[YY] * B[V] + 2.0 * A[Y] * B[Y] + A[V] * B[YY]

    def leibniz_vjp(g, P, Q):
        # adjoint of the first factor P given the second factor Q
        out = np.empty_like(g)
        out[V] = (g * Q).sum(axis=0)
        if s == 3:
            out[X] = g[X] * Q[V]
            out[Y] = g[Y] * Q[V]
        else:
            out[X] = g[X] * Q[V] + 2.0 * g[XX] * Q[X] + g[XY] * Q[Y]
            out[Y] = g[Y] * Q[V] + g[XY] * Q[X] + 2.0 * g[YY] * Q[Y]
            out[XX:] = g[XX:] * Q[V]
        return out

    def vjp(g):
        ga = _unbroadcast(leibniz_vjp(g, A, B)[:sa], ashape) if a.requires_grad else None
        gb = _unbroadcast(leibniz_vjp(g, B, A)[:sb], bshape) if b.requires_grad else None
        return ga, gb

    return _record(data, (a, b), vjp)


def _unary(a: Jet, f0, f1, f2=None, f3=None) -> Jet:
    """Apply a scalar function given its value and first three derivatives at a.value."""
    Z = a.data
    s = Z.shape[0]
    data = np.empty_like(Z, dtype=np.result_type(Z, f0))
    data[V] = f0
    if s >= 3:
        data[X] = f1 * Z[X]
        data[Y] = f1 * Z[Y]
    if s == 6:
        data[XX] = f1 * Z[XX] + f2 * Z[X] * Z[X]
        data[XY] = f1 * Z[XY] + f2 * Z[X] * Z[Y]
        data[YY] = f1 * Z[YY] + f2 * Z[Y] * Z[Y]

    def vjp(g):
        out = np.empty_like(g)
        if s == 1:
            out[V] = g[V] * f1
        elif s == 3:
            out[V] = g[V] * f1 + f2 * (g[X] * Z[X] + g[Y] * Z[Y])
            out[X] = g[X] * f1
            out[Y] = g[Y] * f1
        else:
            out[V] = (g[V] * f1 + f2 * (g[X:] * Z[X:]).sum(axis=0)
                      + f3 * (g[XX] * Z[X] * Z[X] + g[XY] * Z[X] * Z[Y] + g[YY] * Z[Y] * Z[Y]))
            out[X] = g[X] * f1 + f2 * (2.0 * g[XX] * Z[X] + g[XY] * Z[Y])
            out[Y] = g[Y] * f1 + f2 * (g[XY] * Z[X] + 2.0 * g[YY] * Z[Y])
            out[XX:] = g[XX:] * f1
        return (out,)

    return _record(data, (a,), vjp)


def tanh(a: Jet) -> Jet:
    t = np.tanh(a.data[V])
    if a.data.shape[0] == 1:
        return _unary(a, t, 1.0 - t * t)
    if a.data.shape[0] == 3:
        return _tanh1(a, t)
    d1 = 1.0 - t * t
    d2 = -2.0 * t * d1
    d3 = -2.0 * d1 * d1 + 4.0 * t * t * d1
    return _unary(a, t, d1, d2, d3)


def _tanh1(a: Jet, t: np.ndarray) -> Jet:
    """First-order tanh with fused, allocation-light forward and adjoint passes."""
    Z = a.data
    d1 = 1.0 - t * t
    data = np.empty_like(Z)
    data[V] = t
    np.multiply(Z[X:], d1, out=data[X:])

    def vjp(g):
        out = np.empty_like(g)
        np.multiply(g[X:], d1, out=out[X:])
        # d/dz of (f1 * z_x) through f1 = 1 - t^2 gives f2 = -2 t f1
        acc = g[X] * Z[X]
        acc += g[Y] * Z[Y]
        acc *= t
        acc *= -2.0
        acc += g[V]
        np.multiply(acc, d1, out=out[V])
        return (out,)

    return _record(data, (a,), vjp)


def reciprocal(a: Jet) -> Jet:
    r = 1.0 / a.data[V]
    r2 = r * r
    return _unary(a, r, -r2, 2.0 * r2 * r, -6.0 * r2 * r2)


def square(a: Jet) -> Jet:
    v = a.data[V]
    return _unary(a, v * v, 2.0 * v, 2.0 * np.ones_like(v), np.zeros_like(v))


def absolute(a: Jet) -> Jet:
    """|a|, smooth away from a.value == 0."""
    v = a.data[V]
    sg = np.sign(v)
    z = np.zeros_like(v)
    return _unary(a, np.abs(v), sg, z, z)


def linear(a: Jet, W: Jet, b: Jet) -> Jet:
    """Affine layer ``a @ W + b`` with bias entering the value slot only."""
    if W.order != 0 or b.order != 0:
        raise ValueError("layer parameters must be constant in space")
    Wm, A = W.data[0], a.data
    data = A @ Wm
    data[V] += b.data[0]
    nin, nout = Wm.shape

    def vjp(g):
        ga = g @ Wm.T if a.requires_grad else None
        gW = (A.reshape(-1, nin).T @ g.reshape(-1, nout))[None] if W.requires_grad else None
        gb = g[V].reshape(-1, nout).sum(axis=0)[None] if b.requires_grad else None
        return ga, gW, gb

    return _record(data, (a, W, b), vjp)


def reduce_sum(a: Jet) -> Jet:
    """Sum over all trailing axes, slot by slot."""
    shape = a.data.shape
    data = a.data.reshape(shape[0], -1).sum(axis=1)

    def vjp(g):
        return (np.broadcast_to(g.reshape((shape[0],) + (1,) * (len(shape) - 1)), shape).copy(),)

    return _record(data, (a,), vjp)


def take(a: Jet, index) -> Jet:
    if not isinstance(index, tuple):
        index = (index,)
    full = (slice(None),) + index
    data = a.data[full]
    shape = a.data.shape
    fancy = any(isinstance(i, (list, np.ndarray)) for i in index)

    def vjp(g):
        out = np.zeros(shape, dtype=g.dtype)
        if fancy:
            np.add.at(out, full, g)
        else:
            out[full] = g
        return (out,)

    return _record(np.ascontiguousarray(data), (a,), vjp)


def reshape(a: Jet, shape: tuple) -> Jet:
    old = a.data.shape
    data = a.data.reshape((old[0],) + tuple(shape))
    return _record(data, (a,), lambda g: (g.reshape(old),))


def stack(jets: Sequence, axis: int = -1) -> Jet:
    """Stack equally shaped jets along a new trailing axis."""
    jets = [_as_jet(j) for j in jets]
    s = max(j.data.shape[0] for j in jets)
    arrays = [_pad(j.data, s) for j in jets]
    shape = np.broadcast_shapes(*(x.shape for x in arrays))
    arrays = [np.broadcast_to(x, shape) for x in arrays]
    if axis < 0:
        axis = len(shape) + 1 + axis
    data = np.stack(arrays, axis=axis)
    shapes = [j.data.shape for j in jets]

    def vjp(g):
        parts = np.moveaxis(g, axis, 0)
        return tuple(_unbroadcast(parts[i][: sh[0]], sh) for i, sh in enumerate(shapes))

    return _record(data, tuple(jets), vjp)


def _gather_slots(a: Jet, slots: list[int]) -> Jet:
    data = a.data[slots]
    shape = a.data.shape

    def vjp(g):
        out = np.zeros(shape, dtype=g.dtype)
        out[slots] = g
        return (out,)

    return _record(data, (a,), vjp)


# -- public operations -----------------------------------------------------

def seed_point(x, y, order: int = 1) -> tuple[Jet, Jet]:
    """Coordinate jets for ``x`` and ``y`` with unit self-tangents.

    ``x`` and ``y`` may be scalars or equally shaped arrays of points.
    """
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = NSLOTS[order]
    xd = np.zeros((s,) + x.shape, dtype=x.dtype)
    yd = np.zeros((s,) + y.shape, dtype=y.dtype)
    xd[V], yd[V] = x, y
    if order >= 1:
        xd[X] = 1.0
        yd[Y] = 1.0
    return Jet(xd), Jet(yd)


def seed_inputs(points: np.ndarray, order: int, extra: np.ndarray | None = None) -> Jet:
    """Network input jet of shape (slots, N, n_in) for coordinates ``points`` (N, 2).

    ``extra`` columns (N, m) are appended as spatially constant inputs.
    """
    points = np.asarray(points)
    n = points.shape[0]
    ncol = 2 + (0 if extra is None else extra.shape[1])
    data = np.zeros((NSLOTS[order], n, ncol), dtype=points.dtype)
    data[V, :, :2] = points
    if extra is not None:
        data[V, :, 2:] = extra
    if order >= 1:
        data[X, :, 0] = 1.0
        data[Y, :, 1] = 1.0
    return Jet(data)


def grad_params(loss: Jet, params: Sequence[Jet], tape: Tape | None = None) -> np.ndarray:
    """Flat gradient of a scalar ``loss`` with respect to ``params`` (in the given order)."""
    if loss.data.size != 1:
        raise ValueError(f"loss must be a scalar order-0 jet, got shape {loss.data.shape}")
    value = float(loss.data.reshape(-1)[0])
    if not np.isfinite(value):
        raise DivergedLossError(f"loss is not finite: {value}")
    sizes = [p.data.size for p in params]
    flat = np.zeros(sum(sizes), dtype=loss.data.dtype)
    if not loss.requires_grad:
        return flat
    tape = tape or Tape.active()
    if tape is None:
        raise RuntimeError("grad_params needs the tape the loss was recorded on")
    grads = tape.backward(loss)
    pos = 0
    for p, n in zip(params, sizes):
        g = grads.get(id(p))
        if g is not None:
            flat[pos:pos + n] = g.reshape(-1)
        pos += n
    return flat


def value_and_grad(loss_builder: Callable[[list[Jet]], Jet], arrays: Sequence[np.ndarray]):
    """Evaluate ``loss_builder`` on leaves made from ``arrays``; return (loss, flat grad)."""
    with Tape() as tape:
        leaves = [Jet.leaf(a) for a in arrays]
        loss = loss_builder(leaves)
        g = grad_params(loss, leaves, tape)
    return float(loss.data.reshape(-1)[0]), g


def check_gradient(loss_builder: Callable[[list[Jet]], Jet], params: Sequence[np.ndarray],
                   fd_step: float = 1e-6) -> float:
    """Max over parameters of |analytic - central FD| / max(1, |analytic|)."""
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    arrays = [np.array(p, dtype=float) for p in params]
    _, g = value_and_grad(loss_builder, arrays)

    def f():
        out = loss_builder([Jet.constant(a) for a in arrays])
        return float(out.data.reshape(-1)[0])

    worst, k = 0.0, 0
    for a in arrays:
        flat = a.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + fd_step
            fp = f()
            flat[i] = old - fd_step
            fm = f()
            flat[i] = old
            fd = (fp - fm) / (2.0 * fd_step)
            worst = max(worst, abs(g[k] - fd) / max(1.0, abs(g[k])))
            k += 1
    return worst
