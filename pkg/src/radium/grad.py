"""Array-valued reverse-mode automatic differentiation.

Every primitive below accepts plain numpy arrays or :class:`Var` nodes. With
plain arrays it is just numpy; as soon as one operand is a ``Var`` the result
is recorded on that operand's :class:`Tape`, so one cost function serves both
fast batched evaluation and gradient computation::

    tape = Tape()
    x = tape.var(np.array([1.0, 2.0]))
    y = sum(x * x)
    (gx,) = backward(tape, y, [x])
"""

from __future__ import annotations

import numpy as np


class NonScalarOutput(ValueError):
    pass


class NaNGradient(FloatingPointError):
    pass


class DegenerateEigenvalue(np.linalg.LinAlgError):
    pass


class Tape:
    """Append-only record of primitive operations.

    Nodes are appended as they are created, so operands always precede
    results and a single reverse sweep in index order is a valid topological
    traversal.
    """

    def __init__(self):
        self.nodes: list[Var] = []

    def var(self, value) -> "Var":
        return Var(np.array(value, dtype=float), self, ())

    def __len__(self):
        return len(self.nodes)


class Var:
    __slots__ = ("value", "tape", "index", "parents")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, value: np.ndarray, tape: Tape, parents):
        self.value = value
        self.tape = tape
        self.parents = parents  # tuple of (Var, vjp)
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    shape = property(lambda self: self.value.shape)
    ndim = property(lambda self: self.value.ndim)
    size = property(lambda self: self.value.size)
    T = property(lambda self: swapaxes(self, -1, -2))

    def __repr__(self):
        return f"Var(index={self.index}, shape={self.shape})"

    def __len__(self):
        return len(self.value)

    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __truediv__(self, o): return div(self, o)
    def __rtruediv__(self, o): return div(o, self)
    def __neg__(self): return neg(self)
    def __pow__(self, p): return power(self, p)
    def __matmul__(self, o): return matmul(self, o)
    def __rmatmul__(self, o): return matmul(o, self)
    def __getitem__(self, idx): return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def value(x):
    return x.value if isinstance(x, Var) else x


def is_var(x) -> bool:
    return isinstance(x, Var)


def _node(out, *pairs):
    """Wrap ``out`` as a Var if any operand in ``pairs`` (operand, vjp) is a Var."""
    parents = tuple((x, fn) for x, fn in pairs if isinstance(x, Var))
    if not parents:
        return out
    return Var(np.asarray(out, dtype=float), parents[0][0].tape, parents)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    ndiff = g.ndim - len(shape)
    if ndiff > 0:
        g = g.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _shape(x):
    return np.shape(value(x))


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b):
    av, bv = value(a), value(b)
    return _node(av + bv,
                 (a, lambda g: _unbroadcast(g, _shape(a))),
                 (b, lambda g: _unbroadcast(g, _shape(b))))


def sub(a, b):
    av, bv = value(a), value(b)
    return _node(av - bv,
                 (a, lambda g: _unbroadcast(g, _shape(a))),
                 (b, lambda g: _unbroadcast(-g, _shape(b))))


def mul(a, b):
    av, bv = value(a), value(b)
    return _node(av * bv,
                 (a, lambda g: _unbroadcast(g * bv, _shape(a))),
                 (b, lambda g: _unbroadcast(g * av, _shape(b))))


def div(a, b):
    av, bv = value(a), value(b)
    out = av / bv
    return _node(out,
                 (a, lambda g: _unbroadcast(g / bv, _shape(a))),
                 (b, lambda g: _unbroadcast(-g * out / bv, _shape(b))))


def neg(a):
    return _node(-value(a), (a, lambda g: -g))


def power(a, p):
    """``a ** p`` for a constant exponent ``p``."""
    if isinstance(p, Var):
        raise TypeError("only constant exponents are supported")
    av = value(a)
    out = av ** p
    return _node(out, (a, lambda g: g * p * av ** (p - 1)))


def square(a):
    av = value(a)
    return _node(av * av, (a, lambda g: 2.0 * g * av))


def exp(a):
    out = np.exp(value(a))
    return _node(out, (a, lambda g: g * out))


def log(a):
    av = value(a)
    return _node(np.log(av), (a, lambda g: g / av))


def sin(a):
    av = value(a)
    return _node(np.sin(av), (a, lambda g: g * np.cos(av)))


def cos(a):
    av = value(a)
    return _node(np.cos(av), (a, lambda g: -g * np.sin(av)))


def sqrt(a):
    out = np.sqrt(value(a))
    return _node(out, (a, lambda g: g * 0.5 / out))


def abs(a):  # noqa: A001
    av = value(a)
    # right-hand derivative at the kink
    return _node(np.abs(av), (a, lambda g: g * np.where(av >= 0.0, 1.0, -1.0)))


def sigmoid(a):
    av = value(a)
    out = np.where(av >= 0, 1.0 / (1.0 + np.exp(-np.abs(av))),
                   np.exp(-np.abs(av)) / (1.0 + np.exp(-np.abs(av))))
    return _node(out, (a, lambda g: g * out * (1.0 - out)))


def elu(a):
    av = value(a)
    neg_part = np.expm1(np.minimum(av, 0.0))
    out = np.where(av >= 0.0, av, neg_part)
    return _node(out, (a, lambda g: g * np.where(av >= 0.0, 1.0, neg_part + 1.0)))


def relu(a):
    av = value(a)
    # subgradient 0 at the kink keeps "J == 0 means feasible" stable
    return _node(np.maximum(av, 0.0), (a, lambda g: g * (av > 0.0)))


def where(cond, a, b):
    cond = np.asarray(value(cond), dtype=bool)
    av, bv = value(a), value(b)
    return _node(np.where(cond, av, bv),
                 (a, lambda g: _unbroadcast(np.where(cond, g, 0.0), _shape(a))),
                 (b, lambda g: _unbroadcast(np.where(cond, 0.0, g), _shape(b))))


def clip(a, lo, hi):
    av = value(a)
    inside = (av >= lo) & (av <= hi)
    return _node(np.clip(av, lo, hi), (a, lambda g: g * inside))


# ---------------------------------------------------------------------------
# reductions and shape manipulation

def sum(a, axis=None, keepdims=False):  # noqa: A001
    av = value(a)
    shape = np.shape(av)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return _node(np.sum(av, axis=axis, keepdims=keepdims), (a, vjp))


def mean(a, axis=None, keepdims=False):
    av = value(a)
    count = np.size(av) if axis is None else np.prod([np.shape(av)[i] for i in np.atleast_1d(axis)])
    return sum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def dot(a, b):
    """Inner product over the last axis."""
    return sum(mul(a, b), axis=-1)


def matmul(a, b):
    av, bv = value(a), value(b)

    def vjp_a(g):
        if np.ndim(bv) == 1:
            ga = g[..., None] * bv
        else:
            ga = g @ np.swapaxes(bv, -1, -2) if np.ndim(av) > 1 else \
                np.sum(g[..., None, :] * bv, axis=-1)
        return _unbroadcast(ga, np.shape(av))

    def vjp_b(g):
        if np.ndim(av) == 1:
            gb = av[:, None] * g[..., None, :]
        elif np.ndim(bv) == 1:
            gb = np.sum(av * g[..., None], axis=-2)
        else:
            gb = np.swapaxes(av, -1, -2) @ g
        return _unbroadcast(gb, np.shape(bv))

    return _node(av @ bv, (a, vjp_a), (b, vjp_b))


def matvec(m, v):
    return matmul(m, v)


def reshape(a, shape):
    av = value(a)
    old = np.shape(av)
    return _node(np.reshape(av, shape), (a, lambda g: np.reshape(g, old)))


def swapaxes(a, i, j):
    return _node(np.swapaxes(value(a), i, j), (a, lambda g: np.swapaxes(g, i, j)))


def moveaxis(a, src, dst):
    return _node(np.moveaxis(value(a), src, dst), (a, lambda g: np.moveaxis(g, dst, src)))


def broadcast_to(a, shape):
    av = value(a)
    return _node(np.broadcast_to(av, shape).copy(),
                 (a, lambda g: _unbroadcast(g, np.shape(av))))


def getitem(a, idx):
    av = value(a)

    def vjp(g):
        out = np.zeros_like(av)
        np.add.at(out, idx, g)
        return out

    return _node(av[idx], (a, vjp))


def stack(xs, axis=0):
    vals = [value(x) for x in xs]
    out = np.stack(vals, axis=axis)
    pairs = [(x, (lambda k: lambda g: np.take(g, k, axis=axis))(k)) for k, x in enumerate(xs)]
    return _node(out, *pairs)


def concatenate(xs, axis=0):
    vals = [value(x) for x in xs]
    bounds = np.cumsum([0] + [np.shape(v)[axis] for v in vals])
    out = np.concatenate(vals, axis=axis)

    def piece(k):
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(bounds[k], bounds[k + 1])
        return lambda g: g[tuple(sl)]

    return _node(out, *[(x, piece(k)) for k, x in enumerate(xs)])


# ---------------------------------------------------------------------------
# fused, numerically stable reductions

def logsumexp(a, axis=-1):
    av = value(a)
    m = np.max(av, axis=axis, keepdims=True)
    e = np.exp(av - m)
    s = np.sum(e, axis=axis, keepdims=True)
    out = np.squeeze(m + np.log(s), axis=axis)
    return _node(out, (a, lambda g: np.expand_dims(g, axis) * e / s))


def softmax(a, beta: float, axis=-1):
    """Boltzmann-weighted mean ``sum(a * w)`` with ``w = softmax(beta * a)``.

    Tends to ``max(a)`` as ``beta`` grows (``min`` for negative ``beta``) and
    equals ``a`` exactly when all entries agree.
    """
    av = value(a)
    z = beta * av
    z = z - np.max(z, axis=axis, keepdims=True)
    w = np.exp(z)
    w /= np.sum(w, axis=axis, keepdims=True)
    out = np.sum(w * av, axis=axis)

    def vjp(g):
        g = np.expand_dims(g, axis)
        return g * w * (1.0 + beta * (av - np.expand_dims(out, axis)))

    return _node(out, (a, vjp))


def softmin(a, beta: float, axis=-1):
    return softmax(a, -beta, axis=axis)


# ---------------------------------------------------------------------------
# algebraic connectivity

def _degenerate_average(vecs, w, k, tol):
    """Average of v v^T over the eigenspace containing eigenvalue ``k``."""
    group = np.abs(w - w[k]) <= tol
    sub = vecs[:, group]
    return sub @ sub.T / sub.shape[1]


def grad_lambda2(laplacian, tol: float = 1e-8) -> np.ndarray:
    """Derivative of the second-smallest eigenvalue with respect to each entry.

    Returns ``v2 v2^T`` for the unit Fiedler vector. Raises
    :class:`DegenerateEigenvalue` when the second eigenvalue is not simple;
    :func:`lambda2_subgradient` handles that case.
    """
    L = np.asarray(laplacian, dtype=float)
    if not np.allclose(L, L.T, atol=1e-12):
        raise ValueError("laplacian must be symmetric")
    w, vecs = np.linalg.eigh(L)
    if w[1] - w[0] <= tol or (len(w) > 2 and w[2] - w[1] <= tol):
        raise DegenerateEigenvalue(f"second eigenvalue {w[1]:.6g} is not simple")
    v = vecs[:, 1]
    return np.outer(v, v)


def lambda2_subgradient(laplacian, tol: float = 1e-8) -> np.ndarray:
    L = np.asarray(laplacian, dtype=float)
    w, vecs = np.linalg.eigh(L)
    return _degenerate_average(vecs, w, 1, tol)


def lambda2(L, tol: float = 1e-8):
    """Second-smallest eigenvalue of (a batch of) symmetric matrices."""
    Lv = value(L)
    w, vecs = np.linalg.eigh(np.asarray(Lv, dtype=float))
    out = w[..., 1]
    if np.asarray(Lv).dtype == np.longdouble:
        # eigh is double only; a Rayleigh quotient keeps the extra precision
        v = vecs[..., :, 1].astype(np.longdouble)
        out = np.einsum("...i,...ij,...j->...", v, Lv, v) / np.einsum("...i,...i->...", v, v)

    def vjp(g):
        v = vecs[..., :, 1]
        dL = v[..., :, None] * v[..., None, :]
        # degenerate second eigenvalue: average over the eigenspace
        near = (np.abs(w[..., 2:3] - w[..., 1:2]) <= tol) | (np.abs(w[..., 1:2] - w[..., 0:1]) <= tol) \
            if w.shape[-1] > 2 else np.abs(w[..., 1:2] - w[..., 0:1]) <= tol
        near = near[..., 0]
        if np.any(near):
            for idx in np.ndindex(near.shape):
                if near[idx]:
                    dL[idx] = _degenerate_average(vecs[idx], w[idx], 1, tol)
        return np.asarray(g)[..., None, None] * dL

    return _node(out, (L, vjp))


# ---------------------------------------------------------------------------
# reverse sweep and checking

def backward(tape: Tape, output, inputs):
    """Gradients of the scalar ``output`` with respect to each of ``inputs``.

    Inputs with no path to the output get an exact zero gradient.
    """
    if not isinstance(output, Var):
        return [np.zeros_like(value(x), dtype=float) for x in inputs]
    if output.value.size != 1:
        raise NonScalarOutput(f"output has shape {output.shape}")
    if output.tape is not tape:
        raise ValueError("output was not recorded on this tape")
    grads: list = [None] * (output.index + 1)
    grads[output.index] = np.ones_like(output.value)
    for node in reversed(tape.nodes[: output.index + 1]):
        g = grads[node.index]
        if g is None:
            continue
        for parent, vjp in node.parents:
            contrib = vjp(g)
            prev = grads[parent.index]
            grads[parent.index] = contrib if prev is None else prev + contrib
    result = []
    for x in inputs:
        g = grads[x.index] if x.index < len(grads) else None
        g = np.zeros_like(x.value) if g is None else np.asarray(g, dtype=float).reshape(x.shape)
        if np.any(np.isnan(g)):
            raise NaNGradient("NaN in gradient; a non-differentiable point was hit")
        result.append(g)
    return result


def value_and_grad(f, x):
    """Evaluate scalar ``f`` at ``x`` and return ``(f(x), df/dx)``."""
    tape = Tape()
    xv = tape.var(x)
    out = f(xv)
    (g,) = backward(tape, out, [xv])
    return float(np.asarray(value(out)).reshape(())), g


def grad(f, x):
    return value_and_grad(f, x)[1]


def central_differences(f, x, h: float, vectorized: bool = False, extended: bool = True) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x``.

    With ``extended`` the perturbed points and function values are carried in
    ``np.longdouble``, which cuts rounding error enough to use small ``h``
    (``f`` must preserve the input dtype for this to help).
    """
    dtype = np.longdouble if extended else float
    x = np.asarray(x, dtype=dtype)
    d = x.shape[0]
    steps = np.eye(d, dtype=dtype) * dtype(h)
    pts = np.concatenate([x + steps, x - steps])
    if vectorized:
        vals = np.asarray(f(pts), dtype=dtype).reshape(-1)
    else:
        vals = np.array([np.asarray(f(p), dtype=dtype).reshape(()) for p in pts], dtype=dtype)
    return ((vals[:d] - vals[d:]) / (2 * dtype(h))).astype(float)


def check_gradient(f, x, h: float = 1e-5, vectorized: bool = False, extended: bool = True) -> float:
    """Max relative error between the AD gradient and central differences,
    ``max_i |ad_i - cd_i| / (|cd_i| + 1e-8)``.

    ``f`` must be written with this module's primitives. With
    ``vectorized=True`` it is also called once on a ``(2d, d)`` batch of
    perturbed points and must return ``2d`` values.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError("h must lie in [1e-7, 1e-3]")
    x = np.asarray(x, dtype=float)
    _, g_ad = value_and_grad(f, x)
    g_fd = central_differences(f, x, h, vectorized=vectorized, extended=extended)
    return float(np.max(np.abs(g_ad - g_fd) / (np.abs(g_fd) + 1e-8)))
