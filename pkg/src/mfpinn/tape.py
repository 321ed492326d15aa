"""Reverse-mode differentiation tape over numpy values.

Every elementary operation in this module accepts plain numbers, numpy arrays,
or :class:`Var` handles.  When at least one operand is a ``Var`` the result is
a new ``Var`` recorded on the tape together with the vector-Jacobian products
needed to push adjoints back to its parents; otherwise the plain numpy result
is returned.  Batching collocation points along the leading axis keeps the
recorded graph small (a few hundred nodes per loss evaluation) while the heavy
work stays inside BLAS calls.

Each operation checks its output for non-finite entries and aborts immediately
with :class:`~mfpinn.errors.EvaluationError`; gradients are checked the same
way after the backward sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EvaluationError, NumericalError


def _first_bad_index(data):
    bad = np.flatnonzero(~np.isfinite(np.asarray(data)))
    return int(bad[0]) if bad.size else None


def _check(op, data):
    # NaN poisons min and infinities land in min or max, so two reductions
    # decide finiteness without materializing an isfinite mask
    arr = np.asarray(data)
    if arr.size and not (np.isfinite(arr.min()) and np.isfinite(arr.max())):
        raise EvaluationError(op, _first_bad_index(data), shape=np.shape(data))
    return data


class Tape:
    """Ordered record of one evaluation; replayed in reverse for gradients."""

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes = []

    def leaf(self, data):
        """Register an independent variable holding ``data``."""
        return Var(self, np.asarray(data, dtype=float), ())

    def backward(self, result, wrt):
        """Adjoint of scalar ``result`` with respect to leaf ``wrt``.

        Nodes are visited in strict reverse recording order, so repeated
        backward sweeps over the same tape produce bitwise identical output.
        Returns zeros when ``result`` does not depend on ``wrt``.
        """
        if not isinstance(result, Var) or result._tape is not self:
            raise DomainError("backward: result is not a Var of this tape")
        if np.shape(result.data) != ():
            raise DomainError("backward: result must be scalar")
        adj = [None] * (result._idx + 1)
        adj[result._idx] = np.float64(1.0)
        for node in reversed(self.nodes[: result._idx + 1]):
            a = adj[node._idx]
            if a is None:
                continue
            for parent, vjp in node._parents:
                contrib = vjp(a)
                prev = adj[parent._idx]
                adj[parent._idx] = contrib if prev is None else prev + contrib
            if node is not wrt:
                adj[node._idx] = None
        out = adj[wrt._idx]
        if out is None:
            return np.zeros_like(wrt.data)
        return np.broadcast_to(out, np.shape(wrt.data)).astype(float, copy=False)


class Var:
    """Value recorded on a tape.  Supports arithmetic with plain operands."""

    __slots__ = ("_tape", "_idx", "data", "_parents")

    # keep numpy from hijacking ndarray <op> Var; dispatch lands on __r<op>__
    __array_ufunc__ = None

    def __init__(self, tape, data, parents):
        self._tape = tape
        self.data = data
        self._parents = parents
        self._idx = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return np.shape(self.data)

    def __repr__(self):
        return f"Var(idx={self._idx}, shape={self.shape})"

    def __float__(self):
        return float(self.data)

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)


def _data(x):
    return x.data if isinstance(x, Var) else x


def _tape_of(*ops):
    tape = None
    for o in ops:
        if isinstance(o, Var):
            if tape is None:
                tape = o._tape
            elif o._tape is not tape:
                raise DomainError("operands recorded on different tapes")
    return tape


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    g = np.asarray(g)
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _node(op, tape, out, parents):
    _check(op, out)
    return Var(tape, out, tuple(parents))


def _elementwise(op, out, operands, vjps):
    tape = _tape_of(*operands)
    if tape is None:
        return _check(op, out)
    parents = [
        (o, vjp) for o, vjp in zip(operands, vjps) if isinstance(o, Var)
    ]
    return _node(op, tape, out, parents)


def add(a, b):
    av, bv = _data(a), _data(b)
    out = np.add(av, bv)
    sa, sb = np.shape(av), np.shape(bv)
    return _elementwise(
        "add", out, (a, b),
        (lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(g, sb)),
    )


def sub(a, b):
    av, bv = _data(a), _data(b)
    out = np.subtract(av, bv)
    sa, sb = np.shape(av), np.shape(bv)
    return _elementwise(
        "sub", out, (a, b),
        (lambda g: _unbroadcast(g, sa), lambda g: _unbroadcast(-g, sb)),
    )


def mul(a, b):
    av, bv = _data(a), _data(b)
    out = np.multiply(av, bv)
    sa, sb = np.shape(av), np.shape(bv)
    return _elementwise(
        "mul", out, (a, b),
        (lambda g: _unbroadcast(g * bv, sa), lambda g: _unbroadcast(g * av, sb)),
    )


def div(a, b):
    av, bv = _data(a), _data(b)
    if np.any(np.equal(bv, 0.0)):
        idx = _first_bad_index(np.where(np.equal(bv, 0.0), np.inf, 0.0))
        raise EvaluationError("div", idx, "division by zero",
                              shape=np.shape(bv))
    out = np.divide(av, bv)
    sa, sb = np.shape(av), np.shape(bv)
    return _elementwise(
        "div", out, (a, b),
        (lambda g: _unbroadcast(g / bv, sa),
         lambda g: _unbroadcast(-g * out / bv, sb)),
    )


def neg(a):
    out = np.negative(_data(a))
    return _elementwise("neg", out, (a,), (lambda g: -g,))


def power(a, p):
    """Elementwise ``a ** p`` for a fixed real exponent ``p``."""
    if isinstance(p, Var):
        raise DomainError("power: exponent must be a constant")
    av = _data(a)
    out = np.power(av, p)
    return _elementwise("power", out, (a,),
                        (lambda g: g * p * np.power(av, p - 1.0),))


def tanh(a):
    t = np.tanh(_data(a))
    return _elementwise("tanh", t, (a,), (lambda g: g * (1.0 - t * t),))


def sin(a):
    av = _data(a)
    out = np.sin(av)
    return _elementwise("sin", out, (a,), (lambda g: g * np.cos(av),))


def cos(a):
    av = _data(a)
    out = np.cos(av)
    return _elementwise("cos", out, (a,), (lambda g: -g * np.sin(av),))


def exp(a):
    with np.errstate(over="ignore"):  # overflow surfaces as EvaluationError
        out = np.exp(_data(a))
    return _elementwise("exp", out, (a,), (lambda g: g * out,))


def log(a):
    av = _data(a)
    if np.any(np.asarray(av) <= 0.0):
        idx = _first_bad_index(np.where(np.asarray(av) <= 0.0, np.inf, 0.0))
        raise EvaluationError("log", idx, "argument <= 0",
                              shape=np.shape(av))
    out = np.log(av)
    return _elementwise("log", out, (a,), (lambda g: g / av,))


def affine(a, w):
    """``a @ w[:-1] + w[-1]`` where the last row of ``w`` is the bias."""
    av, wv = _data(a), _data(w)
    if av.ndim != 2 or wv.ndim != 2 or wv.shape[0] != av.shape[1] + 1:
        raise DomainError(
            f"affine: incompatible shapes {av.shape} and {wv.shape}")
    out = av @ wv[:-1] + wv[-1]
    tape = _tape_of(a, w)
    if tape is None:
        return _check("affine", out)
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g: g @ wv[:-1].T))
    if isinstance(w, Var):
        parents.append((w, lambda g: np.vstack(
            [av.T @ g, g.sum(axis=0, keepdims=True)])))
    return _node("affine", tape, out, parents)


def linmap(a, w):
    """``a @ w[:-1]``: the affine map without its bias row.

    Derivative channels propagate through a layer with the same weights but
    no bias, so the bias row of ``w`` receives zero adjoint here.
    """
    av, wv = _data(a), _data(w)
    if av.ndim != 2 or wv.ndim != 2 or wv.shape[0] != av.shape[1] + 1:
        raise DomainError(
            f"linmap: incompatible shapes {av.shape} and {wv.shape}")
    out = av @ wv[:-1]
    tape = _tape_of(a, w)
    if tape is None:
        return _check("linmap", out)
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g: g @ wv[:-1].T))
    if isinstance(w, Var):
        parents.append((w, lambda g: np.vstack(
            [av.T @ g, np.zeros((1, g.shape[1]))])))
    return _node("linmap", tape, out, parents)


def colstack(cols):
    """Stack same-length column vectors (or scalars) into an (n, k) matrix."""
    datas = [np.asarray(_data(c), dtype=float) for c in cols]
    n = 1
    for d in datas:
        if d.ndim == 1:
            n = d.shape[0]
            break
        if d.ndim > 1:
            raise DomainError("colstack: columns must be scalars or vectors")
    datas = [np.broadcast_to(d, (n,)) for d in datas]
    out = np.column_stack(datas)
    tape = _tape_of(*cols)
    if tape is None:
        return _check("colstack", out)
    parents = []
    for i, c in enumerate(cols):
        if isinstance(c, Var):
            shape = np.shape(c.data)
            parents.append(
                (c, lambda g, i=i, shape=shape: _unbroadcast(g[:, i], shape)))
    return _node("colstack", tape, out, parents)


def col(m, j):
    """Column ``j`` of matrix ``m`` as a vector."""
    mv = _data(m)
    if mv.ndim != 2 or not 0 <= j < mv.shape[1]:
        raise DomainError(f"col: index {j} out of range for shape {mv.shape}")
    out = mv[:, j]
    shape = mv.shape

    def vjp(g):
        z = np.zeros(shape)
        z[:, j] = g
        return z

    return _elementwise("col", out, (m,), (vjp,))


def segment(v, offset, shape):
    """Contiguous slice of a flat vector reshaped to ``shape``."""
    vv = _data(v)
    size = int(np.prod(shape, dtype=int)) if shape else 1
    if vv.ndim != 1 or offset < 0 or offset + size > vv.shape[0]:
        raise DomainError(
            f"segment: [{offset}, {offset + size}) out of range for "
            f"length {vv.shape[0]}")
    out = vv[offset:offset + size].reshape(shape)
    n = vv.shape[0]

    def vjp(g):
        z = np.zeros(n)
        z[offset:offset + size] = np.asarray(g).ravel()
        return z

    return _elementwise("segment", out, (v,), (vjp,))


def asum(a):
    """Sum of all entries, as a scalar."""
    av = _data(a)
    out = np.sum(av)
    shape = np.shape(av)
    return _elementwise("sum", out, (a,),
                        (lambda g: np.broadcast_to(g, shape),))


def amean(a):
    """Mean over all entries, as a scalar."""
    av = _data(a)
    out = np.mean(av)
    shape = np.shape(av)
    size = max(int(np.prod(shape, dtype=int)), 1) if shape else 1
    return _elementwise("mean", out, (a,),
                        (lambda g: np.broadcast_to(g / size, shape),))


@dataclass
class GradRecord:
    """Loss value plus the flat gradient over every network parameter."""

    value: float
    grad: np.ndarray


class TapedParams:
    """Network parameters exposed as tape variables.

    Wraps a :class:`~mfpinn.network.ParamSet`; the whole flat vector is one
    leaf, and each layer matrix is a recorded ``segment`` view of it, so the
    backward sweep accumulates a single flat gradient (frozen entries
    included; optimizers mask them out).
    """

    def __init__(self, tape, params):
        self.tape = tape
        self.params = params
        self.root = tape.leaf(params.values)
        self._layers = {}

    @property
    def arch(self):
        return self.params.arch

    @property
    def n_layers(self):
        return self.params.n_layers

    def layer(self, j):
        if j not in self._layers:
            offset, shape = self.params.layout[j]
            self._layers[j] = segment(self.root, offset, shape)
        return self._layers[j]


def param_gradient(loss_eval, params):
    """Record ``loss_eval`` on a fresh tape and return loss plus gradient.

    ``loss_eval`` receives a :class:`TapedParams` view of ``params`` and must
    return a scalar (a ``Var`` if the loss touched the parameters).  The
    gradient covers the full flat vector; entries the loss never touched are
    exactly zero.
    """
    tape = Tape()
    view = TapedParams(tape, params)
    loss = loss_eval(view)
    if isinstance(loss, Var):
        value = float(loss.data)
        grad = tape.backward(loss, view.root)
    else:
        value = float(loss)
        grad = np.zeros_like(params.values)
    if not np.isfinite(value):
        raise NumericalError(f"loss is non-finite: {value}")
    if not np.all(np.isfinite(grad)):
        idx = _first_bad_index(grad)
        raise NumericalError(f"non-finite gradient entry at index {idx}",
                             index=idx)
    return GradRecord(value, grad)
