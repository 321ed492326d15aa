"""Truncated second-order Taylor jets, propagated forward through expressions.

A :class:`Jet2` carries a value channel, one first-derivative channel per
active input coordinate, and one pure second-derivative channel per coordinate
marked second-order.  Mixed partials are not tracked; the governing equations
handled here never need them.  Channels may be numbers, numpy arrays (batched
over evaluation points), or tape variables, so the same jet arithmetic serves
both plain evaluation and gradient recording.
"""

from __future__ import annotations

import numpy as np

from . import tape as tp
from .errors import DomainError


class JetCoords:
    """Descriptor of which input coordinates a family of jets tracks.

    ``active`` holds the input-vector indices carrying first derivatives, in
    ascending order; ``second`` is the subset that also carries pure second
    derivatives.  ``names`` optionally maps an index to a label such as
    ``"t"`` so derivative channels can be fetched by name.
    """

    __slots__ = ("active", "second", "names", "_pos", "_second_pos")

    def __init__(self, active, second=(), names=None):
        self.active = tuple(sorted(int(i) for i in active))
        if len(set(self.active)) != len(self.active):
            raise DomainError("duplicate active coordinate")
        self.second = tuple(sorted(int(i) for i in second))
        if not set(self.second) <= set(self.active):
            raise DomainError(
                f"second-order coords {self.second} not a subset of "
                f"active coords {self.active}")
        self.names = dict(names) if names else {}
        self._pos = {c: i for i, c in enumerate(self.active)}
        # position of each second-order coord within the d1 channel list
        self._second_pos = tuple(self._pos[c] for c in self.second)

    def index(self, key):
        """Position of coordinate ``key`` (index or name) among d1 channels."""
        c = self._resolve(key)
        if c not in self._pos:
            raise DomainError(f"coordinate {key!r} is not active")
        return self._pos[c]

    def second_index(self, key):
        c = self._resolve(key)
        try:
            return self.second.index(c)
        except ValueError:
            raise DomainError(
                f"coordinate {key!r} has no second-order channel") from None

    def _resolve(self, key):
        if isinstance(key, str):
            for idx, name in self.names.items():
                if name == key:
                    return idx
            raise DomainError(f"unknown coordinate name {key!r}")
        return int(key)

    def __eq__(self, other):
        return (isinstance(other, JetCoords)
                and self.active == other.active
                and self.second == other.second)

    def __repr__(self):
        return f"JetCoords(active={self.active}, second={self.second})"


class Jet2:
    """Value with first and pure-second derivative channels."""

    __slots__ = ("coords", "value", "d1", "d2")

    __array_ufunc__ = None

    def __init__(self, coords, value, d1, d2):
        if len(d1) != len(coords.active) or len(d2) != len(coords.second):
            raise DomainError("channel count does not match coords")
        self.coords = coords
        self.value = value
        self.d1 = tuple(d1)
        self.d2 = tuple(d2)

    def d(self, key):
        """First derivative with respect to coordinate ``key``."""
        return self.d1[self.coords.index(key)]

    def dd(self, key):
        """Pure second derivative with respect to coordinate ``key``."""
        return self.d2[self.coords.second_index(key)]

    def __repr__(self):
        return f"Jet2(value={self.value!r}, d1={self.d1!r}, d2={self.d2!r})"

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


def lift(values, active, second=(), names=None):
    """Seed one jet per input coordinate.

    ``values[i]`` becomes a jet whose d1 channel for coordinate ``i`` is one
    and whose every other derivative channel is zero.  Constants (non-active
    coordinates) get all-zero derivative channels.
    """
    coords = JetCoords(active, second, names)
    if coords.active and coords.active[-1] >= len(values):
        raise DomainError(
            f"active coordinate {coords.active[-1]} out of range for "
            f"{len(values)} values")
    jets = []
    for i, v in enumerate(values):
        d1 = tuple(1.0 if c == i else 0.0 for c in coords.active)
        d2 = tuple(0.0 for _ in coords.second)
        jets.append(Jet2(coords, v, d1, d2))
    return jets


def constant(coords, value):
    """A jet with zero derivative channels."""
    return Jet2(coords, value,
                tuple(0.0 for _ in coords.active),
                tuple(0.0 for _ in coords.second))


def _coerce(a, b):
    if isinstance(a, Jet2) and isinstance(b, Jet2):
        if a.coords != b.coords:
            raise DomainError(f"jet coords mismatch: {a.coords} vs {b.coords}")
        return a, b
    if isinstance(a, Jet2):
        return a, constant(a.coords, b)
    return constant(b.coords, a), b


def add(a, b):
    a, b = _coerce(a, b)
    return Jet2(a.coords,
                tp.add(a.value, b.value),
                tuple(tp.add(x, y) for x, y in zip(a.d1, b.d1)),
                tuple(tp.add(x, y) for x, y in zip(a.d2, b.d2)))


def sub(a, b):
    a, b = _coerce(a, b)
    return Jet2(a.coords,
                tp.sub(a.value, b.value),
                tuple(tp.sub(x, y) for x, y in zip(a.d1, b.d1)),
                tuple(tp.sub(x, y) for x, y in zip(a.d2, b.d2)))


def neg(a):
    return Jet2(a.coords, tp.neg(a.value),
                tuple(tp.neg(x) for x in a.d1),
                tuple(tp.neg(x) for x in a.d2))


def mul(a, b):
    a, b = _coerce(a, b)
    c = a.coords
    value = tp.mul(a.value, b.value)
    d1 = tuple(tp.add(tp.mul(a.d1[i], b.value), tp.mul(a.value, b.d1[i]))
               for i in range(len(c.active)))
    d2 = []
    for s, p in enumerate(c._second_pos):
        # (ab)'' = a''b + 2 a'b' + a b'' along one coordinate
        term = tp.add(tp.mul(a.d2[s], b.value), tp.mul(a.value, b.d2[s]))
        cross = tp.mul(2.0, tp.mul(a.d1[p], b.d1[p]))
        d2.append(tp.add(term, cross))
    return Jet2(c, value, d1, tuple(d2))


def div(a, b):
    a, b = _coerce(a, b)
    c = a.coords
    q = tp.div(a.value, b.value)
    d1 = tuple(tp.div(tp.sub(a.d1[i], tp.mul(q, b.d1[i])), b.value)
               for i in range(len(c.active)))
    d2 = []
    for s, p in enumerate(c._second_pos):
        # q'' = (a'' - 2 q' b' - q b'') / b
        num = tp.sub(tp.sub(a.d2[s], tp.mul(2.0, tp.mul(d1[p], b.d1[p]))),
                     tp.mul(q, b.d2[s]))
        d2.append(tp.div(num, b.value))
    return Jet2(c, q, d1, tuple(d2))


def _unary(a, f0, f1, f2, opname):
    if not isinstance(a, Jet2):
        raise DomainError(f"{opname}: expected a Jet2")
    c = a.coords
    v = f0(a.value)
    fp = f1(a.value, v)
    d1 = tuple(tp.mul(fp, g) for g in a.d1)
    d2 = []
    if c.second:
        fpp = f2(a.value, v)
        for s, p in enumerate(c._second_pos):
            # f(u)'' = f'(u) u'' + f''(u) (u')^2
            g = a.d1[p]
            d2.append(tp.add(tp.mul(fp, a.d2[s]),
                             tp.mul(fpp, tp.mul(g, g))))
    return Jet2(c, v, d1, tuple(d2))


def tanh(a):
    return _unary(
        a, tp.tanh,
        lambda u, t: tp.sub(1.0, tp.mul(t, t)),
        lambda u, t: tp.mul(-2.0, tp.mul(t, tp.sub(1.0, tp.mul(t, t)))),
        "tanh")


def sin(a):
    return _unary(a, tp.sin,
                  lambda u, v: tp.cos(u),
                  lambda u, v: tp.neg(v), "sin")


def cos(a):
    return _unary(a, tp.cos,
                  lambda u, v: tp.neg(tp.sin(u)),
                  lambda u, v: tp.neg(v), "cos")


def exp(a):
    return _unary(a, tp.exp,
                  lambda u, v: v,
                  lambda u, v: v, "exp")


def log(a):
    return _unary(a, tp.log,
                  lambda u, v: tp.div(1.0, u),
                  lambda u, v: tp.div(-1.0, tp.mul(u, u)), "log")


def power(a, p):
    return _unary(a, lambda u: tp.power(u, p),
                  lambda u, v: tp.mul(p, tp.power(u, p - 1.0)),
                  lambda u, v: tp.mul(p * (p - 1.0), tp.power(u, p - 2.0)),
                  "power")


_ELEMENTARY = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "tanh": tanh,
    "sin": sin,
    "cos": cos,
    "exp": exp,
    "log": log,
    "power": power,
}


def jet_elementary(op, *operands):
    """Apply the elementary operation named ``op`` to jet operands."""
    try:
        fn = _ELEMENTARY[op]
    except KeyError:
        raise DomainError(f"unknown jet operation {op!r}") from None
    return fn(*operands)
