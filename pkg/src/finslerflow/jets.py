"""Truncated multivariate Taylor (jet) arithmetic.

A :class:`Jet` stores the partial derivatives of a function at a point (not the
Taylor coefficients), so ``extract`` is a lookup and differentiating a jet is
an index shift. Coefficients carry an optional trailing batch shape, which lets
one jet represent the same quantity at many sample points or grid nodes.

Variables may be split into groups, each with its own truncation order. A
single group of order ``k`` is the ordinary total-degree truncation. Two groups
give a nested jet, e.g. order 4 in ``(x, y)`` times order 2 in an auxiliary
fiber displacement; this is how second fiber derivatives of curvature
quantities are taken without going beyond order 4 in the base variables.
"""
from __future__ import annotations

import itertools
import math
from functools import cached_property, lru_cache
from typing import Sequence, Tuple

import numpy as np

MultiIndex = Tuple[int, ...]

MAX_GROUP_ORDER = 4


class JetError(ValueError):
    pass


class JetSpace:
    """Index set of a jet: exponents bounded per variable group."""

    def __init__(self, groups: Tuple[Tuple[int, int], ...]):
        for nv, k in groups:
            if nv < 1 or k < 0:
                raise JetError(f"bad jet group {(nv, k)}")
            if k > MAX_GROUP_ORDER:
                raise JetError(f"jet order {k} exceeds {MAX_GROUP_ORDER}")
        self.groups = tuple((int(nv), int(k)) for nv, k in groups)
        self.num_vars = sum(nv for nv, _ in self.groups)
        # nilpotency degree of the maximal ideal
        self.max_degree = sum(k for _, k in self.groups)
        self._group_of = np.repeat(np.arange(len(self.groups)), [nv for nv, _ in self.groups])

    def __repr__(self):
        return f"JetSpace({self.groups})"

    def __eq__(self, other):
        return isinstance(other, JetSpace) and self.groups == other.groups

    def __hash__(self):
        return hash(self.groups)

    @property
    def order(self) -> int:
        """Order of the first (base) group."""
        return self.groups[0][1]

    def contains(self, idx: MultiIndex) -> bool:
        if len(idx) != self.num_vars or any(e < 0 for e in idx):
            return False
        start = 0
        for nv, k in self.groups:
            if sum(idx[start:start + nv]) > k:
                return False
            start += nv
        return True

    @cached_property
    def indices(self) -> list:
        per_group = []
        for nv, k in self.groups:
            per_group.append([a for a in itertools.product(range(k + 1), repeat=nv) if sum(a) <= k])
        out = [sum(parts, ()) for parts in itertools.product(*per_group)]
        out.sort(key=lambda a: (sum(a), tuple(-e for e in a)))
        return out

    @cached_property
    def position(self) -> dict:
        return {a: i for i, a in enumerate(self.indices)}

    @property
    def size(self) -> int:
        return len(self.indices)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([sum(a) for a in self.indices])

    @cached_property
    def _mul_table(self):
        ia, ib, w, starts = [], [], [], []
        pos = self.position
        for ic, gamma in enumerate(self.indices):
            starts.append(len(ia))
            for alpha in itertools.product(*(range(g + 1) for g in gamma)):
                beta = tuple(g - a for g, a in zip(gamma, alpha))
                ia.append(pos[alpha])
                ib.append(pos[beta])
                w.append(math.prod(math.comb(g, a) for g, a in zip(gamma, alpha)))
        return (np.array(ia), np.array(ib), np.array(w, dtype=float), np.array(starts))

    def shifted(self, var: int) -> "JetSpace":
        """Space of the derivative along ``var``."""
        g = int(self._group_of[var])
        nv, k = self.groups[g]
        if k == 0:
            raise JetError(f"cannot differentiate an order-0 jet along variable {var}")
        groups = list(self.groups)
        groups[g] = (nv, k - 1)
        return space_of(tuple(groups))

    def with_order(self, order: int) -> "JetSpace":
        groups = list(self.groups)
        groups[0] = (groups[0][0], order)
        return space_of(tuple(groups))

    def meet(self, other: "JetSpace") -> "JetSpace":
        if [nv for nv, _ in self.groups] != [nv for nv, _ in other.groups]:
            raise JetError(f"incompatible jet spaces {self} and {other}")
        if self == other:
            return self
        return space_of(tuple((nv, min(k1, k2)) for (nv, k1), (_, k2) in zip(self.groups, other.groups)))

    @lru_cache(maxsize=None)
    def restriction_map(self, target: "JetSpace") -> np.ndarray:
        pos = self.position
        return np.array([pos[a] for a in target.indices])

    @lru_cache(maxsize=None)
    def shift_map(self, var: int) -> np.ndarray:
        tgt = self.shifted(var)
        pos = self.position
        e = np.zeros(self.num_vars, dtype=int)
        e[var] = 1
        return np.array([pos[tuple(np.add(a, e))] for a in tgt.indices])


@lru_cache(maxsize=None)
def space_of(groups: Tuple[Tuple[int, int], ...]) -> JetSpace:
    return JetSpace(groups)


def jet_space(num_vars: int, order: int) -> JetSpace:
    return space_of(((num_vars, order),))


class Jet:
    """Truncated jet; ``c`` has shape ``(space.size, *batch)``."""

    __slots__ = ("space", "c")
    __array_priority__ = 100

    def __init__(self, space: JetSpace, c):
        c = np.asarray(c, dtype=float)
        if c.shape[:1] != (space.size,):
            raise JetError(f"coefficient array {c.shape} does not match {space}")
        self.space = space
        self.c = c

    # construction ---------------------------------------------------------
    @classmethod
    def const(cls, space: JetSpace, value) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros((space.size,) + value.shape)
        c[0] = value
        return cls(space, c)

    @classmethod
    def seed(cls, space: JetSpace, var: int, value) -> "Jet":
        if not 0 <= var < space.num_vars:
            raise JetError(f"variable index {var} out of range for {space.num_vars} variables")
        jet = cls.const(space, value)
        if space.max_degree >= 1:
            idx = [0] * space.num_vars
            idx[var] = 1
            pos = space.position.get(tuple(idx))
            if pos is not None:
                jet.c[pos] = 1.0
        return jet

    # basic accessors --------------------------------------------------------
    @property
    def batch_shape(self):
        return self.c.shape[1:]

    @property
    def order(self) -> int:
        return self.space.order

    @property
    def num_vars(self) -> int:
        return self.space.num_vars

    @property
    def value(self) -> np.ndarray:
        return self.c[0]

    def __getitem__(self, idx: MultiIndex):
        return self.extract(idx)

    def extract(self, idx: MultiIndex):
        idx = tuple(int(e) for e in idx)
        if len(idx) != self.num_vars or any(e < 0 for e in idx):
            raise JetError(f"multi-index {idx} invalid for {self.num_vars} variables")
        pos = self.space.position.get(idx)
        if pos is None:
            raise JetError(f"multi-index {idx} exceeds the truncation of {self.space}")
        return self.c[pos]

    def __repr__(self):
        return f"Jet({self.space}, batch={self.batch_shape})"

    # structural operations ------------------------------------------------
    def restrict(self, space: JetSpace) -> "Jet":
        if space == self.space:
            return self
        return Jet(space, self.c[self.space.restriction_map(space)])

    def d(self, var: int) -> "Jet":
        """Jet of the partial derivative along ``var`` (one order lower)."""
        return Jet(self.space.shifted(var), self.c[self.space.shift_map(var)])

    def truncate(self, order: int) -> "Jet":
        return self.restrict(self.space.with_order(order))

    def _coerce(self, other):
        if isinstance(other, Jet):
            sp = self.space.meet(other.space)
            return self.restrict(sp), other.restrict(sp)
        return self, None

    # arithmetic -----------------------------------------------------------
    def __neg__(self):
        return Jet(self.space, -self.c)

    def __add__(self, other):
        a, b = self._coerce(other)
        if b is not None:
            return Jet(a.space, a.c + b.c)
        c = self.c.copy()
        c[0] = c[0] + other
        return Jet(self.space, c)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        a, b = self._coerce(other)
        if b is not None:
            return _mul(a, b)
        other = np.asarray(other, dtype=float)
        return Jet(self.space, self.c * other[None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.recip()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.recip() * other

    def __pow__(self, p):
        if isinstance(p, int) and p >= 0:
            out = Jet.const(self.space, np.ones(self.batch_shape))
            for _ in range(p):
                out = out * self
            return out
        return self.pow(p)

    # elementary functions -------------------------------------------------
    def sqrt(self) -> "Jet":
        return self.pow(0.5)

    def recip(self) -> "Jet":
        return self.pow(-1.0)

    def pow(self, p: float) -> "Jet":
        v = self.value
        K = self.space.max_degree
        derivs, coef = [], 1.0
        for k in range(K + 1):
            derivs.append(coef * v ** (p - k))
            coef *= (p - k)
        return jet_compose(derivs, self)

    def exp(self) -> "Jet":
        e = np.exp(self.value)
        return jet_compose([e] * (self.space.max_degree + 1), self)

    def log(self) -> "Jet":
        v = self.value
        derivs = [np.log(v)] + [(-1.0) ** (k - 1) * math.factorial(k - 1) * v ** (-k)
                                for k in range(1, self.space.max_degree + 1)]
        return jet_compose(derivs, self)

    def sin(self) -> "Jet":
        s, c = np.sin(self.value), np.cos(self.value)
        cyc = [s, c, -s, -c]
        return jet_compose([cyc[k % 4] for k in range(self.space.max_degree + 1)], self)

    def cos(self) -> "Jet":
        s, c = np.sin(self.value), np.cos(self.value)
        cyc = [c, -s, -c, s]
        return jet_compose([cyc[k % 4] for k in range(self.space.max_degree + 1)], self)

    def arctan(self) -> "Jet":
        v = self.value
        K = self.space.max_degree
        derivs = [np.arctan(v)]
        if K >= 1:
            # derivatives of 1/(1+v^2) through a univariate jet
            sp = jet_space(1, min(K - 1, MAX_GROUP_ORDER)) if K - 1 <= MAX_GROUP_ORDER else None
            if sp is None:
                derivs += _arctan_high(v, K)
            else:
                w = Jet.seed(sp, 0, v)
                q = (1.0 + w * w).recip()
                derivs += [q.c[k] for k in range(sp.size)]
        return jet_compose(derivs, self)


def _arctan_high(v, K):
    # d^k/dv^k arctan(v) = (k-1)! cos^k(a) sin(k(a + pi/2)) with a = arctan(v)
    a = np.arctan(v)
    return [math.factorial(k - 1) * np.cos(a) ** k * np.sin(k * (a + np.pi / 2)) for k in range(1, K + 1)]


def _mul(a: Jet, b: Jet) -> Jet:
    ia, ib, w, starts = a.space._mul_table
    prod = a.c[ia] * b.c[ib]
    prod *= w.reshape((-1,) + (1,) * (prod.ndim - 1))
    return Jet(a.space, np.add.reduceat(prod, starts, axis=0))


# functional API -----------------------------------------------------------


def jet_seed(var_index: int, value, num_vars: int, order: int) -> Jet:
    """Jet of the coordinate function ``v[var_index]`` at ``value``."""
    if not 0 <= var_index < num_vars:
        raise JetError(f"variable index {var_index} out of range for {num_vars} variables")
    return Jet.seed(jet_space(num_vars, order), var_index, value)


def jet_const(value, num_vars: int, order: int) -> Jet:
    return Jet.const(jet_space(num_vars, order), value)


def jet_mul(a: Jet, b: Jet) -> Jet:
    """Leibniz product; both operands must live in the same jet space."""
    if a.space != b.space:
        raise JetError(f"jet_mul operands differ: {a.space} vs {b.space}")
    return _mul(a, b)


def jet_compose(outer_derivs: Sequence, a: Jet) -> Jet:
    """Jet of ``f(a)`` given ``f, f', f'', ...`` evaluated at ``a.value``.

    Needs ``a.space.max_degree + 1`` derivatives; extra entries are ignored.
    """
    K = a.space.max_degree
    if len(outer_derivs) < K + 1:
        raise JetError(f"need {K + 1} outer derivatives, got {len(outer_derivs)}")
    h = Jet(a.space, a.c.copy())
    h.c[0] = 0.0
    out = Jet.const(a.space, np.asarray(outer_derivs[K], dtype=float) / math.factorial(K) + np.zeros(a.batch_shape))
    for k in range(K - 1, -1, -1):
        out = out * h + np.asarray(outer_derivs[k], dtype=float) / math.factorial(k)
    return out


def jet_extract(a: Jet, idx: MultiIndex):
    return a.extract(idx)


def seeds(space: JetSpace, values: Sequence, offset: int = 0) -> list:
    """Coordinate jets for consecutive variables starting at ``offset``."""
    return [Jet.seed(space, offset + i, v) for i, v in enumerate(values)]


# elementwise helpers usable on jets and plain arrays alike -----------------


def sin(v):
    return v.sin() if isinstance(v, Jet) else np.sin(v)


def cos(v):
    return v.cos() if isinstance(v, Jet) else np.cos(v)


def exp(v):
    return v.exp() if isinstance(v, Jet) else np.exp(v)


def sqrt(v):
    return v.sqrt() if isinstance(v, Jet) else np.sqrt(v)


def arctan(v):
    return v.arctan() if isinstance(v, Jet) else np.arctan(v)


# tensor-valued jets -----------------------------------------------------------
# A tensor jet is a Jet whose coefficient array is (ncoef, *tensor_axes, *batch).
# The helpers below take explicit index strings for the tensor axes; batch axes
# ride along through an ellipsis.


def jstack(items, space: JetSpace | None = None) -> Jet:
    """Stack a (nested) list of jets/constants into one tensor jet."""
    flat, shape = [], []

    def walk(obj, depth):
        if isinstance(obj, (list, tuple)):
            if len(shape) <= depth:
                shape.append(len(obj))
            for o in obj:
                walk(o, depth + 1)
        else:
            flat.append(obj)

    walk(items, 0)
    jets = [j for j in flat if isinstance(j, Jet)]
    if space is None:
        if not jets:
            raise JetError("jstack needs a space when no entry is a jet")
        space = jets[0].space
    for j in jets:
        space = space.meet(j.space)
    batch = np.broadcast_shapes(*[j.batch_shape for j in jets]) if jets else ()
    cs = []
    for o in flat:
        if isinstance(o, Jet):
            c = o.restrict(space).c
        else:
            c = Jet.const(space, np.asarray(o, dtype=float)).c
        # batch axes align from the right; keep the coefficient axis out of the way
        c = c.reshape(c.shape[:1] + (1,) * max(0, len(batch) - (c.ndim - 1)) + c.shape[1:])
        cs.append(np.broadcast_to(c, (space.size,) + np.broadcast_shapes(c.shape[1:], batch)))
    c = np.stack(cs, axis=1).reshape((space.size, *shape) + cs[0].shape[1:])
    return Jet(space, c)


def jpart(t: Jet, *index) -> Jet:
    """Component of a tensor jet."""
    return Jet(t.space, t.c[(slice(None),) + index])


def jgrad(t: Jet, variables: Sequence[int]) -> Jet:
    """Stack partials along ``variables`` as a new leading tensor axis."""
    parts = [t.d(v) for v in variables]
    return Jet(parts[0].space, np.stack([p.c for p in parts], axis=1))


def jperm(t: Jet, perm: Sequence[int]) -> Jet:
    """Permute the leading ``len(perm)`` tensor axes."""
    axes = [0] + [1 + p for p in perm] + list(range(1 + len(perm), t.c.ndim))
    return Jet(t.space, t.c.transpose(axes))


def jeinsum(spec: str, a, b) -> Jet:
    """Leibniz-rule tensor contraction ``einsum(spec, a, b)`` of two jets.

    Either operand may be a plain array (a jet-constant), whose batch axes
    must broadcast against the other operand's.
    """
    ins, out = spec.split("->")
    sa, sb = ins.split(",")
    if not isinstance(a, Jet) or not isinstance(b, Jet):
        if isinstance(a, Jet):
            c = np.einsum(f"z{sa}...,{sb}...->z{out}...", a.c, np.asarray(b, dtype=float))
            return Jet(a.space, c)
        c = np.einsum(f"{sa}...,z{sb}...->z{out}...", np.asarray(a, dtype=float), b.c)
        return Jet(b.space, c)
    space = a.space.meet(b.space)
    a, b = a.restrict(space), b.restrict(space)
    ia, ib, w, starts = space._mul_table
    ca = a.c[ia] * w.reshape((-1,) + (1,) * (a.c.ndim - 1))
    prod = np.einsum(f"z{sa}...,z{sb}...->z{out}...", ca, b.c[ib])
    return Jet(space, np.add.reduceat(prod, starts, axis=0))


def jinv(m: Jet) -> Jet:
    """Inverse of a matrix-valued jet (matrix axes leading).

    Uses the terminating Neumann series around the value, which is exact in
    the truncated algebra.
    """
    m0 = np.moveaxis(m.c[0], (0, 1), (-2, -1))
    inv0 = np.moveaxis(np.linalg.inv(m0), (-2, -1), (0, 1))
    h = Jet(m.space, m.c.copy())
    h.c[0] = 0.0
    step = -jeinsum("ij,jk->ik", inv0, h)
    out = Jet.const(m.space, inv0)
    term = out
    for _ in range(m.space.max_degree):
        term = jeinsum("ij,jk->ik", step, term)
        out = out + term
    return out
