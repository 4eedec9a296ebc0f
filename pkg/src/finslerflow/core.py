"""Finsler structures, the fundamental and Cartan tensors, and the g-orthonormal frame.

A structure is anything that can evaluate ``F^2`` on coordinate lists ``x`` and
``y`` whose entries are either arrays or :class:`~finslerflow.jets.Jet` objects.
Jets of ``F^2`` in the ``2n`` variables ``(x, y)`` then come for free by
evaluating on seeded jets.

Points may be batched: ``x`` and ``y`` have shape ``(n, *batch)`` and every
tensor result has its index axes first and the batch axes last.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .jets import Jet, jgrad, jinv, jstack, space_of, sqrt


class StructureError(ValueError):
    """Invalid structure specification (e.g. a Randers drift that is too long)."""


class DegeneracyError(ArithmeticError):
    """The fundamental tensor is singular or not positive definite."""

    def __init__(self, message: str, eigenvalue: float = float("nan"), where=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue
        self.where = where


@dataclass(frozen=True)
class PointTM:
    """Point ``(x, y)`` of the slit tangent bundle; arrays of shape ``(n, *batch)``."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.shape != y.shape:
            raise ValueError(f"x and y shapes differ: {x.shape} vs {y.shape}")
        if np.any(np.sqrt(np.sum(y**2, axis=0)) < 1e-12):
            raise ValueError("fiber vector y must be nonzero")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def batch_shape(self):
        return self.x.shape[1:]


class FinslerStructure:
    """Base class: subclasses implement :meth:`f2` on array or jet coordinates."""

    n: int
    kind: str = "generic"
    # half-width of the coordinate box used for random sampling
    sample_radius: float = np.pi

    def f2(self, x: Sequence, y: Sequence):
        raise NotImplementedError

    def F(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.sqrt(self.f2(list(x), list(y)))

    def f2_jet(self, p: PointTM, order: int = 4, fiber_order: int = 0) -> Jet:
        """Jet of ``F^2`` in ``(x, y)`` at ``p``.

        With ``fiber_order > 0`` the jet also carries ``n`` auxiliary variables
        displacing ``y``, truncated at ``fiber_order`` independently of ``order``.
        """
        xs, ys = seed_point(p, order, fiber_order)
        return as_jet(self.f2(xs, ys), xs[0].space)

    def scaled(self, c: float) -> "FinslerStructure":
        return ScaledStructure(self, c)


def seed_point(p: PointTM, order: int, fiber_order: int = 0):
    n = p.n
    groups = ((2 * n, order),) if fiber_order == 0 else ((2 * n, order), (n, fiber_order))
    space = space_of(groups)
    xs = [Jet.seed(space, i, p.x[i]) for i in range(n)]
    ys = [Jet.seed(space, n + i, p.y[i]) for i in range(n)]
    if fiber_order:
        ys = [yi + Jet.seed(space, 2 * n + i, 0.0 * p.y[i]) for i, yi in enumerate(ys)]
    return xs, ys


def as_jet(v, space) -> Jet:
    return v if isinstance(v, Jet) else Jet.const(space, v)


def _quad(a, u, v):
    n = len(u)
    out = 0.0
    for i in range(n):
        for j in range(n):
            aij = a[i][j]
            if isinstance(aij, (int, float)) and aij == 0:
                continue
            out = out + aij * u[i] * v[j]
    return out


def _lin(b, y):
    out = 0.0
    for bi, yi in zip(b, y):
        if isinstance(bi, (int, float)) and bi == 0:
            continue
        out = out + bi * yi
    return out


class Riemannian(FinslerStructure):
    """``F^2 = a_ij(x) y^i y^j`` with ``a`` a callable returning an ``n x n`` nested list."""

    kind = "riemannian"

    def __init__(self, n: int, a: Callable, name: str = "riemannian", sample_radius: float = np.pi):
        self.n = n
        self.a = a
        self.name = name
        self.sample_radius = sample_radius

    def f2(self, x, y):
        return _quad(self.a(x), y, y)

    def __repr__(self):
        return f"Riemannian({self.name!r}, n={self.n})"


class Randers(FinslerStructure):
    """``F = sqrt(a_ij y^i y^j) + b_i y^i`` with ``|b|_a < 1`` checked by sampling."""

    kind = "randers"

    def __init__(self, n: int, a: Callable, b: Callable, name: str = "randers",
                 sample_radius: float = np.pi, validate: bool = True, seed: int = 0):
        self.n = n
        self.a = a
        self.b = b
        self.name = name
        self.sample_radius = sample_radius
        if validate:
            norm = self.max_drift_norm(seed=seed)
            if not norm < 1.0:
                raise StructureError(f"randers drift norm {norm:.6g} must be < 1")

    def f2(self, x, y):
        F = sqrt(_quad(self.a(x), y, y)) + _lin(self.b(x), y)
        return F * F

    def max_drift_norm(self, samples: int = 256, seed: int = 0) -> float:
        """Largest sampled ``|b|_a = sqrt(a^{ij} b_i b_j)``."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(-self.sample_radius, self.sample_radius, size=(self.n, samples))
        a = np.array([[np.broadcast_to(np.asarray(v, float), (samples,)) for v in row]
                      for row in self.a(list(x))])
        b = np.array([np.broadcast_to(np.asarray(v, float), (samples,)) for v in self.b(list(x))])
        ainv = np.linalg.inv(np.moveaxis(a, (0, 1), (-2, -1)))
        norm2 = np.einsum("si,sij,sj->s", b.T, ainv, b.T)
        return float(np.sqrt(norm2.max()))

    def __repr__(self):
        return f"Randers({self.name!r}, n={self.n})"


class ScaledStructure(FinslerStructure):
    """``c F`` for a constant ``c > 0``."""

    def __init__(self, base: FinslerStructure, c: float):
        if not c > 0:
            raise StructureError(f"scale factor must be positive, got {c}")
        self.base, self.c = base, float(c)
        self.n = base.n
        self.kind = base.kind
        self.sample_radius = base.sample_radius

    def f2(self, x, y):
        return self.base.f2(x, y) * (self.c * self.c)


class PulledBackStructure(FinslerStructure):
    """``F(A x + shift, A y)``: pullback along the natural lift of an affine map."""

    def __init__(self, base: FinslerStructure, matrix=None, shift=None):
        self.base = base
        self.n = base.n
        self.kind = base.kind
        self.matrix = np.eye(self.n) if matrix is None else np.asarray(matrix, dtype=float)
        self.shift = np.zeros(self.n) if shift is None else np.asarray(shift, dtype=float)
        self.sample_radius = base.sample_radius

    def forward(self, x, y):
        A = self.matrix
        X = [_lin(A[i], x) + self.shift[i] for i in range(self.n)]
        Y = [_lin(A[i], y) for i in range(self.n)]
        return X, Y

    def f2(self, x, y):
        return self.base.f2(*self.forward(x, y))


# fundamental tensor ---------------------------------------------------------


@dataclass
class MetricData:
    F: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    C: np.ndarray


def _y_vars(n):
    return list(range(n, 2 * n))


def metric_jets(E: Jet, n: int):
    """``(g, dE/dy)`` as tensor jets from a jet of ``F^2``."""
    dEy = jgrad(E, _y_vars(n))
    g = jgrad(dEy, _y_vars(n)) * 0.5
    return g, dEy


def check_metric(g: np.ndarray, tol: float = 0.0):
    """Raise :class:`DegeneracyError` unless ``g`` (matrix axes first) is positive definite."""
    gm = np.moveaxis(g, (0, 1), (-2, -1))
    if not np.all(np.isfinite(gm)):
        raise DegeneracyError("non-finite fundamental tensor")
    eig = np.linalg.eigvalsh(gm)
    lo = eig[..., 0]
    if np.any(lo <= tol):
        k = np.unravel_index(np.argmin(lo), lo.shape) if lo.ndim else ()
        raise DegeneracyError(f"fundamental tensor not positive definite (min eigenvalue {lo.min():.6g})",
                              float(lo.min()), k)
    return lo


def fundamental_tensor(F: FinslerStructure, p: PointTM) -> MetricData:
    """``g_ij = (1/2) d^2 F^2 / dy^i dy^j`` together with ``F``, ``g^ij`` and the Cartan tensor."""
    n = p.n
    E = F.f2_jet(p, order=3)
    g, _ = metric_jets(E, n)
    g0 = g.c[0]
    check_metric(g0)
    ginv = np.moveaxis(np.linalg.inv(np.moveaxis(g0, (0, 1), (-2, -1))), (-2, -1), (0, 1))
    C = jgrad(g, _y_vars(n)).c[0]  # axes (k, i, j)
    C = np.moveaxis(C, 0, 2)
    return MetricData(F=np.sqrt(E.value), g=g0, g_inv=ginv, C=C)


def cartan_tensor(F: FinslerStructure, p: PointTM) -> np.ndarray:
    """``C_ijk = d g_ij / dy^k`` (no factor one half)."""
    return fundamental_tensor(F, p).C


# validity -------------------------------------------------------------------


@dataclass
class ValidityReport:
    samples: int
    seed: int
    homogeneity: float
    euler: float
    reconstruction: float
    min_eigenvalue: float
    cartan_symmetry: float
    passed: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def sample_points(F: FinslerStructure, count: int, seed: int = 0, radius: float | None = None) -> PointTM:
    """Random points: ``x`` uniform in a box, ``y`` Gaussian."""
    rng = np.random.default_rng(seed)
    r = F.sample_radius if radius is None else radius
    x = rng.uniform(-r, r, size=(F.n, count))
    y = rng.normal(size=(F.n, count))
    y /= np.linalg.norm(y, axis=0)
    return PointTM(x, y)


def verify_structure(F: FinslerStructure, samples: int = 100, seed: int = 0, tol: float = 1e-8,
                     min_eig: float = 1e-6) -> ValidityReport:
    """Sampled structural checks; failures are reported, not raised."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    n = F.n
    p = sample_points(F, samples, seed)
    with np.errstate(all="ignore"):
        E = F.f2_jet(p, order=3)
        F1 = np.sqrt(E.value)
        F2 = F.F(p.x, 2 * p.y)
        homog = np.nanmax(np.abs(F2 - 2 * F1) / np.maximum(1, F1))
        g, dEy = metric_jets(E, n)
        dF = dEy.c[0] / (2 * F1)
        euler = np.nanmax(np.abs(np.einsum("i...,i...->...", p.y, dF) - F1))
        g0 = g.c[0]
        recon = np.nanmax(np.abs(np.einsum("i...,ij...,j...->...", p.y, g0, p.y) - E.value))
        gm = np.moveaxis(g0, (0, 1), (-2, -1))
        eig = np.linalg.eigvalsh(gm)[..., 0] if np.all(np.isfinite(gm)) else np.array([-np.inf])
        C = np.moveaxis(jgrad(g, _y_vars(n)).c[0], 0, 2)
        sym = max(np.max(np.abs(C - C.transpose(1, 0, 2, *range(3, C.ndim)))),
                  np.max(np.abs(C - C.transpose(0, 2, 1, *range(3, C.ndim)))))
    vals = [homog, euler, recon, sym]
    mineig = float(np.min(eig))
    ok = all(np.isfinite(v) and v < tol for v in vals) and mineig > min_eig
    return ValidityReport(samples, seed, float(homog), float(euler), float(recon), mineig, float(sym), bool(ok))


# orthonormal frame ------------------------------------------------------------


@dataclass
class FrameData:
    u: np.ndarray  # columns are the frame vectors e_a
    v: np.ndarray  # rows are the coframe covectors


def orthonormal_frame(F: FinslerStructure, p: PointTM, tol: float = 1e-10) -> FrameData:
    """g-orthonormal frame whose last vector is ``l = y / F``.

    Gram-Schmidt in ``g`` over the standard basis after projecting out ``l``;
    candidates that become (near) parallel to the span so far are skipped.
    """
    if p.batch_shape != ():
        raise ValueError("orthonormal_frame works on a single point")
    md = fundamental_tensor(F, p)
    g = md.g
    n = p.n
    ell = p.y / md.F
    basis = []
    for k in range(n):
        v = np.zeros(n)
        v[k] = 1.0
        for e in basis + [ell]:
            v = v - (e @ g @ v) * e
        norm2 = v @ g @ v
        if norm2 < tol**2:
            continue
        # second pass for stability
        for e in basis + [ell]:
            v = v - (e @ g @ v) * e
        basis.append(v / np.sqrt(v @ g @ v))
        if len(basis) == n - 1:
            break
    if len(basis) != n - 1:
        raise DegeneracyError("could not complete the orthonormal frame")
    u = np.column_stack(basis + [ell])
    return FrameData(u=u, v=np.linalg.inv(u))
