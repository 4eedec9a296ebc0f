"""DeTurck vector field, Lie-derivative term, the harmonic-map operator, diffeomorphisms and pullbacks.

Pointwise quantities are evaluated with the jet pipeline of
:mod:`finslerflow.connection`; grid maps live on the torus grid of
:mod:`finslerflow.flow.grid`.

A vector field argument may be

* a :class:`DeturckField` (built from two structures), or
* a callable ``field(xs, ys) -> list of n`` jets or numbers (analytic field).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .connection import LocalGeometry
from .core import FinslerStructure, PointTM, as_jet, seed_point
from .flow.grid import FlowState, GridStructure, SphereBundleGrid, _basis
from .jets import Jet, JetError, jeinsum, jgrad, jstack


class DiffeoBreakdownError(ArithmeticError):
    """The integrated grid map stopped being invertible."""

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


# DeTurck field ---------------------------------------------------------------------


class DeturckField:
    """``xi^i = g^pq (Gamma_bar^i_pq - Gamma^i_pq)`` for an evolving structure against a background."""

    def __init__(self, F: FinslerStructure, background: FinslerStructure):
        if F.n != background.n:
            raise ValueError("structures must share the dimension")
        self.F = F
        self.background = background
        self.n = F.n

    def jet(self, p: PointTM, order: int = 1) -> Jet:
        """Tensor jet ``(n, ...)`` of the field in the variables ``(x, y)`` at ``p``."""
        geo = LocalGeometry.at(self.F, p, order=order + 3)
        bg = LocalGeometry.at(self.background, p, order=order + 3)
        diff = bg.Gamma - geo.Gamma
        return jeinsum("pq,ipq->i", geo.ginv, diff)

    def __call__(self, p: PointTM) -> np.ndarray:
        return self.jet(p, order=0).value


def deturck_vector(F: FinslerStructure, background: FinslerStructure, p: PointTM) -> np.ndarray:
    """DeTurck field of ``F`` against ``background`` at ``p``, shape ``(n, *batch)``."""
    return DeturckField(F, background)(p)


def field_jet(xi, p: PointTM, order: int = 1) -> Jet:
    """Jet of a vector field (see module docstring) at ``p``."""
    if isinstance(xi, DeturckField):
        return xi.jet(p, order=order)
    xs, ys = seed_point(p, order)
    vals = xi(xs, ys)
    space = xs[0].space
    return jstack([as_jet(v, space) if not isinstance(v, Jet) else v for v in vals], space)


def lie_derivative_F2(F: FinslerStructure, xi, p: PointTM) -> np.ndarray:
    """Contracted Lie derivative ``2 y^i y^j nabla_j (g_ik xi^k)`` of ``F^2`` along ``xi``.

    ``nabla`` is the Chern horizontal covariant derivative. The field needs a
    first-order jet at ``p``; for a field depending on ``x`` only this is the
    derivative of ``F^2`` along the natural lift of the flow of ``xi``.
    """
    geo = LocalGeometry.at(F, p, order=3)
    X = field_jet(xi, p, order=1)
    if X.space.order < 1:
        raise JetError("vector field jet order insufficient for a covariant derivative")
    xl = jeinsum("ik,k->i", geo.g, X)
    dxl = geo.delta(xl).value  # [j, i] = delta_j xi_i
    y = p.y
    G = geo.Gamma.value
    xlv = xl.value
    nab = dxl - np.einsum("sij...,s...->ji...", G, xlv)
    return 2.0 * np.einsum("ji...,i...,j...->...", nab, y, y)


# harmonic-map operator ---------------------------------------------------------------


def phi_operator(phi: Callable, F: FinslerStructure, background: FinslerStructure, p: PointTM) -> np.ndarray:
    """Tension-type operator of a lifted map ``phi`` of ``TM`` between ``F`` and ``background``.

    ``phi(xs, ys)`` returns ``2n`` jets: the base components followed by the
    fiber components of the image point. Returns the ``2n`` components

    * ``g^pq (d_p d_q phi^i + F^2 phi^i_{y^p y^q} - d_h phi^i Gamma^h_pq
      + Gamma_bar^i_jk(phi) d_p phi^j d_q phi^k)`` for the base block, and
    * ``g^pq (d_p d_q phi^{n+i} + F^2 phi^{n+i}_{y^p y^q} + phi^{n+i}_{y^k} d_p N^k_q)``
      for the fiber block,

    where ``d`` is the horizontal derivative ``delta``.
    """
    n = p.n
    xs, ys = seed_point(p, 4)
    space = xs[0].space
    E = as_jet(F.f2(xs, ys), space)
    geo = LocalGeometry(E, ys, n)
    vals = [as_jet(v, space) for v in phi(xs, ys)]
    if len(vals) != 2 * n:
        raise ValueError(f"phi must return {2 * n} components, got {len(vals)}")
    yv = geo.yv
    ginv = geo.ginv.value
    F2 = geo.E.value
    out = []
    A = jstack(vals[:n], space)
    B = jstack(vals[n:], space)
    dA = geo.delta(A)  # [q, i]
    ddA = geo.delta(dA).value  # [p, q, i]
    yyA = jgrad(jgrad(A, yv), yv).value
    dAv = dA.value
    img = PointTM(A.value, B.value)
    Gbar = LocalGeometry.at(background, img, order=3).Gamma.value
    Gm = geo.Gamma.value
    block1 = (np.einsum("pq...,pqi...->i...", ginv, ddA + F2 * yyA)
              - np.einsum("pq...,hi...,hpq...->i...", ginv, dAv, Gm)
              + np.einsum("pq...,ijk...,pj...,qk...->i...", ginv, Gbar, dAv, dAv))
    out.append(block1)
    dB = geo.delta(B)
    ddB = geo.delta(dB).value
    yyB = jgrad(jgrad(B, yv), yv).value
    yB = jgrad(B, yv).value  # [k, i]
    dN = geo.delta(geo.N).value  # [p, k, q] = delta_p N^k_q
    block2 = (np.einsum("pq...,pqi...->i...", ginv, ddB + F2 * yyB)
              + np.einsum("pq...,ki...,pkq...->i...", ginv, yB, dN))
    out.append(block2)
    return np.concatenate(out, axis=0)


def identity_map(xs, ys):
    return list(xs) + list(ys)


# off-grid evaluation of grid vector fields ---------------------------------------------


class TaylorEvaluator:
    """Evaluate periodic grid fields at points displaced from the nodes.

    The field has shape ``(m, Nx, Nx, *rest)``; a displacement ``d`` of shape
    ``(2, Nx, Nx, *rest)`` moves each node in ``x``. Values come from the
    Taylor series of the trigonometric interpolant about each node, summed to
    the degree at which the tail bound drops below ``tol`` (relative to the
    coefficient mass); beyond the series' reach the exact trigonometric sum
    is used.
    """

    max_degree = 16

    def __init__(self, f: np.ndarray, tol: float = 1e-14):
        self.f = np.asarray(f, dtype=float)
        self.N = self.f.shape[1]
        self.tol = tol
        self.hat = np.fft.fft2(self.f, axes=(1, 2))
        k = np.fft.fftfreq(self.N, 1.0 / self.N)
        self.k = k
        active = np.abs(self.hat) > 1e-15 * max(np.abs(self.hat).max(), 1e-300)
        ks = np.abs(k)
        kk = np.maximum(ks[:, None], ks[None, :])
        kk = kk.reshape((1, self.N, self.N) + (1,) * (self.f.ndim - 3))
        self.kmax = float(np.max(np.where(active, kk, 0))) if active.any() else 0.0
        self._derivs = {}

    def _deriv(self, a: int, b: int) -> np.ndarray:
        key = (a, b)
        if key not in self._derivs:
            N = self.N
            fa = (1j * self.k) ** a
            fb = (1j * self.k) ** b
            if a % 2:
                fa = np.where(np.abs(self.k) == N // 2, 0.0, fa)
            if b % 2:
                fb = np.where(np.abs(self.k) == N // 2, 0.0, fb)
            shape = (1, N, N) + (1,) * (self.f.ndim - 3)
            fac = (fa[:, None] * fb[None, :]).reshape(shape)
            self._derivs[key] = np.real(np.fft.ifft2(self.hat * fac, axes=(1, 2)))
        return self._derivs[key]

    def degree_for(self, dmax: float) -> int | None:
        r = 2.0 * dmax * self.kmax
        if r == 0.0:
            return 0
        for K in range(self.max_degree + 1):
            if r ** (K + 1) / math.factorial(K + 1) < self.tol:
                return K
        return None

    def __call__(self, d: np.ndarray) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        K = self.degree_for(float(np.max(np.abs(d))) if d.size else 0.0)
        if K is None:
            return self.exact(d)
        out = np.zeros(np.broadcast_shapes(self.f.shape, (1,) + d.shape[1:]))
        p1 = [np.ones_like(d[0])]
        p2 = [np.ones_like(d[1])]
        for _ in range(K):
            p1.append(p1[-1] * d[0])
            p2.append(p2[-1] * d[1])
        for total in range(K + 1):
            for a in range(total + 1):
                b = total - a
                w = p1[a] * p2[b] / (math.factorial(a) * math.factorial(b))
                out = out + self._deriv(a, b) * w[None]
        return out

    def exact(self, d: np.ndarray) -> np.ndarray:
        """Direct trigonometric sum at ``node + d`` (slow, for large displacements)."""
        N = self.N
        x = 2 * np.pi * np.arange(N) / N
        x1 = x.reshape((N, 1) + (1,) * (d.ndim - 3)) + d[0]
        x2 = x.reshape((1, N) + (1,) * (d.ndim - 3)) + d[1]
        B1 = _basis(N, x1, 0)
        B2 = _basis(N, x2, 0)
        out = np.empty(np.broadcast_shapes(self.f.shape, (1,) + d.shape[1:]))
        spec = "abl,aijl,bijl->ijl" if self.f.ndim == 4 else "ab,aij,bij->ij"
        for m in range(self.f.shape[0]):
            # each basis factor carries 1/N already
            out[m] = np.real(np.einsum(spec, self.hat[m], B1, B2))
        return out


# grid diffeomorphisms -------------------------------------------------------------------


@dataclass
class LiftedDiffeo:
    """Grid map of the sphere bundle: node ``(x, theta)`` to image ``(x + disp, theta)``.

    ``disp`` has shape ``(2, Nx, Nx)`` when the map is fiber-independent and
    ``(2, Nx, Nx, Ntheta)`` otherwise. The fiber image of a fiber-independent
    map is the natural lift ``y -> J y``; otherwise the fiber angle is held.
    """

    grid: SphereBundleGrid
    disp: np.ndarray
    t: float = 0.0

    @property
    def fiber_independent(self) -> bool:
        return self.disp.ndim == 3

    @property
    def is_identity(self) -> bool:
        return not np.any(self.disp)

    @classmethod
    def identity(cls, grid: SphereBundleGrid, fiber_independent: bool = True, t: float = 0.0):
        shape = (2, grid.Nx, grid.Nx) if fiber_independent else (2,) + grid.shape
        return cls(grid, np.zeros(shape), t)

    def image(self) -> np.ndarray:
        g = self.grid
        X1, X2 = np.meshgrid(g.x, g.x, indexing="ij")
        base = np.stack([X1, X2])
        if not self.fiber_independent:
            base = base[..., None]
        return base + self.disp

    def jacobian(self) -> np.ndarray:
        """``J[i, a] = d phi^i / d x^a`` from spectral derivatives of the displacement."""
        d = self.disp
        N = self.grid.Nx
        k = np.fft.fftfreq(N, 1.0 / N)
        k = np.where(np.abs(k) == N // 2, 0.0, k)
        dh = np.fft.fft2(d, axes=(1, 2))
        rest = (1,) * (d.ndim - 3)
        d1 = np.real(np.fft.ifft2(dh * (1j * k).reshape((1, N, 1) + rest), axes=(1, 2)))
        d2 = np.real(np.fft.ifft2(dh * (1j * k).reshape((1, 1, N) + rest), axes=(1, 2)))
        J = np.stack([d1, d2], axis=1)
        J[0, 0] += 1.0
        J[1, 1] += 1.0
        return J

    def min_jacobian_det(self) -> float:
        J = self.jacobian()
        return float(np.min(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]))


class SlicedField:
    """A vector field known on the grid at increasing times, linear in time in between.

    Each slice has shape ``(2, Nx, Nx)`` (fiber-independent) or ``(2, Nx, Nx, Ntheta)``.
    """

    def __init__(self, times, slices, tol: float = 1e-14):
        self.times = [float(t) for t in times]
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("slice times must increase")
        self.evals = [TaylorEvaluator(s, tol) for s in slices]

    @property
    def fiber_independent(self) -> bool:
        return self.evals[0].f.ndim == 3

    def __call__(self, t: float, disp: np.ndarray) -> np.ndarray:
        ts = self.times
        if t <= ts[0]:
            return self.evals[0](disp)
        if t >= ts[-1]:
            return self.evals[-1](disp)
        i = int(np.searchsorted(ts, t, side="right")) - 1
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        a = self.evals[i](disp)
        if w == 0.0:
            return a
        return (1 - w) * a + w * self.evals[i + 1](disp)


def _analytic_velocity(xi: Callable, grid: SphereBundleGrid, fiber_independent: bool):
    X1, X2 = np.meshgrid(grid.x, grid.x, indexing="ij")
    base = np.stack([X1, X2])
    th = None
    if not fiber_independent:
        base = np.broadcast_to(base[..., None], (2,) + grid.shape)
        th = np.broadcast_to(grid.theta, grid.shape)

    def vel(t, disp):
        pos = base + disp
        return np.asarray(xi(t, pos[0], pos[1], th), dtype=float) * np.ones_like(disp)

    return vel


def _rk4_positions(vel, disp, t, dt):
    k1 = vel(t, disp)
    k2 = vel(t + 0.5 * dt, disp + 0.5 * dt * k1)
    k3 = vel(t + 0.5 * dt, disp + 0.5 * dt * k2)
    k4 = vel(t + dt, disp + dt * k3)
    return disp + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _check_jacobian(phi: LiftedDiffeo, t: float, floor: float = 1e-8):
    det = phi.min_jacobian_det()
    if not np.isfinite(det) or det <= floor:
        raise DiffeoBreakdownError(f"diffeomorphism Jacobian degenerate (min det {det:.3e}) at t={t:.6g}", t)


def integrate_diffeo(xi_of_t, grid: SphereBundleGrid, t0: float, t1: float, dt: float,
                     fiber_independent: bool | None = None) -> LiftedDiffeo:
    """Solve ``d phi/dt = xi(phi, t)``, ``phi(t0) = id`` on the grid with classical RK4.

    ``xi_of_t`` is a :class:`SlicedField` or a callable ``xi(t, x1, x2, theta)``
    returning the two components (``theta`` is ``None`` for fiber-independent
    maps). The fiber coordinate is not transported.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    if isinstance(xi_of_t, SlicedField):
        fi = xi_of_t.fiber_independent if fiber_independent is None else fiber_independent
        vel = xi_of_t
    else:
        fi = True if fiber_independent is None else fiber_independent
        vel = _analytic_velocity(xi_of_t, grid, fi)
    phi = LiftedDiffeo.identity(grid, fi, t0)
    nsteps = max(0, int(math.ceil((t1 - t0) / dt - 1e-9)))
    t = t0
    for _ in range(nsteps):
        h = min(dt, t1 - t)
        phi.disp = _rk4_positions(vel, phi.disp, t, h)
        t = t + h
        _check_jacobian(phi, t)
    phi.t = t1
    return phi


class DiffeoIntegrator:
    """Online version of :func:`integrate_diffeo` fed one field slice at a time.

    Each new slice advances the map from the previous slice time, using the
    linear-in-time interpolation between the two most recent slices.
    """

    def __init__(self, grid: SphereBundleGrid, t0: float, xi0: np.ndarray, tol: float = 1e-14):
        self.grid = grid
        self.tol = tol
        self.t = float(t0)
        self.prev = TaylorEvaluator(xi0, tol)
        self.phi = LiftedDiffeo.identity(grid, xi0.ndim == 3, t0)

    def push(self, t: float, xi: np.ndarray):
        nxt = TaylorEvaluator(xi, self.tol)
        t0, dt = self.t, float(t) - self.t
        if dt <= 0:
            raise ValueError("slices must advance in time")
        a, b = self.prev, nxt

        def vel(s, disp):
            w = (s - t0) / dt
            va = a(disp)
            return va if w == 0.0 else (1 - w) * va + w * b(disp)

        self.phi.disp = _rk4_positions(vel, self.phi.disp, t0, dt)
        self.t = float(t)
        self.phi.t = self.t
        _check_jacobian(self.phi, self.t)
        self.prev = nxt


# pullback --------------------------------------------------------------------------------


def pullback_W(phi: LiftedDiffeo, F_tilde: FinslerStructure) -> np.ndarray:
    """Samples of ``phi^* F_tilde^2`` on the unit fiber circle of the grid."""
    grid = phi.grid
    c, s = np.cos(grid.theta), np.sin(grid.theta)
    pos = phi.image()
    if phi.fiber_independent:
        J = phi.jacobian()
        # image fiber vector J e_r(theta), shape (2, Nx, Nx, Ntheta)
        v = J[:, 0, ..., None] * c + J[:, 1, ..., None] * s
        if isinstance(F_tilde, GridStructure):
            interp = F_tilde.interp
            ck = interp.contract_x(pos[0], pos[1])  # (Ntheta, Nx, Nx)
            ang = np.arctan2(v[1], v[0])
            B = _basis(grid.Ntheta, ang, 0)  # (Nt, Nx, Nx, Ntheta)
            Wt = np.real(np.sum(B * ck[..., None], axis=0))
            return (v[0] ** 2 + v[1] ** 2) * Wt
        X = np.broadcast_to(pos[..., None], (2,) + grid.shape)
        return np.asarray(F_tilde.f2([X[0], X[1]], [v[0], v[1]]), dtype=float)
    ys = np.broadcast_to(np.stack([c, s])[:, None, None, :], (2,) + grid.shape)
    return np.asarray(F_tilde.f2([pos[0], pos[1]], [ys[0], ys[1]]), dtype=float)


def pullback_structure(phi: LiftedDiffeo, F_tilde: FinslerStructure) -> GridStructure:
    """Grid-backed structure sampling ``phi^* F_tilde^2``."""
    return GridStructure(FlowState(phi.t, pullback_W(phi, F_tilde), phi.grid))
