"""Sphere-bundle grid over the 2-torus and its trigonometric representation.

The state of a flow is ``W(x1, x2, theta) = F^2(x, (cos theta, sin theta))``;
the full structure is the 2-homogeneous extension ``F^2(x, r e(theta)) = r^2 W``.
All fields live on a uniform periodic grid and are differentiated spectrally.
The interpolant is the symmetric trigonometric one (the Nyquist mode of each
axis is split evenly between ``+N/2`` and ``-N/2``), so off-grid evaluation and
node-based FFT differentiation agree at the nodes.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from ..core import FinslerStructure, PointTM, StructureError
from ..jets import Jet, jet_space

AXES = (-3, -2, -1)


def fft_workers() -> int:
    """Thread count for transforms, capped by ``FINSLERFLOW_THREADS``."""
    env = os.environ.get("FINSLERFLOW_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"FINSLERFLOW_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _is_pow2(k: int) -> bool:
    return k >= 1 and (k & (k - 1)) == 0


@dataclass(frozen=True)
class SphereBundleGrid:
    Nx: int
    Ntheta: int

    def __post_init__(self):
        for name, v in (("Nx", self.Nx), ("Ntheta", self.Ntheta)):
            if not (_is_pow2(v) and v >= 16):
                raise ValueError(f"{name} must be a power of two >= 16, got {v}")

    n = 2

    @property
    def shape(self):
        return (self.Nx, self.Nx, self.Ntheta)

    @cached_property
    def x(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.Nx) / self.Nx

    @cached_property
    def theta(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.Ntheta) / self.Ntheta

    def nodes(self):
        """Broadcastable ``(x1, x2, theta)`` coordinate arrays."""
        return (self.x[:, None, None], self.x[None, :, None], self.theta[None, None, :])

    def node_points(self) -> PointTM:
        X1, X2, T = np.meshgrid(self.x, self.x, self.theta, indexing="ij")
        return PointTM(np.stack([X1, X2]), np.stack([np.cos(T), np.sin(T)]))

    @cached_property
    def spectral(self) -> "Spectral":
        return Spectral(self)


@dataclass
class FlowState:
    t: float
    W: np.ndarray
    grid: SphereBundleGrid

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        if self.W.shape != self.grid.shape:
            raise ValueError(f"W has shape {self.W.shape}, grid expects {self.grid.shape}")

    def copy(self, W=None, t=None) -> "FlowState":
        return FlowState(self.t if t is None else t, self.W.copy() if W is None else W, self.grid)


class Spectral:
    """FFT differentiation on a :class:`SphereBundleGrid` (real transforms, last axis halved).

    Partials sharing the same x-orders share one 2-D inverse transform; each
    fiber order then costs only a 1-D inverse along theta.
    """

    def __init__(self, grid: SphereBundleGrid):
        self.grid = grid
        Nx, Nt = grid.Nx, grid.Ntheta
        kx = np.fft.fftfreq(Nx, 1.0 / Nx)
        kt = np.fft.rfftfreq(Nt, 1.0 / Nt)
        self.kx, self.kt = kx, kt
        # 2/3 dealiasing mask, applied per axis with at least 32 nodes
        mask = np.ones((Nx, Nx, Nt // 2 + 1), dtype=bool)
        if Nx >= 32:
            mask &= (np.abs(kx) <= Nx / 3)[:, None, None] & (np.abs(kx) <= Nx / 3)[None, :, None]
        if Nt >= 32:
            mask &= (kt <= Nt / 3)[None, None, :]
        self.dealias = mask
        self.has_filter = not mask.all()
        self._xf = {}
        self._tf = {}

    def _xfactor(self, a: int, b: int):
        key = (a, b)
        if key not in self._xf:
            Nx = self.grid.Nx
            f1 = _dfactor(self.kx, a, Nx)[:, None, None]
            f2 = _dfactor(self.kx, b, Nx)[None, :, None]
            self._xf[key] = f1 * f2
        return self._xf[key]

    def _tfactor(self, c: int):
        if c not in self._tf:
            self._tf[c] = _dfactor(self.kt, c, self.grid.Ntheta)
        return self._tf[c]

    def forward(self, f):
        return sfft.rfftn(f, axes=AXES, workers=fft_workers())

    def inverse(self, fh):
        g = self.grid
        return sfft.irfftn(fh, s=(g.Nx, g.Nx, g.Ntheta), axes=AXES, workers=fft_workers())

    def nodal(self, fh, orders_list):
        """Nodal values of the listed ``(a, b, c)`` partials of a transformed field."""
        out = {}
        groups = {}
        for o in orders_list:
            groups.setdefault(tuple(o[:2]), []).append(int(o[2]))
        w = fft_workers()
        Nt = self.grid.Ntheta
        for (a, b), cs in groups.items():
            fx = fh if a == 0 and b == 0 else fh * self._xfactor(a, b)
            tmp = sfft.ifft2(fx, axes=(-3, -2), workers=w)
            for c in cs:
                tc = tmp if c == 0 else tmp * self._tfactor(c)
                out[(a, b, c)] = sfft.irfft(tc, n=Nt, axis=-1, workers=w)
        return out

    def deriv(self, fh, orders):
        return self.nodal(fh, [tuple(orders)])[tuple(orders)]

    def filter(self, f):
        """Apply the 2/3 rule where enabled; identity on coarse grids."""
        if not self.has_filter:
            return f
        return self.inverse(self.forward(f) * self.dealias)

    def band_limit(self, f, band: int):
        """Keep fiber modes ``|m| <= band`` (along the last axis) and drop the rest."""
        fh = sfft.rfft(f, axis=-1, workers=fft_workers())
        fh[..., band + 1:] = 0.0
        return sfft.irfft(fh, n=self.grid.Ntheta, axis=-1, workers=fft_workers())

    def derivatives(self, f, orders_list, filtered: bool = False):
        fh = self.forward(f)
        if filtered and self.has_filter:
            fh = fh * self.dealias
        return self.nodal(fh, orders_list)


def _dfactor(k, m: int, N: int):
    """``(ik)^m`` with the Nyquist mode zeroed for odd ``m``."""
    if m == 0:
        return np.ones_like(k, dtype=complex)
    f = (1j * k) ** m
    if m % 2:
        f = np.where(np.abs(k) == N // 2, 0.0, f)
    return f


# off-grid evaluation -----------------------------------------------------------


def _basis(N: int, pts: np.ndarray, m: int) -> np.ndarray:
    """Rows ``k`` of the symmetric trig basis, differentiated ``m`` times, at ``pts``.

    Returns ``(N, *pts.shape)`` complex weights to contract with ``fft`` coefficients / N.
    """
    k = np.fft.fftfreq(N, 1.0 / N)
    pts = np.asarray(pts, dtype=float)
    kk = k.reshape((N,) + (1,) * pts.ndim)
    B = (1j * kk) ** m * np.exp(1j * kk * pts)
    h = N // 2
    # split the Nyquist row between +N/2 and -N/2
    B[h] = 0.5 * ((1j * h) ** m * np.exp(1j * h * pts) + (-1j * h) ** m * np.exp(-1j * h * pts))
    return B / N


class TrigInterpolant:
    """Exact evaluation of the trigonometric interpolant of a grid field (and partials)."""

    def __init__(self, f: np.ndarray):
        self.f = np.asarray(f, dtype=float)
        self.coef = np.fft.fftn(self.f, axes=AXES)
        self.shape = self.f.shape[-3:]

    def contract_x(self, x1, x2, a: int = 0, b: int = 0) -> np.ndarray:
        """Coefficients along theta of the x-partial ``(a, b)`` at points ``(x1, x2)``.

        Returns an array with the theta-frequency axis first: ``(Ntheta, *pts)``.
        """
        N1, N2, _ = self.shape
        B1 = _basis(N1, x1, a)
        B2 = _basis(N2, x2, b)
        flat1 = B1.reshape(N1, -1)
        flat2 = B2.reshape(N2, -1)
        # sum_k1,k2 c[k1,k2,:] B1[k1,p] B2[k2,p]
        tmp = np.einsum("abk,bp->akp", self.coef, flat2, optimize=True)
        out = np.einsum("akp,ap->kp", tmp, flat1, optimize=True)
        return out.reshape((self.shape[2],) + np.shape(x1))

    def eval_theta(self, ck: np.ndarray, theta, c: int = 0) -> np.ndarray:
        """Finish evaluation along theta: ``ck`` from :meth:`contract_x`, ``theta`` broadcastable."""
        Nt = self.shape[2]
        B3 = _basis(Nt, theta, c)
        return np.real(np.sum(B3 * ck, axis=0))

    def __call__(self, x1, x2, theta, orders=(0, 0, 0)) -> np.ndarray:
        x1, x2, theta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x1, x2, theta)))
        ck = self.contract_x(x1, x2, orders[0], orders[1])
        return self.eval_theta(ck, theta, orders[2])


# grid-backed structure -----------------------------------------------------------


def _multi_indices(nvar: int, K: int):
    import itertools
    return [a for a in itertools.product(range(K + 1), repeat=nvar) if sum(a) <= K]


class GridStructure(FinslerStructure):
    """Finsler structure ``F^2 = r^2 W(x, theta)`` backed by grid samples of ``W``.

    Evaluation on jets composes the multivariate Taylor expansion of the
    trigonometric interpolant with jets of ``x`` and of the fiber angle.
    """

    kind = "numeric_grid"

    def __init__(self, state: FlowState):
        self.state = state
        self.n = 2
        self.sample_radius = np.pi
        self.interp = TrigInterpolant(state.W)

    def f2(self, x, y):
        if not any(isinstance(v, Jet) for v in list(x) + list(y)):
            x1, x2 = np.asarray(x[0], float), np.asarray(x[1], float)
            y1, y2 = np.asarray(y[0], float), np.asarray(y[1], float)
            return (y1**2 + y2**2) * self.interp(x1, x2, np.arctan2(y2, y1))
        space = next(v.space for v in list(x) + list(y) if isinstance(v, Jet))
        xs = [v if isinstance(v, Jet) else Jet.const(space, v) for v in x]
        ys = [v if isinstance(v, Jet) else Jet.const(space, v) for v in y]
        return compose_homogeneous(self.interp, xs, ys)


def compose_homogeneous(interp: TrigInterpolant, xs, ys) -> Jet:
    """Jet of ``|y|^2 W(x, angle(y))`` given coordinate jets ``xs``, ``ys``."""
    space = xs[0].space
    K = space.max_degree
    x0 = [v.value for v in xs]
    y0 = [v.value for v in ys]
    th0 = np.arctan2(y0[1], y0[0])
    # angle increment relative to y0 (exact for the value, smooth nearby)
    cross = ys[1] * y0[0] - ys[0] * y0[1]
    dot = ys[0] * y0[0] + ys[1] * y0[1]
    hth = (cross / dot).arctan()
    hx = [xs[0] - x0[0], xs[1] - x0[1]]
    pw = []
    for h in (hx[0], hx[1], hth):
        h = Jet(h.space, h.c.copy())
        h.c[0] = 0.0
        powers = [Jet.const(space, np.ones(np.shape(x0[0])))]
        for _ in range(K):
            powers.append(powers[-1] * h)
        pw.append(powers)
    Wj = Jet.const(space, np.zeros(np.shape(x0[0])))
    cache = {}
    for (a, b, c) in _multi_indices(3, K):
        if (a, b) not in cache:
            cache[(a, b)] = interp.contract_x(x0[0], x0[1], a, b)
        d = interp.eval_theta(cache[(a, b)], th0, c)
        coeff = d / (math.factorial(a) * math.factorial(b) * math.factorial(c))
        Wj = Wj + pw[0][a] * pw[1][b] * pw[2][c] * coeff
    r2 = ys[0] * ys[0] + ys[1] * ys[1]
    return r2 * Wj


def spectral_jet(state: FlowState, node_or_point, order: int = 4) -> Jet:
    """Jet of ``F^2`` in ``(x1, x2, y1, y2)`` for the interpolant of ``state``.

    ``node_or_point`` is an integer node ``(i1, i2, k)`` or a continuous
    ``(x1, x2, theta)``; the fiber vector is the unit vector at that angle.
    Arrays of points are accepted (broadcast over the last axes).
    """
    g = state.grid
    pt = node_or_point
    if all(isinstance(v, (int, np.integer)) for v in pt):
        x1, x2, th = g.x[pt[0]], g.x[pt[1]], g.theta[pt[2]]
    else:
        x1, x2, th = (np.asarray(v, dtype=float) for v in pt)
    p = PointTM(np.stack(np.broadcast_arrays(x1, x2)), np.stack(np.broadcast_arrays(np.cos(th), np.sin(th))))
    return GridStructure(state).f2_jet(p, order=order)


def sample_structure(F: FinslerStructure, grid: SphereBundleGrid, t: float = 0.0) -> FlowState:
    """Sample ``F^2`` of an analytic 2-dimensional structure on the unit fiber circle."""
    if F.n != 2:
        raise StructureError("grid flows are two-dimensional")
    p = grid.node_points()
    W = F.f2(list(p.x), list(p.y))
    W = np.broadcast_to(np.asarray(W, dtype=float), grid.shape).copy()
    return FlowState(t, W, grid)
