"""Spray, nonlinear connection, Chern connection and horizontal covariant derivatives.

Everything is computed from a single jet of ``F^2`` by the chain

    g -> g^-1 -> G -> N -> delta g -> Gamma -> delta Gamma

where every intermediate quantity is itself a (tensor) jet that loses one
order per differentiation. ``delta_k = d/dx^k - N^j_k d/dy^j`` is applied as a
post-processing of the x- and y-partials of a jet.

Index conventions for returned arrays (batch axes trail):

* ``N[i, k] = N^i_k = dG^i/dy^k``
* ``Gamma[i, j, k] = Gamma^i_jk`` and likewise for ``gamma``
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .core import FinslerStructure, PointTM, as_jet, check_metric, seed_point
from .jets import Jet, JetError, jeinsum, jgrad, jinv, jperm, jstack

_LETTERS = "abcdefgh"


class LocalGeometry:
    """Lazy connection/curvature pipeline built on one jet of ``F^2``.

    ``E`` is the jet of ``F^2`` and ``ys`` the fiber coordinates as jets in the
    same space; ``nb`` is the number of batch axes.
    """

    def __init__(self, E: Jet, ys, n: int, check: bool = True):
        self.E = E
        self.n = n
        self.xv = list(range(n))
        self.yv = list(range(n, 2 * n))
        self.y = jstack(list(ys), E.space)
        self.nb = E.c.ndim - 1
        if check:
            check_metric(self.g.c[0])

    @classmethod
    def at(cls, F: FinslerStructure, p: PointTM, order: int = 4, fiber_order: int = 0, check: bool = True):
        xs, ys = seed_point(p, order, fiber_order)
        E = as_jet(F.f2(xs, ys), xs[0].space)
        return cls(E, ys, p.n, check=check)

    # metric -----------------------------------------------------------------
    @cached_property
    def dEy(self) -> Jet:
        return jgrad(self.E, self.yv)

    @cached_property
    def g(self) -> Jet:
        return jgrad(self.dEy, self.yv) * 0.5

    @cached_property
    def ginv(self) -> Jet:
        return jinv(self.g)

    # spray and nonlinear connection -----------------------------------------
    @cached_property
    def G(self) -> Jet:
        dxy = jgrad(self.dEy, self.xv)  # [j, h] = d_x^j d_y^h F^2
        A = jeinsum("jh,j->h", dxy, self.y) - jgrad(self.E, self.xv)
        return jeinsum("ih,h->i", self.ginv, A) * 0.25

    @cached_property
    def dGy(self) -> Jet:
        """``[k, i] = dG^i/dy^k``."""
        return jgrad(self.G, self.yv)

    @cached_property
    def N(self) -> Jet:
        return jperm(self.dGy, (1, 0))

    def delta(self, t: Jet) -> Jet:
        """``delta_k`` of a tensor jet; the new index ``k`` is prepended."""
        rank = t.c.ndim - 1 - self.nb
        idx = _LETTERS[:rank]
        tx = jgrad(t, self.xv)
        ty = jgrad(t, self.yv)
        return tx - jeinsum(f"jk,j{idx}->k{idx}", self.N, ty)

    # Chern connection -----------------------------------------------------------
    @cached_property
    def dg(self) -> Jet:
        """``[l, a, b] = delta_l g_ab``."""
        return self.delta(self.g)

    @cached_property
    def Gamma(self) -> Jet:
        dg = self.dg
        # S[h, j, k] = delta_j g_hk + delta_k g_jh - delta_h g_jk
        S = jperm(dg, (1, 0, 2)) + jperm(dg, (1, 2, 0)) - dg
        return jeinsum("ih,hjk->ijk", self.ginv, S) * 0.5

    @cached_property
    def gamma(self) -> Jet:
        """Formal Christoffel symbols (plain x-derivatives of g)."""
        dg = jgrad(self.g, self.xv)
        S = jperm(dg, (1, 0, 2)) + jperm(dg, (1, 2, 0)) - dg
        return jeinsum("ih,hjk->ijk", self.ginv, S) * 0.5

    @cached_property
    def dGamma(self) -> Jet:
        """``[l, i, j, k] = delta_l Gamma^i_jk``."""
        return self.delta(self.Gamma)

    # curvature --------------------------------------------------------------
    @cached_property
    def R_hh(self) -> Jet:
        """``[i, j, k, l] = R_j^i_kl`` (hh-curvature of the Chern connection)."""
        D = self.dGamma  # D[a, i, j, b] = delta_a Gamma^i_jb
        t1 = jperm(D, (1, 2, 0, 3))  # [i, j, k=a, l=b] -> delta_k Gamma^i_jl
        t2 = jperm(D, (1, 2, 3, 0))  # [i, j, k=b, l=a] -> delta_l Gamma^i_jk
        Gm = self.Gamma
        q = jeinsum("ihk,hjl->ijkl", Gm, Gm)
        return t1 - t2 + q - jperm(q, (0, 1, 3, 2))

    @cached_property
    def R_reduced(self) -> Jet:
        """``[i, k] = R^i_k`` from spray derivatives, divided by ``F^2``."""
        G, dGy = self.G, self.dGy
        Gx = jgrad(G, self.xv)  # [k, i]
        Gxy = jgrad(dGy, self.xv)  # [j, k, i] = d_x^j d_y^k G^i
        Gyy = jgrad(dGy, self.yv)  # [j, k, i]
        R = (jperm(Gx, (1, 0)) * 2.0
             - jeinsum("jki,j->ik", Gxy, self.y)
             + jeinsum("j,jki->ik", G, Gyy) * 2.0
             - jeinsum("ji,kj->ik", dGy, dGy))
        return jeinsum("ik,->ik", R, self.E.recip())

    @cached_property
    def R_contracted(self) -> Jet:
        """``(1/F^2) y^j R_j^i_km y^m`` from the hh-curvature."""
        r = jeinsum("ijkm,m->ijk", self.R_hh, self.y)
        r = jeinsum("ijk,j->ik", r, self.y)
        return jeinsum("ik,->ik", r, self.E.recip())

    @cached_property
    def ric_scalar(self) -> Jet:
        R = self.R_reduced
        return Jet(R.space, np.einsum("zii...->z...", R.c))


@dataclass
class ConnectionData:
    gamma: np.ndarray
    G: np.ndarray
    N: np.ndarray
    Gamma: np.ndarray


def connection_data(F: FinslerStructure, p: PointTM) -> ConnectionData:
    """Formal Christoffel symbols, spray, nonlinear connection and Chern connection at ``p``."""
    geo = LocalGeometry.at(F, p, order=3)
    return ConnectionData(gamma=geo.gamma.value, G=geo.G.value, N=geo.N.value, Gamma=geo.Gamma.value)


def metric_field(F: FinslerStructure) -> Callable:
    """The fundamental tensor as a (0,2) field callable on coordinate jets."""

    def field(xs, ys):
        n = len(xs)
        E = F.f2(xs, ys)
        return [[E.d(n + i).d(n + j) * 0.5 for j in range(n)] for i in range(n)]

    return field


def horizontal_covariant_derivative(field: Callable, F: FinslerStructure, p: PointTM) -> np.ndarray:
    """Chern horizontal covariant derivative of a covector or (0,2) field.

    ``field(xs, ys)`` returns a list (covector) or nested list ((0,2)-tensor)
    of jets. The result carries the derivative index last:
    ``out[j, l] = nabla_l w_j`` or ``out[j, k, l] = nabla_l S_jk``.
    """
    n = p.n
    xs, ys = seed_point(p, 4)
    space = xs[0].space
    E = as_jet(F.f2(xs, ys), space)
    geo = LocalGeometry(E, ys, n)
    vals = field(xs, ys)
    T = jstack(vals, space)
    if T.space.order < 1:
        raise JetError("field jet order insufficient for a horizontal derivative")
    rank = T.c.ndim - 1 - geo.nb
    dT = geo.delta(T)  # [l, ...]
    Gm = geo.Gamma
    if rank == 1:
        out = dT - jeinsum("s,sjl->lj", T, Gm)
        return np.moveaxis(out.value, 0, 1)
    if rank == 2:
        out = dT - jeinsum("sk,sjl->ljk", T, Gm) - jeinsum("js,skl->ljk", T, Gm)
        return np.moveaxis(out.value, 0, 2)
    raise ValueError(f"unsupported field rank {rank}")
