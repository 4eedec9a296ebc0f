"""Pseudo-spectral Ricci and Ricci-DeTurck right-hand sides on the fiber-circle grid.

All quantities are evaluated at unit fiber vectors ``y = e_r(theta)``. With
``e_t = d e_r / d theta``, a 2-homogeneous function ``f = r^2 f(theta)`` has

    grad_y f = 2 f e_r + f' e_t
    hess_y f = 2 f e_r e_r + f' (e_r e_t + e_t e_r) + (2 f + f'') e_t e_t

and a 0-homogeneous ``h(theta)`` has ``grad_y h = h' e_t``. Nodal values of
the spray are transformed once and differentiated spectrally; the curvature
trace then needs only pointwise algebra.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .grid import FlowState, Spectral, SphereBundleGrid

W_ORDERS = [(0, 0, 0), (0, 0, 1), (0, 0, 2), (1, 0, 0), (0, 1, 0), (1, 0, 1), (0, 1, 1)]
W_ORDERS_DT = W_ORDERS + [(0, 0, 3), (1, 0, 2), (0, 1, 2)]
G_ORDERS = [(0, 0, 0), (0, 0, 1), (0, 0, 2)]


class FlowDegeneracyError(ArithmeticError):
    """Fundamental tensor lost positive definiteness at some node."""

    def __init__(self, message, node=None, eigenvalue=float("nan")):
        super().__init__(message)
        self.node = node
        self.eigenvalue = eigenvalue


def frame(grid: SphereBundleGrid):
    """Cartesian components of ``e_r`` and ``e_t`` broadcast to the grid."""
    th = grid.theta[None, None, :]
    c, s = np.cos(th), np.sin(th)
    er = np.stack([np.broadcast_to(c, grid.shape), np.broadcast_to(s, grid.shape)])
    et = np.stack([np.broadcast_to(-s, grid.shape), np.broadcast_to(c, grid.shape)])
    return er, et


def polar_to_cartesian(M, grid):
    """Cartesian ``(2, 2, *grid)`` form of a symmetric tensor given by polar ``(rr, rt, tt)``."""
    th = grid.theta[None, None, :]
    c, s = np.cos(th), np.sin(th)
    rr, rt, tt = M
    g11 = rr * c * c - 2 * rt * c * s + tt * s * s
    g22 = rr * s * s + 2 * rt * c * s + tt * c * c
    g12 = (rr - tt) * c * s + rt * (c * c - s * s)
    return np.stack([np.stack([g11, g12]), np.stack([g12, g22])])


def eig2(g):
    """Eigenvalues ``(low, high)`` of symmetric 2x2 fields."""
    m = 0.5 * (g[0, 0] + g[1, 1])
    r = np.sqrt((0.5 * (g[0, 0] - g[1, 1])) ** 2 + g[0, 1] ** 2)
    return m - r, m + r


# pointwise kernels ----------------------------------------------------------------
# Every kernel loops over (x1, x2, theta) nodes; c, s are cos and sin of theta.
# Polar components refer to the frame e_r = (c, s), e_t = (-s, c).


@njit(cache=True)
def _metric_spray(W, Wt, Wtt, W1, W2, W1t, W2t, c, s):
    """Metric ``(rr, rt, tt)``, its eigenvalues and the Cartesian spray."""
    n1, n2, nt = W.shape
    M = np.empty((3, n1, n2, nt))
    eig = np.empty((2, n1, n2, nt))
    G = np.empty((2, n1, n2, nt))
    for i in range(n1):
        for j in range(n2):
            for k in range(nt):
                rr = W[i, j, k]
                rt = 0.5 * Wt[i, j, k]
                tt = rr + 0.5 * Wtt[i, j, k]
                M[0, i, j, k], M[1, i, j, k], M[2, i, j, k] = rr, rt, tt
                m = 0.5 * (rr + tt)
                r = np.sqrt((0.5 * (rr - tt)) ** 2 + rt * rt)
                eig[0, i, j, k], eig[1, i, j, k] = m - r, m + r
                det = rr * tt - rt * rt
                Dr = c[k] * W1[i, j, k] + s[k] * W2[i, j, k]
                Dt = -s[k] * W1[i, j, k] + c[k] * W2[i, j, k]
                Drt = c[k] * W1t[i, j, k] + s[k] * W2t[i, j, k]
                # G^i = 1/4 g^ih (y^j d_xj d_yh F^2 - d_xh F^2)
                Ar, At = Dr, Drt - Dt
                gr = 0.25 * (tt * Ar - rt * At) / det
                gt = 0.25 * (-rt * Ar + rr * At) / det
                G[0, i, j, k] = gr * c[k] - gt * s[k]
                G[1, i, j, k] = gr * s[k] + gt * c[k]
    return M, eig, G


@njit(cache=True)
def _fiber_terms(Gf, Gth, Gtt, c, s):
    """Polar spray data ``(a, b, a1, b1, b2)`` and ``div_y G = 2a + b1``."""
    n1, n2, nt = Gf.shape[1:]
    P = np.empty((5, n1, n2, nt))
    D = np.empty((n1, n2, nt))
    for i in range(n1):
        for j in range(n2):
            for k in range(nt):
                ck, sk = c[k], s[k]
                a = Gf[0, i, j, k] * ck + Gf[1, i, j, k] * sk
                b = -Gf[0, i, j, k] * sk + Gf[1, i, j, k] * ck
                a1 = Gth[0, i, j, k] * ck + Gth[1, i, j, k] * sk
                b1 = -Gth[0, i, j, k] * sk + Gth[1, i, j, k] * ck
                b2 = -Gtt[0, i, j, k] * sk + Gtt[1, i, j, k] * ck
                P[0, i, j, k], P[1, i, j, k], P[2, i, j, k] = a, b, a1
                P[3, i, j, k], P[4, i, j, k] = b1, b2
                D[i, j, k] = 2 * a + b1
    return P, D


@njit(cache=True)
def _ricci_scalar(W, divx, D1, D2, P, c, s):
    n1, n2, nt = W.shape
    ric = np.empty((n1, n2, nt))
    for i in range(n1):
        for j in range(n2):
            for k in range(nt):
                a, b, a1 = P[0, i, j, k], P[1, i, j, k], P[2, i, j, k]
                b1, b2 = P[3, i, j, k], P[4, i, j, k]
                t12 = 2 * divx[i, j, k] - (c[k] * D1[i, j, k] + s[k] * D2[i, j, k])
                t3 = 2 * (2 * a * a + a * b1 + b * a1 + b * (2 * b + b2))
                t4 = 4 * a * a + 4 * a1 * b + b1 * b1
                ric[i, j, k] = (t12 + t3 - t4) / W[i, j, k]
    return ric


@njit(cache=True)
def _chern(M, Wt, Wttt, W1, W2, W1t, W2t, W1tt, W2tt, P, c, s):
    """Chern connection ``[i, j, k]`` over polar indices ``{r, t}``."""
    n1, n2, nt = Wt.shape
    out = np.empty((2, 2, 2, n1, n2, nt))
    dg = np.empty((2, 2, 2))
    for i in range(n1):
        for j in range(n2):
            for k in range(nt):
                ck, sk = c[k], s[k]
                rr, rt, tt = M[0, i, j, k], M[1, i, j, k], M[2, i, j, k]
                det = rr * tt - rt * rt
                irr, irt, itt = tt / det, -rt / det, rr / det
                Dr = ck * W1[i, j, k] + sk * W2[i, j, k]
                Dt = -sk * W1[i, j, k] + ck * W2[i, j, k]
                Drt = ck * W1t[i, j, k] + sk * W2t[i, j, k]
                Dtt = -sk * W1t[i, j, k] + ck * W2t[i, j, k]
                Drtt = ck * W1tt[i, j, k] + sk * W2tt[i, j, k]
                Dttt = -sk * W1tt[i, j, k] + ck * W2tt[i, j, k]
                # d_y g = cart e_t e_t e_t at unit y
                cart = 2 * Wt[i, j, k] + 0.5 * Wttt[i, j, k]
                b, b1 = P[1, i, j, k], P[3, i, j, k]
                # dg[u, a, b] = delta_u g_ab
                dg[0, 0, 0] = Dr
                dg[0, 0, 1] = 0.5 * Drt
                dg[0, 1, 0] = 0.5 * Drt
                dg[0, 1, 1] = Dr + 0.5 * Drtt - 2 * b * cart
                dg[1, 0, 0] = Dt
                dg[1, 0, 1] = 0.5 * Dtt
                dg[1, 1, 0] = 0.5 * Dtt
                dg[1, 1, 1] = Dt + 0.5 * Dttt - b1 * cart
                for p in range(2):
                    for q in range(p, 2):
                        S0 = dg[p, 0, q] + dg[q, p, 0] - dg[0, p, q]
                        S1 = dg[p, 1, q] + dg[q, p, 1] - dg[1, p, q]
                        v0 = 0.5 * (irr * S0 + irt * S1)
                        v1 = 0.5 * (irt * S0 + itt * S1)
                        out[0, p, q, i, j, k] = v0
                        out[0, q, p, i, j, k] = v0
                        out[1, p, q, i, j, k] = v1
                        out[1, q, p, i, j, k] = v1
    return out


@njit(cache=True)
def _deturck_field(M, Gam, Gam_bar, c, s):
    """Lowered polar components of ``xi`` and its Cartesian components."""
    n1, n2, nt = M.shape[1:]
    xl = np.empty((2, n1, n2, nt))
    xi = np.empty((2, n1, n2, nt))
    for i in range(n1):
        for j in range(n2):
            for k in range(nt):
                rr, rt, tt = M[0, i, j, k], M[1, i, j, k], M[2, i, j, k]
                det = rr * tt - rt * rt
                irr, irt, itt = tt / det, -rt / det, rr / det
                d00 = Gam_bar[0, 0, 0, i, j, k] - Gam[0, 0, 0, i, j, k]
                d01 = Gam_bar[0, 0, 1, i, j, k] - Gam[0, 0, 1, i, j, k]
                d11 = Gam_bar[0, 1, 1, i, j, k] - Gam[0, 1, 1, i, j, k]
                vr = irr * d00 + 2 * irt * d01 + itt * d11
                d00 = Gam_bar[1, 0, 0, i, j, k] - Gam[1, 0, 0, i, j, k]
                d01 = Gam_bar[1, 0, 1, i, j, k] - Gam[1, 0, 1, i, j, k]
                d11 = Gam_bar[1, 1, 1, i, j, k] - Gam[1, 1, 1, i, j, k]
                vt = irr * d00 + 2 * irt * d01 + itt * d11
                xl[0, i, j, k] = rr * vr + rt * vt
                xl[1, i, j, k] = rt * vr + tt * vt
                xi[0, i, j, k] = vr * c[k] - vt * s[k]
                xi[1, i, j, k] = vr * s[k] + vt * c[k]
    return xl, xi


@njit(cache=True)
def _deturck_combine(W, ric, Z1, Z2, Zt, xl, P, Gam, c, s):
    """Unfiltered ``-2 F^2 Ric - L_xi F^2`` from the lowered field ``zeta = xi_r``."""
    n1, n2, nt = W.shape
    out = np.empty((n1, n2, nt))
    for i in range(n1):
        for j in range(n2):
            for k in range(nt):
                t1 = c[k] * Z1[i, j, k] + s[k] * Z2[i, j, k]
                # y^j N^k_j d_yk (xi_i) y^i, with N e_r = 2a e_r + 2b e_t
                t2 = 2 * P[1, i, j, k] * (Zt[i, j, k] - xl[1, i, j, k])
                t3 = xl[0, i, j, k] * Gam[0, 0, 0, i, j, k] + xl[1, i, j, k] * Gam[1, 0, 0, i, j, k]
                out[i, j, k] = -2 * W[i, j, k] * ric[i, j, k] - 2 * (t1 - t2 - t3)
    return out


@dataclass
class NodeGeometry:
    """Geometry of a grid state at all nodes, mostly in the polar frame ``(e_r, e_t)``.

    ``M`` holds the metric components ``(g_rr, g_rt, g_tt)``; ``P`` the filtered
    spray data ``(a, b, a1, b1, b2)`` with ``a = G.e_r``, ``b = G.e_t`` and
    ``1`` / ``2`` marking theta-derivatives. ``Gamma`` (when requested) is
    indexed ``[i, j, k]`` over ``{r, t}``.
    """

    grid: SphereBundleGrid
    W: np.ndarray
    M: np.ndarray
    P: np.ndarray
    ric: np.ndarray
    eig_low: np.ndarray
    eig_high: np.ndarray
    Gamma: np.ndarray | None = None

    @property
    def g(self) -> np.ndarray:
        return polar_to_cartesian(self.M, self.grid)

    @property
    def ginv(self) -> np.ndarray:
        rr, rt, tt = self.M
        det = rr * tt - rt * rt
        return polar_to_cartesian((tt / det, -rt / det, rr / det), self.grid)


def _trig(grid):
    return np.cos(grid.theta), np.sin(grid.theta)


def node_geometry(W: np.ndarray, spec: Spectral, connection: bool = False, check: bool = True) -> NodeGeometry:
    """Metric, spray and Ricci scalar at every node (and the Chern connection if asked)."""
    grid = spec.grid
    c, s = _trig(grid)
    d = spec.derivatives(W, W_ORDERS_DT if connection else W_ORDERS)
    W0 = np.ascontiguousarray(d[(0, 0, 0)])
    M, eig, G = _metric_spray(W0, d[(0, 0, 1)], d[(0, 0, 2)], d[(1, 0, 0)], d[(0, 1, 0)],
                              d[(1, 0, 1)], d[(0, 1, 1)], c, s)
    lo = eig[0]
    if check and not np.all(lo > 0):
        bad = np.unravel_index(np.nanargmin(np.where(np.isfinite(lo), lo, -np.inf)), lo.shape)
        raise FlowDegeneracyError(f"fundamental tensor degenerate at node {tuple(int(i) for i in bad)}",
                                  node=bad, eigenvalue=float(lo[bad]))
    Gh = spec.forward(G)
    if spec.has_filter:
        Gh = Gh * spec.dealias
    Gd = spec.nodal(Gh, G_ORDERS)
    divx = spec.nodal(Gh[0] * spec._xfactor(1, 0) + Gh[1] * spec._xfactor(0, 1), [(0, 0, 0)])[(0, 0, 0)]
    P, D = _fiber_terms(Gd[(0, 0, 0)], Gd[(0, 0, 1)], Gd[(0, 0, 2)], c, s)
    Dd = spec.derivatives(D, [(1, 0, 0), (0, 1, 0)], filtered=True)
    ric = _ricci_scalar(W0, divx, Dd[(1, 0, 0)], Dd[(0, 1, 0)], P, c, s)
    geo = NodeGeometry(grid=grid, W=W0, M=M, P=P, ric=ric, eig_low=lo, eig_high=eig[1])
    if connection:
        geo.Gamma = _chern(M, d[(0, 0, 1)], d[(0, 0, 3)], d[(1, 0, 0)], d[(0, 1, 0)],
                           d[(1, 0, 1)], d[(0, 1, 1)], d[(1, 0, 2)], d[(0, 1, 2)], P, c, s)
    return geo


def ricci_rhs(state: FlowState, geo: NodeGeometry | None = None) -> np.ndarray:
    """``-2 F^2 Ric`` at unit fiber vectors, dealiased."""
    spec = state.grid.spectral
    if geo is None:
        geo = node_geometry(state.W, spec)
    return spec.filter(-2.0 * geo.W * geo.ric)


def deturck_terms(geo: NodeGeometry, Gamma_bar: np.ndarray, spec: Spectral):
    """DeTurck field ``xi`` (Cartesian components) and ``L_xi F^2`` at nodes."""
    c, s = _trig(spec.grid)
    xl, xi = _deturck_field(geo.M, geo.Gamma, Gamma_bar, c, s)
    d = spec.derivatives(xl[0], [(1, 0, 0), (0, 1, 0), (0, 0, 1)], filtered=True)
    zero = np.zeros_like(geo.W)
    # with a vanishing Ricci scalar the combined kernel returns -L_xi F^2
    lie = -_deturck_combine(geo.W, zero, d[(1, 0, 0)], d[(0, 1, 0)], d[(0, 0, 1)], xl, geo.P,
                            geo.Gamma, c, s)
    return xi, lie


def deturck_rhs(state: FlowState, Gamma_bar: np.ndarray, geo: NodeGeometry | None = None,
                return_xi: bool = False):
    """``-2 F^2 Ric - L_xi F^2`` with ``xi`` built against the background connection."""
    spec = state.grid.spectral
    c, s = _trig(spec.grid)
    if geo is None:
        geo = node_geometry(state.W, spec, connection=True)
    xl, xi = _deturck_field(geo.M, geo.Gamma, Gamma_bar, c, s)
    d = spec.derivatives(xl[0], [(1, 0, 0), (0, 1, 0), (0, 0, 1)], filtered=True)
    raw = _deturck_combine(geo.W, geo.ric, d[(1, 0, 0)], d[(0, 1, 0)], d[(0, 0, 1)], xl, geo.P,
                           geo.Gamma, c, s)
    out = spec.filter(raw)
    return (out, xi) if return_xi else out


def background_connection(W_bar: np.ndarray, grid: SphereBundleGrid) -> np.ndarray:
    """Polar-frame Chern coefficients of a background sample (same discretization)."""
    return node_geometry(W_bar, grid.spectral, connection=True).Gamma


def polar_connection_to_cartesian(Gp: np.ndarray, grid: SphereBundleGrid) -> np.ndarray:
    er, et = frame(grid)
    # B[i, a]: Cartesian component i of polar vector a; orthonormal, so B^-1 = B^T
    B = np.stack([er, et], axis=1)
    return np.einsum("ia...,abc...,jb...,kc...->ijk...", B, Gp, B, B)


# diagnostics ------------------------------------------------------------------


@dataclass
class DiagnosticsRecord:
    t: float
    max_abs_ric: float
    min_metric_eig: float
    integrability_residual: float
    parabolicity_margin: float
    sup_F2_change_per_step: float

    FIELDS = ("t", "max_abs_ric", "min_metric_eig", "integrability_residual",
              "parabolicity_margin", "sup_F2_change_per_step")
    CSV_HEADER = "t,max_abs_ric,min_metric_eig,integrability_residual,parabolicity_margin,sup_step_change"

    def as_row(self):
        return [getattr(self, f) for f in self.FIELDS]


def integrability_residual(g: np.ndarray, spec: Spectral) -> float:
    """``max |dg_ij/dy^k - dg_ik/dy^j|`` from spectral fiber derivatives of the nodal metric."""
    _, et = frame(spec.grid)
    gt = spec.derivatives(g, [(0, 0, 1)])[(0, 0, 1)]
    C = gt[:, :, None] * et[None, None, :]  # C[i, j, k] = d_y^k g_ij
    return float(np.max(np.abs(C - C.transpose(0, 2, 1, *range(3, C.ndim)))))


def reconstruction_residual(geo: NodeGeometry) -> float:
    """``max |g_ij y^i y^j - F^2|`` at unit fiber vectors."""
    er = np.stack(frame_like(geo.W))
    q = np.einsum("i...,ij...,j...->...", er, geo.g, er)
    return float(np.max(np.abs(q - geo.W)))


def frame_like(W):
    Nt = W.shape[-1]
    th = 2 * np.pi * np.arange(Nt) / Nt
    return np.broadcast_to(np.cos(th), W.shape), np.broadcast_to(np.sin(th), W.shape)


def diagnostics(state: FlowState, sup_change: float = 0.0, geo: NodeGeometry | None = None) -> DiagnosticsRecord:
    spec = state.grid.spectral
    if geo is None:
        geo = node_geometry(state.W, spec, check=False)
    return DiagnosticsRecord(
        t=float(state.t),
        max_abs_ric=float(np.max(np.abs(geo.ric))),
        min_metric_eig=float(np.min(geo.eig_low)),
        integrability_residual=integrability_residual(geo.g, spec),
        parabolicity_margin=float(1.0 / np.max(geo.eig_high)),
        sup_F2_change_per_step=float(sup_change),
    )
