"""Chern hh-curvature, reduced curvature, Ricci scalar and tensor, flag curvature."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .connection import LocalGeometry
from .core import FinslerStructure, PointTM
from .jets import Jet, jgrad


class DegenerateFlagError(ValueError):
    """The flag ``(y, X)`` spans less than a plane."""


@dataclass
class CurvatureData:
    R_hh: np.ndarray  # [i, j, k, l] = R_j^i_kl
    R_red: np.ndarray  # [i, k] = R^i_k
    ric_scalar: np.ndarray
    ric_tensor: np.ndarray


def hh_curvature(F: FinslerStructure, p: PointTM) -> np.ndarray:
    """``R[i, j, k, l] = R_j^i_kl``."""
    return LocalGeometry.at(F, p).R_hh.value


def reduced_curvature(F: FinslerStructure, p: PointTM) -> np.ndarray:
    """``R[i, k] = R^i_k``, 0-homogeneous in ``y``, from spray derivatives only."""
    return LocalGeometry.at(F, p).R_reduced.value


def reduced_from_hh(F: FinslerStructure, p: PointTM) -> np.ndarray:
    """The same tensor obtained by contracting the hh-curvature with ``y`` twice."""
    return LocalGeometry.at(F, p).R_contracted.value


def ricci_scalar(F: FinslerStructure, p: PointTM) -> np.ndarray:
    return LocalGeometry.at(F, p).ric_scalar.value


def ricci(F: FinslerStructure, p: PointTM):
    """Ricci scalar and the Ricci tensor ``Ric_ij = [F^2 Ric / 2]_{y^i y^j}``.

    The whole pipeline runs on jets carrying two extra fiber-displacement
    slots, so the fiber Hessian is exact rather than differenced.
    """
    n = p.n
    geo = LocalGeometry.at(F, p, order=4, fiber_order=2)
    ric = geo.ric_scalar
    half = geo.E * ric * 0.5
    eps = list(range(2 * n, 3 * n))
    hess = jgrad(jgrad(half, eps), eps)
    return ric.value, hess.value


def curvature_data(F: FinslerStructure, p: PointTM) -> CurvatureData:
    geo = LocalGeometry.at(F, p)
    ric, ric_t = ricci(F, p)
    return CurvatureData(R_hh=geo.R_hh.value, R_red=geo.R_reduced.value, ric_scalar=ric, ric_tensor=ric_t)


def _flag(geo: LocalGeometry, y, X, tol: float):
    g = geo.g.value
    R = geo.R_hh.value
    gXX = np.einsum("i...,ij...,j...->...", X, g, X)
    gXy = np.einsum("i...,ij...,j...->...", X, g, y)
    F2 = geo.E.value
    den = gXX * F2 - gXy**2
    if np.any(np.abs(den) < tol):
        raise DegenerateFlagError("flag (y, X) is degenerate: X is parallel to y")
    RXyy = np.einsum("j...,ijkl...,k...,l...->i...", y, R, X, y)
    num = np.einsum("i...,is...,s...->...", RXyy, g, X)
    return num / den


def flag_curvature(F: FinslerStructure, p: PointTM, X, tol: float = 1e-12) -> np.ndarray:
    """``K(x, y, X) = g(R(X, y) y, X) / (g(X, X) g(y, y) - g(X, y)^2)``."""
    X = np.asarray(X, dtype=float)
    geo = LocalGeometry.at(F, p)
    return _flag(geo, p.y, X, tol)


def isotropy_check(F: FinslerStructure, p: PointTM, samples: int = 8, seed: int = 0) -> float:
    """Largest spread of the flag curvature over random transverse directions at one point."""
    if samples < 2:
        raise ValueError("isotropy_check needs at least two flags")
    if p.batch_shape != ():
        raise ValueError("isotropy_check works on a single point")
    rng = np.random.default_rng(seed)
    geo = LocalGeometry.at(F, p)
    y = p.y
    Ks = []
    while len(Ks) < samples:
        X = rng.normal(size=p.n)
        # keep well away from parallel flags
        if abs(X @ y) > 0.95 * np.linalg.norm(X) * np.linalg.norm(y):
            continue
        Ks.append(float(_flag(geo, y, X, 1e-12)))
    return float(max(abs(k - Ks[0]) for k in Ks))


def contracted_hh_asymmetry(F: FinslerStructure, p: PointTM) -> np.ndarray:
    """``max_{j,l} |R_j^i_il - R_l^i_ij|``; reported only, never assumed zero."""
    R = LocalGeometry.at(F, p).R_hh.value
    t = np.einsum("ijil...->jl...", R)
    return np.max(np.abs(t - np.swapaxes(t, 0, 1)), axis=(0, 1))
