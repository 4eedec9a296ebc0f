"""Catalogue of analytic structures used by tests, scripts and the CLI."""
from __future__ import annotations

import numpy as np

from .core import FinslerStructure, Randers, Riemannian
from .jets import cos, sin


def flat(n: int = 2) -> Riemannian:
    return Riemannian(n, lambda x: [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)], name="flat")


def constant_riemannian(a=((2.0, 0.0), (0.0, 1.0))) -> Riemannian:
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    return Riemannian(n, lambda x: [[float(a[i, j]) for j in range(n)] for i in range(n)], name="constant")


def sin_perturbed() -> Riemannian:
    """``diag(1 + sin(x1)/2, 1)`` on the 2-torus (intrinsically flat)."""
    return Riemannian(2, lambda x: [[1 + 0.5 * sin(x[0]), 0.0], [0.0, 1.0]], name="sin_perturbed")


def perturbed_flat(amplitude: float = 0.05) -> Riemannian:
    """``diag(1, 1 + A sin x1)``: curved for ``A != 0`` and not a multiple of the identity.

    (Perturbing the ``x1 x1`` entry instead would stay flat, and a conformal
    factor would make the DeTurck field against the initial data vanish.)
    """
    A = float(amplitude)

    def a(x):
        return [[1.0, 0.0], [0.0, 1 + A * sin(x[0])]]

    return Riemannian(2, a, name=f"perturbed_flat({A})")


def space_form_chart(K: float = 1.0, n: int = 2) -> Riemannian:
    """``a = identity / (1 + K|x|^2/4)^2``, constant sectional curvature ``K``.

    For ``K < 0`` the chart only covers ``|x| < 2/sqrt(-K)``; the sampling box
    is shrunk accordingly.
    """
    K = float(K)

    def a(x):
        r2 = 0.0
        for xi in x:
            r2 = r2 + xi * xi
        f = (1 + 0.25 * K * r2) ** -2
        return [[f if i == j else 0.0 for j in range(n)] for i in range(n)]

    radius = 1.0 if K >= 0 else min(1.0, 0.6 / np.sqrt(-K))
    return Riemannian(n, a, name=f"space_form({K})", sample_radius=radius)


def sphere_chart() -> Riemannian:
    return space_form_chart(1.0)


def anisotropic3() -> Riemannian:
    """A generic curved metric on the 3-torus (not of scalar flag curvature)."""

    def a(x):
        return [[1 + 0.3 * sin(x[1]), 0.1 * sin(x[0] + x[2]), 0.0],
                [0.1 * sin(x[0] + x[2]), 1 + 0.2 * cos(x[2]), 0.05 * cos(x[0])],
                [0.0, 0.05 * cos(x[0]), 1 + 0.25 * sin(x[0])]]

    return Riemannian(3, a, name="anisotropic3")


def randers_constant(b=(0.3, 0.0)) -> Randers:
    b = [float(v) for v in b]
    n = len(b)
    return Randers(n, lambda x: [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)],
                   lambda x: list(b), name="randers_constant")


def randers_generic() -> Randers:
    """Randers structure with x-dependent ``a`` and ``b``."""

    def a(x):
        return [[1 + 0.3 * sin(x[0]), 0.1 * cos(x[1])], [0.1 * cos(x[1]), 1 + 0.2 * cos(x[1])]]

    def b(x):
        return [0.2 * sin(x[1]), 0.1 * cos(x[0])]

    return Randers(2, a, b, name="randers_generic")


def funk(n: int = 2) -> Randers:
    """Funk metric of the unit ball: a non-Riemannian Randers structure with flag curvature -1/4."""

    def parts(x):
        r2 = 0.0
        for xi in x:
            r2 = r2 + xi * xi
        return r2, 1 - r2

    def a(x):
        r2, d = parts(x)
        return [[((d if i == j else 0.0) + x[i] * x[j]) / (d * d) for j in range(n)] for i in range(n)]

    def b(x):
        _, d = parts(x)
        return [xi / d for xi in x]

    # sampling box |x_i| <= 1/2 stays inside the ball
    return Randers(n, a, b, name="funk", sample_radius=0.5)


BUILTINS = {
    "flat": flat,
    "constant": constant_riemannian,
    "sin_perturbed": sin_perturbed,
    "perturbed_flat": perturbed_flat,
    "sphere": sphere_chart,
    "hyperbolic": lambda: space_form_chart(-1.0),
    "anisotropic3": anisotropic3,
    "randers_constant": randers_constant,
    "randers_generic": randers_generic,
    "funk": funk,
}


def builtin(name: str) -> FinslerStructure:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise KeyError(f"unknown built-in structure {name!r}; choose from {sorted(BUILTINS)}") from None
