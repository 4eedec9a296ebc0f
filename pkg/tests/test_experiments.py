import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finslerflow import jets
from finslerflow.builtins import builtin
from finslerflow.core import sample_points
from finslerflow.flow.experiments import (PositivityError, compare_pullback, einstein_constant, shrink_factor,
                                          shrinker_residual, soliton_class, soliton_residual, soliton_terms)
from finslerflow.flow.run import FlowConfig

from test_connection import fd_christoffel


def test_einstein_constants():
    assert einstein_constant(builtin("sphere")) == pytest.approx(1.0, abs=1e-9)
    assert einstein_constant(builtin("randers_constant")) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("t", [0.0, 0.1, 0.2])
def test_shrinking_sphere(t):
    F = builtin("sphere")
    assert shrinker_residual(F, einstein_constant(F), t) < 1e-8


@given(t=st.floats(0.0, 10.0))
@settings(max_examples=10)
def test_flat_is_stationary(t):
    assert shrinker_residual(builtin("randers_constant"), 0.0, t, samples=10) < 1e-12


def test_positivity_violation():
    assert shrink_factor(1.0, 0.2) == pytest.approx(0.6)
    with pytest.raises(PositivityError):
        shrink_factor(1.0, 0.5)
    with pytest.raises(PositivityError):
        shrinker_residual(builtin("sphere"), 1.0, 0.7)


def test_soliton_flat_cases():
    F = builtin("flat")
    assert soliton_residual(F, lambda xs, ys: [0.0, 0.0], 0.0) == (0.0, "steady")
    res, cls = soliton_residual(F, lambda xs, ys: [0.4, -1.2], 0.0)
    assert res < 1e-14 and cls == "steady"


def test_soliton_classification():
    assert soliton_class(0.3) == "shrinking"
    assert soliton_class(0.0) == "steady"
    assert soliton_class(-2.0) == "expanding"


def _fd_ricci_quadratic(F, x, y, h=1e-4):
    """``Ric(y, y)`` of a 2-D Riemannian structure from differenced Christoffel symbols."""
    n = 2
    G = fd_christoffel(F, x)
    dG = np.zeros((n,) + G.shape)  # dG[k, i, j, l] = d_k Gamma^i_jl
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        dG[k] = (fd_christoffel(F, x + e) - fd_christoffel(F, x - e)) / (2 * h)
    # Ric_jl = d_i Gamma^i_jl - d_l Gamma^i_ji + Gamma^i_ip Gamma^p_jl - Gamma^i_lp Gamma^p_ji
    ric = (np.einsum("iijl->jl", dG) - np.einsum("liji->jl", dG)
           + np.einsum("iip,pjl->jl", G, G) - np.einsum("ilp,pji->jl", G, G))
    return y @ ric @ y


def _fd_lie(F, V, DV, x, y, h=1e-4):
    f = lambda s: float(F.f2(list(x + s * V(x)), list(y + s * DV(x) @ y)))
    return (f(h) - f(-h)) / (2 * h)


@given(c=st.lists(st.floats(-0.5, 0.5), min_size=4, max_size=4))
@settings(max_examples=8)
def test_soliton_residual_matches_finite_differences(c):
    F = builtin("perturbed_flat")
    lam = 0.3

    def Vj(xs, ys):
        return [c[0] * jets.sin(xs[1]) + c[1], c[2] * jets.cos(xs[0]) + c[3] * xs[0]]

    V = lambda x: np.array([c[0] * np.sin(x[1]) + c[1], c[2] * np.cos(x[0]) + c[3] * x[0]])
    DV = lambda x: np.array([[0.0, c[0] * np.cos(x[1])], [-c[2] * np.sin(x[0]) + c[3], 0.0]])
    p = sample_points(F, 10, seed=5)
    res, cls = soliton_residual(F, Vj, lam, samples=10, seed=5)
    ref = 0.0
    for m in range(10):
        x, y = p.x[:, m], p.y[:, m]
        E = float(F.f2(list(x), list(y)))
        ref = max(ref, abs(2 * _fd_ricci_quadratic(F, x, y) + _fd_lie(F, V, DV, x, y) - 2 * lam * E))
    assert cls == "shrinking"
    assert res == pytest.approx(ref, abs=1e-5)


def test_soliton_terms_shapes():
    F = builtin("randers_generic")
    ric2, lie, e2 = soliton_terms(F, lambda xs, ys: [xs[1], 0.0], sample_points(F, 4))
    assert ric2.shape == lie.shape == e2.shape == (4,)


# correspondence experiment (small grids; the full-size runs live in the acceptance suite) ---


def test_flat_correspondence_is_trivial():
    cfg = FlowConfig(dt=1e-3, t_end=0.01, Nx=16, Ntheta=16)
    cmp = compare_pullback(cfg, builtin("flat"))
    assert cmp.final == 0.0
    assert cmp.diffeo.is_identity


def test_correspondence_on_coarse_grid():
    cfg = FlowConfig(dt=1e-3, t_end=0.02, Nx=16, Ntheta=16, background=builtin("flat"))
    cmp = compare_pullback(cfg, builtin("perturbed_flat"), compare_every=10)
    assert cmp.ricci.ok and cmp.deturck.ok
    assert [round(t, 12) for t in cmp.times] == [0.0, 0.01, 0.02]
    assert cmp.final < 1e-8
    assert np.max(np.abs(cmp.diffeo.disp)) > 1e-5
    assert cmp.xi_fiber_variation < 1e-10


def test_correspondence_needs_riemannian_data():
    with pytest.raises(ValueError):
        compare_pullback(FlowConfig(Nx=16, Ntheta=16), builtin("randers_constant"))
