import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finslerflow.builtins import builtin
from finslerflow.core import PointTM, StructureError
from finslerflow.flow.grid import (FlowState, GridStructure, SphereBundleGrid, TrigInterpolant, fft_workers,
                                   sample_structure, spectral_jet)

GRID = SphereBundleGrid(16, 16)


@pytest.mark.parametrize("Nx,Nt", [(8, 16), (16, 24), (0, 16), (32, 12)])
def test_grid_sizes_must_be_powers_of_two(Nx, Nt):
    with pytest.raises(ValueError):
        SphereBundleGrid(Nx, Nt)


def test_state_shape_checked():
    with pytest.raises(ValueError):
        FlowState(0.0, np.ones((16, 16, 8)), GRID)


def _trig_field(X1, X2, T):
    return 1.5 + 0.2 * np.sin(X1 + 2 * X2) * np.cos(3 * T) + 0.1 * np.cos(4 * X2 - T)


def test_spectral_derivatives_exact_on_trig_polynomials():
    X1, X2, T = np.meshgrid(GRID.x, GRID.x, GRID.theta, indexing="ij")
    f = _trig_field(X1, X2, T)
    d = GRID.spectral.derivatives(f, [(1, 0, 0), (0, 1, 1), (0, 0, 2)])
    np.testing.assert_allclose(d[(1, 0, 0)], 0.2 * np.cos(X1 + 2 * X2) * np.cos(3 * T), atol=1e-13)
    np.testing.assert_allclose(d[(0, 1, 1)], -1.2 * np.cos(X1 + 2 * X2) * np.sin(3 * T)
                               + 0.4 * np.cos(4 * X2 - T), atol=1e-12)
    np.testing.assert_allclose(d[(0, 0, 2)], -1.8 * np.sin(X1 + 2 * X2) * np.cos(3 * T)
                               - 0.1 * np.cos(4 * X2 - T), atol=1e-12)


@given(x1=st.floats(0, 2 * np.pi), x2=st.floats(0, 2 * np.pi), th=st.floats(0, 2 * np.pi))
def test_interpolant_is_exact_off_grid(x1, x2, th):
    X1, X2, T = np.meshgrid(GRID.x, GRID.x, GRID.theta, indexing="ij")
    it = TrigInterpolant(_trig_field(X1, X2, T))
    assert it(x1, x2, th) == pytest.approx(_trig_field(x1, x2, th), abs=1e-13)
    assert it(x1, x2, th, (0, 0, 1)) == pytest.approx(
        -0.6 * np.sin(x1 + 2 * x2) * np.sin(3 * th) + 0.1 * np.sin(4 * x2 - th), abs=1e-12)


def test_band_limit_removes_high_fiber_modes():
    X1, X2, T = np.meshgrid(GRID.x, GRID.x, GRID.theta, indexing="ij")
    f = np.cos(X1) * (1 + np.cos(2 * T) + np.sin(5 * T))
    np.testing.assert_allclose(GRID.spectral.band_limit(f, 2), np.cos(X1) * (1 + np.cos(2 * T)), atol=1e-14)


def test_euclidean_jet():
    state = FlowState(0.0, np.ones(GRID.shape), GRID)
    E = spectral_jet(state, (3, 5, 7))
    assert E[(0, 0, 2, 0)] == pytest.approx(2.0)
    assert E[(0, 0, 0, 2)] == pytest.approx(2.0)
    assert E[(0, 0, 1, 1)] == pytest.approx(0.0, abs=1e-14)
    assert E[(1, 0, 1, 0)] == pytest.approx(0.0, abs=1e-14)


def test_scaled_constant_state_jet():
    state = FlowState(0.0, 1.5 * np.ones(GRID.shape), GRID)
    E = spectral_jet(state, (0.3, 1.1, 2.0))
    assert E[(0, 0, 2, 0)] / 2 == pytest.approx(1.5)
    assert E[(0, 0, 1, 1)] == pytest.approx(0.0, abs=1e-13)


def test_jets_match_analytic_randers_at_all_nodes():
    F = builtin("randers_constant")
    state = sample_structure(F, GRID)
    p = GRID.node_points()
    ref = F.f2_jet(p, order=4)
    got = GridStructure(state).f2_jet(p, order=4)
    assert np.max(np.abs(got.c - ref.c)) < 1e-8


@given(lam=st.floats(0.2, 5.0), th=st.floats(0, 2 * np.pi))
def test_grid_structure_is_two_homogeneous(lam, th):
    G = GridStructure(sample_structure(builtin("randers_generic"), GRID))
    y = np.array([np.cos(th), np.sin(th)])
    a = G.f2([0.4, 1.0], list(y))
    b = G.f2([0.4, 1.0], list(lam * y))
    assert b == pytest.approx(lam**2 * a, rel=1e-12)
    E = G.f2_jet(PointTM(np.array([0.4, 1.0]), lam * y), order=2)
    # Euler: y^i dF^2/dy^i = 2 F^2
    assert lam * (y[0] * E[(0, 0, 1, 0)] + y[1] * E[(0, 0, 0, 1)]) == pytest.approx(2 * E.value, rel=1e-10)


def test_sample_structure_requires_two_dimensions():
    with pytest.raises(StructureError):
        sample_structure(builtin("anisotropic3"), GRID)


def test_thread_cap_from_environment(monkeypatch):
    monkeypatch.setenv("FINSLERFLOW_THREADS", "3")
    assert fft_workers() == 3
    monkeypatch.setenv("FINSLERFLOW_THREADS", "many")
    with pytest.raises(ValueError):
        fft_workers()
