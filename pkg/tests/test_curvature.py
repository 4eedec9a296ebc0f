import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finslerflow.builtins import builtin, perturbed_flat
from finslerflow.core import PointTM, sample_points
from finslerflow.curvature import (DegenerateFlagError, contracted_hh_asymmetry, curvature_data, flag_curvature,
                                   isotropy_check, reduced_curvature, reduced_from_hh, ricci, ricci_scalar)

fiber = st.tuples(st.floats(-2, 2), st.floats(-2, 2)).filter(lambda v: np.hypot(*v) > 0.1)


def transverse(y, rng):
    X = rng.normal(size=y.shape)
    # rotate a quarter turn in the first two coordinates to stay off the y direction
    X[0], X[1] = -y[1] + 0.1 * X[0], y[0] + 0.1 * X[1]
    return X


def test_sphere_chart_constant_curvature():
    F = builtin("sphere")
    p = sample_points(F, 100, seed=5)
    np.testing.assert_allclose(ricci_scalar(F, p), 1.0, atol=1e-9)
    X = transverse(p.y, np.random.default_rng(0))
    np.testing.assert_allclose(flag_curvature(F, p, X), 1.0, atol=1e-9)


def test_hyperbolic_chart():
    F = builtin("hyperbolic")
    p = sample_points(F, 30, seed=1)
    np.testing.assert_allclose(ricci_scalar(F, p), -1.0, atol=1e-9)


def test_isotropy_of_space_form_in_three_dimensions():
    from finslerflow.builtins import space_form_chart
    F = space_form_chart(1.0, n=3)
    p = sample_points(F, 1, seed=0)
    single = PointTM(p.x[:, 0], p.y[:, 0])
    assert isotropy_check(F, single) < 1e-9
    assert ricci_scalar(F, single) == pytest.approx(2.0, abs=1e-9)


def test_anisotropic_metric_is_not_isotropic():
    F = builtin("anisotropic3")
    p = sample_points(F, 1, seed=0)
    assert isotropy_check(F, PointTM(p.x[:, 0], p.y[:, 0])) > 1e-4


@given(x1=st.floats(-3, 3), x2=st.floats(-3, 3), y=fiber, A=st.floats(0.01, 0.5))
def test_warped_product_gauss_curvature(x1, x2, y, A):
    # diag(1, G(x1)) has Gauss curvature -(sqrt G)''/sqrt G
    F = perturbed_flat(A)
    G = 1 + A * np.sin(x1)
    dG, ddG = A * np.cos(x1), -A * np.sin(x1)
    K = -(ddG / (2 * G) - dG**2 / (4 * G**2))
    ric = ricci_scalar(F, PointTM(np.array([x1, x2]), np.array(y)))
    assert ric == pytest.approx(K, abs=1e-10)


def test_reduced_curvature_two_ways_randers():
    F = builtin("randers_generic")
    p = sample_points(F, 100, seed=11)
    a, b = reduced_curvature(F, p), reduced_from_hh(F, p)
    assert np.max(np.abs(a - b)) <= 1e-6 * np.max(np.abs(a))


@given(y=fiber, lam=st.floats(0.3, 4.0))
def test_ricci_scalar_is_fiber_homogeneous_of_degree_zero(y, lam):
    F = builtin("randers_generic")
    x = np.array([0.4, -0.7])
    r1 = ricci_scalar(F, PointTM(x, np.array(y)))
    r2 = ricci_scalar(F, PointTM(x, lam * np.array(y)))
    assert r2 == pytest.approx(r1, rel=1e-9, abs=1e-12)


def test_ricci_scalar_scales_inversely_with_metric():
    F = builtin("randers_generic")
    p = sample_points(F, 10)
    np.testing.assert_allclose(ricci_scalar(F.scaled(2.0), p), ricci_scalar(F, p) / 4, rtol=1e-10, atol=1e-14)


def test_ricci_tensor_of_sphere_is_metric():
    F = builtin("sphere")
    p = sample_points(F, 5, seed=2)
    ric, T = ricci(F, p)
    a = np.array([[np.broadcast_to(np.asarray(v, float), (5,)) for v in row] for row in F.a(list(p.x))])
    np.testing.assert_allclose(T, a, atol=1e-9)


def test_ricci_tensor_reproduces_scalar():
    F = builtin("randers_generic")
    p = sample_points(F, 8, seed=6)
    ric, T = ricci(F, p)
    E = F.f2(list(p.x), list(p.y))
    np.testing.assert_allclose(np.einsum("ij...,i...,j...->...", T, p.y, p.y), E * ric, rtol=1e-9, atol=1e-12)


def test_flat_structures_have_no_curvature():
    for name in ("flat", "randers_constant", "sin_perturbed"):
        F = builtin(name)
        cd = curvature_data(F, sample_points(F, 20))
        assert np.max(np.abs(cd.R_hh)) < 1e-10
        assert np.max(np.abs(cd.ric_scalar)) < 1e-10


def test_parallel_flag_rejected():
    F = builtin("sphere")
    p = PointTM(np.array([0.1, 0.2]), np.array([1.0, 0.5]))
    with pytest.raises(DegenerateFlagError):
        flag_curvature(F, p, 2 * p.y)


def test_contracted_asymmetry_reported():
    F = builtin("randers_generic")
    asym = contracted_hh_asymmetry(F, sample_points(F, 10))
    assert asym.shape == (10,) and np.all(np.isfinite(asym)) and np.all(asym >= 0)
