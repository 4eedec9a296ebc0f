import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finslerflow.builtins import BUILTINS, builtin, randers_constant
from finslerflow.core import (DegeneracyError, PointTM, Randers, Riemannian, StructureError, cartan_tensor,
                              fundamental_tensor, orthonormal_frame, sample_points, verify_structure)

unit = st.floats(-3.0, 3.0)
fiber = st.tuples(st.floats(-2, 2), st.floats(-2, 2)).filter(lambda v: np.hypot(*v) > 0.1)


def point(x, y):
    return PointTM(np.asarray(x, float), np.asarray(y, float))


def randers_metric_closed_form(a, b, y):
    """Fundamental tensor of ``sqrt(a(y,y)) + b(y)`` with constant coefficients."""
    alpha = np.sqrt(y @ a @ y)
    F = alpha + b @ y
    ay = a @ y / alpha
    return (F / alpha) * (a - np.outer(ay, ay)) + np.outer(ay + b, ay + b)


@given(y=fiber)
def test_randers_fundamental_tensor_closed_form(y):
    b = np.array([0.3, -0.2])
    F = randers_constant(tuple(b))
    md = fundamental_tensor(F, point([0.1, 0.2], y))
    np.testing.assert_allclose(md.g, randers_metric_closed_form(np.eye(2), b, np.array(y)), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtins_pass_verification(name):
    rep = verify_structure(builtin(name), samples=30)
    assert rep.passed, rep


@given(x=st.tuples(unit, unit), y=fiber)
def test_reconstruction_and_cartan_properties(x, y):
    F = builtin("randers_generic")
    p = point(x, y)
    md = fundamental_tensor(F, p)
    yv = np.array(y)
    assert yv @ md.g @ yv == pytest.approx(md.F**2, rel=1e-12)
    C = cartan_tensor(F, p)
    np.testing.assert_allclose(np.einsum("ijk,k->ij", C, yv), 0.0, atol=1e-12)
    np.testing.assert_allclose(C, C.transpose(1, 0, 2), atol=1e-13)
    np.testing.assert_allclose(C, C.transpose(0, 2, 1), atol=1e-13)
    np.testing.assert_allclose(md.g @ md.g_inv, np.eye(2), atol=1e-12)


def test_batched_points():
    F = builtin("randers_generic")
    p = sample_points(F, 7, seed=3)
    md = fundamental_tensor(F, p)
    assert md.g.shape == (2, 2, 7)
    single = fundamental_tensor(F, point(p.x[:, 4], p.y[:, 4]))
    np.testing.assert_allclose(md.g[..., 4], single.g, rtol=1e-14)


@given(x=st.tuples(unit, unit, unit), y=st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
       .filter(lambda v: np.linalg.norm(v) > 0.1))
def test_orthonormal_frame(x, y):
    F = builtin("anisotropic3")
    p = point(x, y)
    fr = orthonormal_frame(F, p)
    g = fundamental_tensor(F, p).g
    np.testing.assert_allclose(fr.u.T @ g @ fr.u, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(fr.u[:, -1], np.array(y) / np.sqrt(np.array(y) @ g @ np.array(y)), rtol=1e-12)
    np.testing.assert_allclose(fr.v @ fr.u, np.eye(3), atol=1e-12)


def test_randers_drift_too_long_rejected():
    with pytest.raises(StructureError):
        Randers(2, lambda x: [[1.0, 0.0], [0.0, 1.0]], lambda x: [1.2, 0.0])


def test_indefinite_metric_raises():
    F = Riemannian(2, lambda x: [[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(DegeneracyError) as info:
        fundamental_tensor(F, point([0, 0], [1, 0]))
    assert info.value.eigenvalue < 0
    assert not verify_structure(F, samples=5).passed


def test_zero_fiber_vector_rejected():
    with pytest.raises(ValueError):
        point([0, 0], [0, 0])


def test_scaled_structure():
    F = builtin("randers_generic")
    p = sample_points(F, 5)
    np.testing.assert_allclose(fundamental_tensor(F.scaled(3.0), p).g, 9 * fundamental_tensor(F, p).g,
                               rtol=1e-13)
    with pytest.raises(StructureError):
        F.scaled(-1.0)
