import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finslerflow import jets
from finslerflow.jets import Jet, JetError, jeinsum, jet_space, jinv, jstack, space_of

mpmath.mp.dps = 40


def indices(nvar, order):
    return [a for a in itertools.product(range(order + 1), repeat=nvar) if sum(a) <= order]


def seeded(point, order=4):
    sp = jet_space(len(point), order)
    return [Jet.seed(sp, i, v) for i, v in enumerate(point)]


def test_polynomial_partials_are_exact():
    x, y = seeded([0.7, -1.3])
    f = x**3 * y**2 + 2.0 * x * y - 5.0 * y**4
    X, Y = 0.7, -1.3
    expected = {
        (0, 0): X**3 * Y**2 + 2 * X * Y - 5 * Y**4,
        (1, 0): 3 * X**2 * Y**2 + 2 * Y,
        (0, 1): 2 * X**3 * Y + 2 * X - 20 * Y**3,
        (2, 0): 6 * X * Y**2,
        (1, 1): 6 * X**2 * Y + 2,
        (0, 2): 2 * X**3 - 60 * Y**2,
        (3, 0): 6 * Y**2,
        (2, 1): 12 * X * Y,
        (1, 2): 6 * X**2,
        (0, 3): -120 * Y,
        (4, 0): 0.0,
        (3, 1): 12 * Y,
        (2, 2): 12 * X,
        (1, 3): 0.0,
        (0, 4): -120.0,
    }
    for idx, v in expected.items():
        assert f[idx] == pytest.approx(v, rel=4e-16, abs=1e-13)


def _fd_oracle(fun, point, idx):
    return float(mpmath.diff(lambda *a: fun(*a), [mpmath.mpf(p) for p in point], idx))


COMPOSITIONS = [
    (lambda m, x, y, z: m.exp(m.sin(x) * y) + m.sqrt(1 + x * x + z * z),
     lambda x, y, z: jets.exp(jets.sin(x) * y) + jets.sqrt(1 + x * x + z * z)),
    (lambda m, x, y, z: m.sqrt(2 + m.sin(x + 2 * y)) * m.exp(-z * x),
     lambda x, y, z: jets.sqrt(2 + jets.sin(x + 2 * y)) * jets.exp(-z * x)),
    (lambda m, x, y, z: m.sin(m.exp(x / 3) * m.sqrt(1 + y * y)) / (2 + m.cos(z)),
     lambda x, y, z: jets.sin(jets.exp(x / 3) * jets.sqrt(1 + y * y)) / (2 + jets.cos(z))),
]


@pytest.mark.parametrize("which", range(len(COMPOSITIONS)))
@given(pt=st.tuples(*[st.floats(-1.5, 1.5) for _ in range(3)]))
def test_mixed_partials_match_finite_differences(which, pt):
    mfun, jfun = COMPOSITIONS[which]
    f = jfun(*seeded(list(pt)))
    for idx in indices(3, 4):
        ref = _fd_oracle(lambda *a: mfun(mpmath, *a), pt, idx)
        assert abs(f[idx] - ref) <= 1e-5 * max(1.0, abs(ref)), idx


def test_batched_jets_match_scalar_jets():
    xs = np.array([0.1, 0.4, -0.9])
    x, y = seeded([xs, 2 * xs])
    fb = jets.exp(x * y) * jets.sin(y)
    for k, v in enumerate(xs):
        a, b = seeded([v, 2 * v])
        fs = jets.exp(a * b) * jets.sin(b)
        np.testing.assert_allclose(fb.c[:, k], fs.c, rtol=1e-14, atol=1e-14)


def test_derivative_shifts_order():
    x, y = seeded([0.3, 0.2])
    f = jets.sin(x) * y
    fx = f.d(0)
    assert fx.order == 3
    assert fx[(0, 0)] == pytest.approx(math.cos(0.3) * 0.2)
    assert fx[(1, 1)] == pytest.approx(-math.sin(0.3))


def test_jinv_is_inverse_in_truncated_algebra():
    x, y = seeded([0.3, -0.4])
    m = jstack([[2 + jets.sin(x), x * y], [x * y, 3 + y * y]])
    prod = jeinsum("ij,jk->ik", jinv(m), m)
    eye = np.zeros_like(prod.c)
    eye[0] = np.eye(2)
    np.testing.assert_allclose(prod.c, eye, atol=1e-13)


def test_jeinsum_is_leibniz_product():
    x, y = seeded([0.5, 0.9])
    a = jstack([jets.sin(x), y])
    b = jstack([jets.exp(y), x * x])
    dot = jeinsum("i,i->", a, b)
    direct = jets.sin(x) * jets.exp(y) + y * x * x
    np.testing.assert_allclose(dot.c, direct.c, atol=1e-14)


def test_nested_groups_truncate_independently():
    sp = space_of(((2, 4), (1, 2)))
    x, y, e = (Jet.seed(sp, i, v) for i, v in enumerate([0.2, 0.1, 0.0]))
    f = jets.exp(x + e) * y
    assert f[(4, 0, 2)] == pytest.approx(math.exp(0.2) * 0.1)
    with pytest.raises(JetError):
        f[(0, 0, 3)]


def test_order_limit_enforced():
    with pytest.raises(JetError):
        jet_space(2, 5)


def test_bad_multi_index_rejected():
    x, _ = seeded([0.0, 1.0])
    with pytest.raises(JetError):
        x[(1,)]
    with pytest.raises(JetError):
        x[(3, 2)]


@given(p=st.floats(-2.5, 2.5), v=st.floats(0.2, 3.0))
def test_pow_and_log_inverse(p, v):
    (x,) = seeded([v])
    back = (x.log() * p).exp()
    np.testing.assert_allclose(back.c, x.pow(p).c, rtol=1e-10, atol=1e-10)


def test_jstack_broadcasts_constants_against_batched_jets():
    x, y = seeded([np.array([0.1, 0.2, 0.3]), np.array([1.0, 2.0, 3.0])])
    t = jstack([x * y, 0.5])
    assert t.c.shape == (x.space.size, 2, 3)
    np.testing.assert_allclose(t.value[1], 0.5)
