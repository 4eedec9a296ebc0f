import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finslerflow.builtins import builtin
from finslerflow.core import PointTM, sample_points
from finslerflow.flow.run import ConfigError
from finslerflow.specs import SpecError, compile_expression, config_from_dict, load_structure, structure_from_spec


@given(x1=st.floats(-3, 3), x2=st.floats(-3, 3))
def test_expression_evaluation(x1, x2):
    f = compile_expression("1 + 0.5*sin(x1)**2 - exp(-x2)/2 + sqrt(1 + x1*x1) * cos(pi*x2)", 2)
    ref = 1 + 0.5 * np.sin(x1) ** 2 - np.exp(-x2) / 2 + np.sqrt(1 + x1 * x1) * np.cos(np.pi * x2)
    assert f([x1, x2]) == pytest.approx(ref, rel=1e-14, abs=1e-14)


@pytest.mark.parametrize("bad", ["__import__('os')", "x3", "x1.real", "lambda: 1", "sin(x1, x2)", "x1 if x2 else 1",
                                 "1 +", "abs(x1)", True])
def test_expression_whitelist(bad):
    with pytest.raises(SpecError):
        compile_expression(bad, 2)


def test_riemannian_spec_matches_builtin():
    spec = {"schema": 1, "kind": "riemannian", "a": [["1", "0"], ["0", "1 + 0.05*sin(x1)"]]}
    F, ref = structure_from_spec(spec), builtin("perturbed_flat")
    p = sample_points(ref, 10)
    np.testing.assert_allclose(F.f2_jet(p).c, ref.f2_jet(p).c, rtol=1e-14)


def test_randers_spec():
    spec = {"schema": 1, "kind": "randers", "a": [[1, 0], [0, 1]], "b": ["0.3", 0]}
    F, ref = structure_from_spec(spec), builtin("randers_constant")
    p = sample_points(ref, 5)
    np.testing.assert_allclose(F.f2(list(p.x), list(p.y)), ref.f2(list(p.x), list(p.y)))


@pytest.mark.parametrize("spec", [
    {"schema": 2, "kind": "builtin", "name": "flat"},
    {"schema": 1, "kind": "builtin", "name": "nope"},
    {"schema": 1, "kind": "builtin"},
    {"schema": 1, "kind": "riemannian", "a": [["1", "x1"], ["0", "1"]]},
    {"schema": 1, "kind": "riemannian", "a": [["1", "0"]]},
    {"schema": 1, "kind": "riemannian", "a": [["1", "0"], ["0", "1"]], "b": ["0", "0"]},
    {"schema": 1, "kind": "randers", "a": [["1", "0"], ["0", "1"]], "b": ["0"]},
    {"schema": 1, "kind": "finsler", "a": [["1"]]},
    {"schema": 1, "kind": "riemannian", "a": [["1", "0"], ["0", "1"]], "colour": "red"},
    {"schema": 1, "kind": "riemannian", "n": 3, "a": [["1", "0"], ["0", "1"]]},
])
def test_bad_structure_specs(spec):
    with pytest.raises(SpecError):
        structure_from_spec(spec)


def test_load_structure(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"schema": 1, "kind": "builtin", "name": "sphere"}))
    assert load_structure(str(path)).name == builtin("sphere").name
    assert load_structure("sphere").name == builtin("sphere").name
    with pytest.raises(FileNotFoundError):
        load_structure(str(tmp_path / "missing.json"))


def test_config_round_trip():
    cfg, F0 = config_from_dict({"schema": 1, "structure": "perturbed_flat", "kind": "deturck", "background": "flat",
                                "dt": 1e-3, "t_end": 0.01, "Nx": 16, "Ntheta": 16,
                                "tolerances": {"min_eig": 0.1}, "fiber_band": 2})
    assert cfg.kind == "deturck" and cfg.Nx == 16 and cfg.fiber_band == 2
    assert cfg.tolerances.min_eig == 0.1 and cfg.tolerances.integrability == 1e-7
    assert cfg.background.name == "flat"


@pytest.mark.parametrize("obj,err", [
    ({"schema": 1}, SpecError),
    ({"schema": 1, "structure": "flat", "dtt": 0.1}, SpecError),
    ({"schema": 1, "structure": "flat", "tolerances": {"integrability": 1e-7, "typo": 1}}, SpecError),
    ({"schema": 1, "structure": "flat", "Nx": 16.0}, SpecError),
    ({"schema": 1, "structure": "flat", "Nx": 24}, ConfigError),
    ({"schema": 1, "structure": "flat", "dt": "fast"}, SpecError),
    ({"schema": 1, "structure": "flat", "kind": "heat"}, ConfigError),
])
def test_bad_configs(obj, err):
    with pytest.raises(err):
        config_from_dict(obj)
