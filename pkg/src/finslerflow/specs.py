"""JSON structure specifications and flow configurations.

A structure is given either by a built-in name or by coefficient
expressions in the coordinates ``x1 .. xn``::

    {"schema": 1, "kind": "builtin", "name": "sphere"}
    {"schema": 1, "kind": "riemannian", "a": [["1 + 0.05*sin(x1)", "0"], ["0", "1 + 0.05*sin(x1)"]]}
    {"schema": 1, "kind": "randers", "a": [["1", "0"], ["0", "1"]], "b": ["0.3", "0"]}

Expressions may use numbers, ``pi``, ``+ - * / **``, parentheses and the
functions ``sin cos exp sqrt``. Unknown keys are rejected.
"""
from __future__ import annotations

import ast
import json
import math
import operator
from pathlib import Path

from . import jets
from .builtins import BUILTINS, builtin
from .core import FinslerStructure, Randers, Riemannian
from .flow.run import FlowConfig, Tolerances

SCHEMA_VERSION = 1


class SpecError(ValueError):
    """Malformed structure specification or configuration."""


_FUNCS = {"sin": jets.sin, "cos": jets.cos, "exp": jets.exp, "sqrt": jets.sqrt}
_CONSTS = {"pi": math.pi}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def compile_expression(text: str, n: int):
    """Compile a coefficient expression into ``f(x)`` working on numbers, arrays and jets."""
    if not isinstance(text, (str, int, float)) or isinstance(text, bool):
        raise SpecError(f"expression must be a string or number, got {text!r}")
    src = str(text)
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise SpecError(f"cannot parse expression {src!r}: {exc.msg}") from None
    names = {f"x{i + 1}": i for i in range(n)}

    def check(node):
        if isinstance(node, ast.Expression):
            return check(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return
        if isinstance(node, ast.Name):
            if node.id not in names and node.id not in _CONSTS:
                raise SpecError(f"unknown name {node.id!r} in {src!r}")
            return
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            check(node.left)
            check(node.right)
            return
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            check(node.operand)
            return
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS \
                and len(node.args) == 1 and not node.keywords:
            check(node.args[0])
            return
        raise SpecError(f"unsupported syntax in {src!r}")

    check(tree)

    def ev(node, x):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return x[names[node.id]] if node.id in names else _CONSTS[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](ev(node.left, x), ev(node.right, x))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](ev(node.operand, x))
        return _FUNCS[node.func.id](ev(node.args[0], x))

    body = tree.body
    return lambda x: ev(body, x)


def _check_keys(obj: dict, allowed: set, required: set, what: str):
    if not isinstance(obj, dict):
        raise SpecError(f"{what} must be a JSON object")
    extra = set(obj) - allowed
    if extra:
        raise SpecError(f"{what}: unknown keys {sorted(extra)}")
    missing = required - set(obj)
    if missing:
        raise SpecError(f"{what}: missing keys {sorted(missing)}")


def _check_schema(obj: dict, what: str):
    if obj.get("schema") != SCHEMA_VERSION:
        raise SpecError(f"{what}: schema must be {SCHEMA_VERSION}, got {obj.get('schema')!r}")


def structure_from_spec(spec) -> FinslerStructure:
    """Build a structure from a spec dict or a built-in name."""
    if isinstance(spec, str):
        if spec in BUILTINS:
            return builtin(spec)
        raise SpecError(f"unknown built-in structure {spec!r}")
    _check_keys(spec, {"schema", "kind", "name", "n", "a", "b"}, {"schema", "kind"}, "structure")
    _check_schema(spec, "structure")
    kind = spec["kind"]
    if kind == "builtin":
        if set(spec) - {"schema", "kind", "name"} or "name" not in spec:
            raise SpecError("builtin structure takes exactly 'name'")
        return structure_from_spec(spec["name"])
    if kind not in ("riemannian", "randers"):
        raise SpecError(f"structure kind must be builtin, riemannian or randers, got {kind!r}")
    a = spec.get("a")
    if not isinstance(a, list) or not a or any(not isinstance(r, list) or len(r) != len(a) for r in a):
        raise SpecError("'a' must be a square matrix of expressions")
    n = len(a)
    if spec.get("n", n) != n:
        raise SpecError(f"'n' = {spec['n']} disagrees with the size of 'a' ({n})")
    ca = [[compile_expression(a[i][j], n) for j in range(n)] for i in range(n)]
    for i in range(n):
        for j in range(i):
            if str(a[i][j]).replace(" ", "") != str(a[j][i]).replace(" ", ""):
                raise SpecError("'a' must be symmetric (entries [i][j] and [j][i] must match)")

    def afun(x):
        return [[ca[i][j](x) for j in range(n)] for i in range(n)]

    if kind == "riemannian":
        if "b" in spec:
            raise SpecError("riemannian structures take no 'b'")
        return Riemannian(n, afun, name="riemannian")
    b = spec.get("b")
    if not isinstance(b, list) or len(b) != n:
        raise SpecError(f"'b' must be a list of {n} expressions")
    cb = [compile_expression(v, n) for v in b]
    return Randers(n, afun, lambda x: [f(x) for f in cb], name="randers", validate=False)


def load_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(str(p))
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON in {p}: {exc.msg} (line {exc.lineno})") from None


def load_structure(arg: str) -> FinslerStructure:
    """A structure from a JSON file path, or from a built-in name."""
    if Path(arg).is_file():
        return structure_from_spec(load_json(arg))
    if arg in BUILTINS:
        return builtin(arg)
    raise FileNotFoundError(arg)


CONFIG_KEYS = {"schema", "structure", "kind", "background", "dt", "t_end", "Nx", "Ntheta", "tolerances",
               "diagnostics_every", "snapshot_every", "fiber_band", "cfl_guard"}


def config_from_dict(obj: dict):
    """``(FlowConfig, initial structure)`` from a configuration object."""
    _check_keys(obj, CONFIG_KEYS, {"schema", "structure"}, "config")
    _check_schema(obj, "config")
    F0 = structure_from_spec(obj["structure"])
    bg = obj.get("background")
    tol = obj.get("tolerances", {})
    _check_keys(tol, {"integrability", "min_eig"}, set(), "tolerances")
    defaults = FlowConfig()
    try:
        cfg = FlowConfig(
            kind=str(obj.get("kind", defaults.kind)),
            dt=float(obj.get("dt", defaults.dt)),
            t_end=float(obj.get("t_end", defaults.t_end)),
            Nx=_int(obj.get("Nx", defaults.Nx), "Nx"),
            Ntheta=_int(obj.get("Ntheta", defaults.Ntheta), "Ntheta"),
            background=None if bg is None else structure_from_spec(bg),
            tolerances=Tolerances(float(tol.get("integrability", 1e-7)), float(tol.get("min_eig", 1e-6))),
            diagnostics_every=_int(obj.get("diagnostics_every", defaults.diagnostics_every), "diagnostics_every"),
            snapshot_every=_int(obj.get("snapshot_every", defaults.snapshot_every), "snapshot_every"),
            fiber_band=None if obj.get("fiber_band") is None else _int(obj["fiber_band"], "fiber_band"),
            cfl_guard=bool(obj.get("cfl_guard", True)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(f"config: {exc}") from None
    cfg.validate()
    return cfg, F0


def _int(v, name):
    if isinstance(v, bool) or not isinstance(v, int):
        raise SpecError(f"{name} must be an integer, got {v!r}")
    return v
