"""Command-line interface.

Exit statuses: 0 success, 2 input or configuration error, 3 numerical failure.
Every failure writes one ``<category>: <reason>`` line to stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .core import DegeneracyError, PointTM, StructureError, sample_points, verify_structure
from .curvature import DegenerateFlagError, curvature_data
from .deturck import DiffeoBreakdownError
from .flow.experiments import (PositivityError, compare_pullback, einstein_constant, shrink_factor,
                               shrinker_residual, soliton_residual)
from .flow.rhs import DiagnosticsRecord, FlowDegeneracyError
from .flow.run import ConfigError, run_flow
from .specs import SpecError, compile_expression, config_from_dict, load_json, load_structure

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class CliError(Exception):
    def __init__(self, category: str, reason: str, status: int):
        super().__init__(f"{category}: {reason}")
        self.status = status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_INPUT)


def fmt(x) -> str:
    """Float formatting for machine formats (17 significant digits)."""
    return f"{float(x):.17g}"


def short(x) -> str:
    """Shortest text that still round-trips, for human-facing reports."""
    return repr(float(x))


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(fmt(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def emit(obj: dict, fmt_name: str, out=None):
    """Write a report as deterministic JSON or ``key=value`` text lines."""
    out = out or sys.stdout
    if fmt_name == "json":
        out.write(json.dumps(_json_ready(obj), sort_keys=False, indent=1) + "\n")
        return
    for k, v in obj.items():
        if isinstance(v, (float, np.floating)):
            out.write(f"{k}={short(v)}\n")
        elif isinstance(v, (list, np.ndarray, dict)):
            out.write(f"{k}={json.dumps(_json_ready(v))}\n")
        else:
            out.write(f"{k}={v}\n")


def _structure(arg):
    try:
        return load_structure(arg)
    except FileNotFoundError:
        raise CliError("structure", "file not found", EXIT_INPUT) from None


def _config(path):
    try:
        return config_from_dict(load_json(path))
    except FileNotFoundError:
        raise CliError("config", "file not found", EXIT_INPUT) from None


def _open_out(path: str):
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        return p.open("w", newline="")
    except OSError as exc:
        raise CliError("output", f"cannot write {path}: {exc.strerror}", EXIT_INPUT) from None


def _outdir(path: str) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError("output", f"cannot create {path}: {exc.strerror}", EXIT_INPUT) from None
    return p


# commands ------------------------------------------------------------------------------


def cmd_curvature(args):
    F = _structure(args.structure)
    if args.point is not None:
        vals = [float(v) for v in args.point.split(",")]
        if len(vals) != 2 * F.n:
            raise CliError("input", f"--point needs {2 * F.n} comma-separated numbers", EXIT_INPUT)
        p = PointTM(np.array(vals[:F.n])[:, None], np.array(vals[F.n:])[:, None])
    else:
        p = sample_points(F, args.samples, args.seed)
    cd = curvature_data(F, p)
    norm = lambda a: np.sqrt(np.sum(np.asarray(a) ** 2, axis=tuple(range(np.ndim(a) - 1))))
    points = []
    for m in range(p.x.shape[1]):
        points.append({
            "x": p.x[:, m], "y": p.y[:, m],
            "ric_scalar": cd.ric_scalar[m],
            "norm_R_hh": norm(cd.R_hh)[m],
            "norm_R_reduced": norm(cd.R_red)[m],
            "norm_ric_tensor": norm(cd.ric_tensor)[m],
            "R_reduced": cd.R_red[..., m],
            "ric_tensor": cd.ric_tensor[..., m],
        })
    report = {"command": "curvature", "seed": args.seed, "structure": str(args.structure), "points": points}
    if args.format == "json":
        emit(report, "json")
    else:
        sys.stdout.write(f"# seed={args.seed}\n")
        for i, pt in enumerate(points):
            sys.stdout.write(f"point {i}: x={json.dumps(_json_ready(pt['x']))} y={json.dumps(_json_ready(pt['y']))}\n")
            for k in ("ric_scalar", "norm_R_hh", "norm_R_reduced", "norm_ric_tensor"):
                sys.stdout.write(f"  {k}={short(pt[k])}\n")
    return EXIT_OK


def cmd_verify(args):
    F = _structure(args.structure)
    rep = verify_structure(F, samples=args.samples, seed=args.seed)
    d = {"command": "verify", "seed": args.seed}
    d.update(rep.as_dict())
    if args.format == "text":
        sys.stdout.write(f"# seed={args.seed}\n")
    emit(d, args.format)
    if not rep.passed:
        sys.stderr.write(f"verify: structure failed validity checks (min eigenvalue {short(rep.min_eigenvalue)})\n")
        return EXIT_NUMERIC
    return EXIT_OK


def _apply_overrides(cfg, args):
    for name in ("dt", "t_end", "Nx", "Ntheta"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    cfg.validate()
    return cfg


def write_csv(records, path):
    with _open_out(path) as fh:
        fh.write(DiagnosticsRecord.CSV_HEADER + "\n")
        w = csv.writer(fh, lineterminator="\n")
        for r in records:
            w.writerow([fmt(v) for v in r.as_row()])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return [DiagnosticsRecord(*[float(v) for v in row]) for row in rows[1:]]


def write_snapshots(snapshots, directory):
    d = _outdir(directory)
    for i, s in enumerate(snapshots):
        obj = {"t": float(s.t), "Nx": s.grid.Nx, "Ntheta": s.grid.Ntheta,
               "W": [float(v) for v in np.ravel(s.W, order="C")]}
        (d / f"snapshot_{i:05d}.json").write_text(json.dumps(obj))


def write_series(records, directory):
    d = _outdir(directory)
    for name in DiagnosticsRecord.FIELDS[1:]:
        with (d / f"{name}.dat").open("w") as fh:
            fh.write(f"# t {name}\n")
            for r in records:
                fh.write(f"{fmt(r.t)} {fmt(getattr(r, name))}\n")


def cmd_flow_run(args):
    cfg, F0 = _config(args.config)
    cfg = _apply_overrides(cfg, args)
    res = run_flow(cfg, F0)
    if args.out:
        write_csv(res.records, args.out)
    if args.snapshots:
        write_snapshots(res.snapshots, args.snapshots)
    if args.series:
        write_series(res.records, args.series)
    last = res.records[-1]
    summary = {"command": "flow-run", "kind": cfg.kind, "status": res.status, "t_last": res.t_last,
               "steps": cfg.nsteps, "cfl_limit": res.cfl, "max_abs_ric": last.max_abs_ric,
               "min_metric_eig": last.min_metric_eig, "integrability_residual": last.integrability_residual}
    emit(summary, args.format)
    if not res.ok:
        sys.stderr.write(f"{res.status}: {res.message or 'run terminated early'}\n")
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_compare(args):
    cfg, F0 = _config(args.config)
    cfg = _apply_overrides(cfg, args)
    cmp = compare_pullback(cfg, F0, compare_every=args.compare_every)
    if args.out:
        with _open_out(args.out) as fh:
            fh.write("t,relative_discrepancy\n")
            for t, d in zip(cmp.times, cmp.discrepancy):
                fh.write(f"{fmt(t)},{fmt(d)}\n")
    summary = {"command": "flow-compare-pullback", "ricci_status": cmp.ricci.status,
               "deturck_status": cmp.deturck.status, "final_relative_discrepancy": cmp.final,
               "xi_fiber_variation": cmp.xi_fiber_variation,
               "max_integrability_residual": max(r.integrability_residual
                                                 for r in cmp.ricci.records + cmp.deturck.records)}
    emit(summary, args.format)
    for res in (cmp.ricci, cmp.deturck):
        if not res.ok:
            sys.stderr.write(f"{res.status}: {res.message or 'run terminated early'}\n")
            return EXIT_NUMERIC
    return EXIT_OK


def cmd_residuals(args):
    if args.example == "shrinker":
        F0 = _structure(args.structure or "sphere")
        K = args.K if args.K is not None else einstein_constant(F0, args.samples, args.seed)
        tau = shrink_factor(K, args.t)
        res = shrinker_residual(F0, K, args.t, args.samples, args.seed)
        sys.stdout.write(f"# seed={args.seed}\n")
        sys.stdout.write(f"residual={short(res)}\ntau={short(tau)}\nK={short(K)}\nt={short(args.t)}\n")
        return EXIT_OK
    F = _structure(args.structure or "flat")
    n = F.n
    exprs = (args.V or ";".join(["0"] * n)).split(";")
    if len(exprs) != n:
        raise CliError("input", f"--V needs {n} ';'-separated expressions", EXIT_INPUT)
    comps = [compile_expression(e, n) for e in exprs]
    V = lambda xs, ys: [c(xs) for c in comps]
    res, cls = soliton_residual(F, V, args.lam, args.samples, args.seed)
    sys.stdout.write(f"# seed={args.seed}\n")
    sys.stdout.write(f"residual={short(res)}\nclass={cls}\nlambda={short(args.lam)}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="finslerflow", description="Finsler curvature and Ricci flow tools")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("curvature", help="curvature report at points")
    c.add_argument("--structure", required=True, help="structure JSON file or built-in name")
    c.add_argument("--point", help="x1,..,xn,y1,..,yn")
    c.add_argument("--samples", type=int, default=5)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--format", choices=("text", "json"), default="text")
    c.set_defaults(func=cmd_curvature)

    v = sub.add_parser("verify", help="structural validity checks")
    v.add_argument("--structure", required=True)
    v.add_argument("--samples", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--format", choices=("text", "json"), default="text")
    v.set_defaults(func=cmd_verify)

    for name, func, helptext in (("flow-run", cmd_flow_run, "integrate a flow"),
                                 ("flow-compare-pullback", cmd_compare, "Ricci vs pulled-back DeTurck flow")):
        f = sub.add_parser(name, help=helptext)
        f.add_argument("--config", required=True)
        f.add_argument("--out", help="CSV output path")
        f.add_argument("--dt", type=float)
        f.add_argument("--t-end", dest="t_end", type=float)
        f.add_argument("--Nx", type=int)
        f.add_argument("--Ntheta", type=int)
        f.add_argument("--format", choices=("text", "json"), default="text")
        if name == "flow-run":
            f.add_argument("--snapshots", help="directory for JSON snapshots")
            f.add_argument("--series", help="directory for two-column diagnostic series")
        else:
            f.add_argument("--compare-every", dest="compare_every", type=int)
        f.set_defaults(func=func)

    r = sub.add_parser("residuals", help="exact-solution residuals")
    r.add_argument("--example", choices=("shrinker", "soliton"), required=True)
    r.add_argument("--structure")
    r.add_argument("--K", type=float)
    r.add_argument("--t", type=float, default=0.0)
    r.add_argument("--lambda", dest="lam", type=float, default=0.0)
    r.add_argument("--V", help="';'-separated component expressions in x1..xn")
    r.add_argument("--samples", type=int, default=50)
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(func=cmd_residuals)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(f"{exc}\n")
        return exc.status
    except (SpecError, ConfigError, StructureError) as exc:
        sys.stderr.write(f"config: {_oneline(exc)}\n")
        return EXIT_INPUT
    except (FlowDegeneracyError, DegeneracyError, PositivityError, DiffeoBreakdownError,
            DegenerateFlagError) as exc:
        sys.stderr.write(f"numerical: {_oneline(exc)}\n")
        return EXIT_NUMERIC


def _oneline(exc) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
