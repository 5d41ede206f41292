"""Command-line front end: ``acdisc <command> --scene scene.json``.

Every command writes a JSON report to ``--out`` and prints one ``key=value``
summary line. ``--check report.json`` reruns the command stored in a report
and compares its headline number.

Exit codes: 0 success, 1 internal or numerical failure, 2 violated
precondition, 64 malformed command line.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import constants
from .acs_core import DomainSpec, deviation_c1_norm, structure_from_json, validate_structure
from .charts import QField, build_tamed_chart
from .disc_solver import DEFAULT_TOL, DiscGrid, reflect_extend, solve_attached_disc, solve_disc, \
    write_disc
from .errors import PreconditionError
from .fields import field_from_json
from .harness import ExperimentConfig, theorem_scaling_study
from .kobayashi import lower_bound, lower_bound_basepoint, upper_bound_search
from .levi import lambda0, levi_matrix
from .psh import PshBuilderParams, psh_log_builder

EXIT_OK, EXIT_INTERNAL, EXIT_PRECONDITION, EXIT_USAGE = 0, 1, 2, 64
COMMANDS = ("validate", "levi", "lambda0", "psh-build", "chart", "solve-disc", "attach",
            "kobayashi", "study")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _vector(text):
    try:
        return [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--scene", type=Path, help="scene JSON file")
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--tol", type=float, default=None, help="disc solver tolerance")
    common.add_argument("--grid", type=int, default=None, help="disc grid size N (h = 1/N)")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker cap")
    common.add_argument("--check", type=Path, default=argparse.SUPPRESS,
                        help="recompute the headline number of an emitted report")
    parser = _Parser(prog="acdisc", description="Almost complex discs and Kobayashi bounds.")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--jobs", type=int, default=1, help="worker cap")
    parser.add_argument("--check", type=Path, default=None,
                        help="recompute the headline number of an emitted report")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "attach":
            p.add_argument("--anchor", type=_vector, default=None, help="real point of E, e.g. 0,0")
            p.add_argument("--dir", type=_vector, default=None, help="real direction, e.g. 1,0")
    return parser


# --- scene helpers -------------------------------------------------------------------

def load_scene(path) -> dict:
    if path is None:
        raise PreconditionError("--scene is required")
    scene = json.loads(Path(path).read_text())
    ref = scene.get("constants")
    if ref and constants.ENV_VAR not in os.environ:
        os.environ[constants.ENV_VAR] = str((Path(path).parent / ref).resolve())
    return scene


def _structure(scene):
    return structure_from_json(scene["structure"])


def _domain(scene, J):
    if "domain" in scene:
        return DomainSpec.from_json(scene["domain"])
    return DomainSpec.ball(J.dim)


def _field(scene, name, dim):
    fields = scene.get("fields", {})
    if name not in fields:
        raise PreconditionError(f"scene has no field {name!r}")
    return field_from_json(fields[name], dim)


def _q_for(J, scene):
    if scene["structure"].get("repr") == "standard":
        return None
    return QField(J)


def _complex(vec, n):
    v = np.asarray(vec, dtype=float)
    if v.size != 2 * n:
        raise PreconditionError(f"expected {2 * n} real entries, got {v.size}")
    return v[:n] + 1j * v[n:]


def _grid(args):
    return DiscGrid(args.grid) if args.grid else DiscGrid()


# --- commands: each returns (headline name, value, result dict, tolerance) -----------

def cmd_validate(scene, args):
    J = _structure(scene)
    D = _domain(scene, J)
    rep = validate_structure(J, D)
    if not rep.passed:
        raise PreconditionError(f"J^2 + I reaches {rep.max_residual:.3g} at {list(rep.worst_point)}")
    dev = deviation_c1_norm(J, D)
    return "deviation_c1", dev, {"max_residual": rep.max_residual, "deviation_c1": dev,
                                 "samples": rep.sample_count}, 1e-12


def cmd_levi(scene, args):
    J = _structure(scene)
    u = _field(scene, "u", J.dim)
    ev = levi_matrix(J, u, scene.get("point", [0.0] * J.dim))
    return "min_eig", ev.min_eig, {"matrix": ev.matrix.tolist(), "min_eig": ev.min_eig,
                                   "max_eig": ev.max_eig}, 1e-12


def cmd_lambda0(scene, args):
    J = _structure(scene)
    D = _domain(scene, J)
    res = lambda0(J, _field(scene, "u", J.dim), D)
    return "lambda0", res.value, res.to_json(), 1e-9


def cmd_psh_build(scene, args):
    J = _structure(scene)
    D = _domain(scene, J)
    spec = scene.get("psh", {})
    params = PshBuilderParams(tuple(spec.get("p", [0.0] * J.dim)), spec.get("r", 0.5),
                              spec.get("A", 2.0), spec.get("B", constants.load_manifest()["k"]))
    res = psh_log_builder(params, J, D)
    return "certificate", res.certificate.value, {"certificate": res.certificate.to_json(),
                                                  "details": res.details}, 1e-9


def cmd_chart(scene, args):
    J = _structure(scene)
    spec = scene.get("chart", {})
    chart = build_tamed_chart(J, spec.get("p", [0.0] * J.dim), spec.get("epsilon", 0.05))
    return "c", chart.c, chart.to_json(), 1e-9


def _disc_outputs(sol, args, name, extra=None):
    args.out.mkdir(parents=True, exist_ok=True)
    write_disc(sol, args.out / f"{name}.csv", args.out / f"{name}_disc.json", extra)


def cmd_solve_disc(scene, args):
    J = _structure(scene)
    n = J.n
    spec = scene.get("disc", {})
    p = _complex(spec.get("p", [0.0] * J.dim), n)
    v = _complex(spec.get("v", [1.0] + [0.0] * (J.dim - 1)), n)
    sol = solve_disc(_q_for(J, scene), p, v, _grid(args), args.tol or DEFAULT_TOL)
    _disc_outputs(sol, args, "disc")
    return "residual", sol.residual, {"residual": sol.residual, "pde_residual": sol.pde_residual,
                                      "iterations": sol.iterations,
                                      "contraction": sol.contraction}, math.inf


def cmd_attach(scene, args):
    J = _structure(scene)
    n = J.n
    spec = scene.get("attach", {})
    anchor = args.anchor if getattr(args, "anchor", None) else spec.get("anchor", [0.0] * J.dim)
    direction = args.dir if getattr(args, "dir", None) else spec.get("dir", [1.0] + [0.0] * (J.dim - 1))
    sol = solve_attached_disc(_q_for(J, scene), _complex(anchor, n), _complex(direction, n),
                              _grid(args), args.tol or DEFAULT_TOL)
    refl = reflect_extend(sol)
    extra = {"interior_residual": refl.interior_residual, "band_residual": refl.band_residual,
             "diameter_offset": refl.diameter_offset}
    _disc_outputs(sol, args, "attach", extra)
    return "residual", sol.residual, dict(extra, residual=sol.residual,
                                          pde_residual=sol.pde_residual,
                                          iterations=sol.iterations), math.inf


def cmd_kobayashi(scene, args):
    J = _structure(scene)
    D = _domain(scene, J)
    u = _field(scene, "u", J.dim)
    spec = scene.get("kobayashi", {})
    p = spec.get("p", [0.0] * J.dim)
    v = spec.get("v", [1.0] + [0.0] * (J.dim - 1))
    if spec.get("mode", "uniform") == "basepoint":
        rep = lower_bound_basepoint(D, J, u, p, v)
    else:
        rep = lower_bound(D, J, u, p, v)
    if spec.get("upper", True):
        search = upper_bound_search(D, _q_for(J, scene), p, v, grid=_grid(args),
                                    jobs=args.jobs)
        rep = rep.with_upper(search.value)
    return "lower", rep.lower, rep.to_json(), 1e-12


def cmd_study(scene, args):
    data = dict(scene.get("experiment", {}))
    if args.seed is not None:
        data["seed"] = args.seed
    if args.grid:
        data["grid_N"] = args.grid
    if args.tol:
        data["tol"] = args.tol
    data["out_dir"] = str(args.out)
    cfg = ExperimentConfig.from_json(data)
    rep = theorem_scaling_study(cfg, jobs=args.jobs)
    return "rows", len(rep.rows), {"passed": rep.passed, "monotone": rep.summary["monotone"],
                                   "failures": rep.summary["failures"],
                                   "fitted": rep.summary["fitted"]}, 0


HANDLERS = {
    "validate": cmd_validate, "levi": cmd_levi, "lambda0": cmd_lambda0,
    "psh-build": cmd_psh_build, "chart": cmd_chart, "solve-disc": cmd_solve_disc,
    "attach": cmd_attach, "kobayashi": cmd_kobayashi, "study": cmd_study,
}


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.6f}" if abs(value) >= 1e-4 or value == 0 else f"{value:.6e}"
    return str(value)


def _options(args):
    return {"seed": args.seed, "tol": args.tol, "grid": args.grid, "jobs": args.jobs,
            "anchor": getattr(args, "anchor", None), "dir": getattr(args, "dir", None)}


def run_command(command, scene, args):
    name, value, result, tol = HANDLERS[command](scene, args)
    report = {"command": command, "scene": scene, "options": _options(args),
              "headline": {"name": name, "value": value}, "tolerance": tol, "result": result,
              "manifest_hash": constants.manifest_hash()}
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / f"{command}.json").write_text(json.dumps(report, indent=2, sort_keys=True,
                                                         default=_json_default) + "\n")
    print(f"command={command} {name}={_fmt(value)} status=ok")
    return EXIT_OK


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    return str(o)


def run_check(path, args):
    report = json.loads(Path(path).read_text())
    command = report["command"]
    opts = report.get("options", {})
    ns = argparse.Namespace(out=args.out / ".check", seed=opts.get("seed"), tol=opts.get("tol"),
                            grid=opts.get("grid"), jobs=args.jobs, anchor=opts.get("anchor"),
                            dir=opts.get("dir"))
    name, value, _, tol = HANDLERS[command](report["scene"], ns)
    old = report["headline"]["value"]
    tol = report.get("tolerance", tol)
    if tol is None or (isinstance(tol, float) and math.isinf(tol)):
        tol = max(1e-9, 1e-6 * abs(old))
    diff = abs(float(value) - float(old))
    ok = diff <= tol * max(1.0, abs(float(old)))
    print(f"command={command} check={'pass' if ok else 'fail'} {name}={_fmt(value)} "
          f"reported={_fmt(old)} diff={diff:.3e}")
    return EXIT_OK if ok else EXIT_INTERNAL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.check is None and args.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("a command is required")
        if args.check is None and args.scene is None:
            parser.print_usage(sys.stderr)
            raise UsageError("--scene is required")
    except UsageError as exc:
        print(f"acdisc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.check is not None:
            return run_check(args.check, args)
        scene = load_scene(args.scene)
        return run_command(args.command, scene, args)
    except PreconditionError as exc:
        print(f"command={args.command} status=precondition error={type(exc).__name__}",
              file=sys.stdout)
        print(f"acdisc: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except Exception as exc:  # noqa: BLE001
        print(f"command={args.command} status=error error={type(exc).__name__}")
        print(f"acdisc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
