"""``flatt`` command line: run a scenario through the library and report JSON.

Reports go to stdout (sorted keys, no timestamps, so identical inputs give
identical bytes); ``--out FILE`` additionally writes a CSV table.  Errors go
to stderr as one JSON object.

Exit codes: 0 ok, 1 validation failure, 2 tolerance failure (``check``
only), 3 I/O error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .chart import transform_connection
from .connection import (
    curvature_fd_many, curvature_many, derive_connection, parallel_transport_path, parse_path,
    torsion_many,
)
from .errors import DomainError, FlattError, SingularMatrixError
from .expr import eval_expr, parse_expr, variables
from .kernels import Program
from .reconstruct import (
    CLOSED_TOL, check_closedness, derived_connection_residual, flatness_report,
    holonomic_coordinates, integrate_frame_field, reconstruction_round_trip,
    zero_component_residual,
)
from .scenario import Scenario, load_scenario
from .tensor import Tensor
from .transport import (
    AXIOM_TOL, adapted_frame, check_axioms, frame_transport_matrix, transport_tensor,
)

EXIT_OK, EXIT_VALIDATION, EXIT_TOLERANCE, EXIT_IO, EXIT_NUMERICAL = 0, 1, 2, 3, 4
CURVATURE_TOL = 1e-9
CURVATURE_FD_TOL = 1e-5
JACOBIAN_POINTS = 10


class CommandError(Exception):
    def __init__(self, message, code=EXIT_VALIDATION):
        super().__init__(message)
        self.code = code


class Outcome:
    """What a subcommand produced: a JSON result, a CSV table, an exit code."""

    def __init__(self, result: dict, header=None, rows=None, code: int = EXIT_OK):
        self.result = result
        self.header = header
        self.rows = rows or []
        self.code = code


def _floats(a):
    return np.asarray(a, dtype=float).tolist()


def parse_point(text: str, n: int) -> np.ndarray:
    """Comma-separated coordinates; each may be a constant expression like ``log(2)``."""
    parts = [s.strip() for s in text.split(",")]
    if len(parts) != n:
        raise CommandError(f"expected {n} comma-separated coordinates, got {text!r}")
    out = []
    for s in parts:
        e = parse_expr(s, 1)
        if variables(e):
            raise CommandError(f"coordinate {s!r} must be a constant")
        out.append(eval_expr(e, [0.0]))
    return np.array(out)


def _points(sc: Scenario, grid) -> np.ndarray:
    return sc.chart.samples() if grid is None else sc.chart.grid(grid)


def _point_rows(pts, *columns):
    return [[*map(float, p), *(float(c[i]) for c in columns)] for i, p in enumerate(pts)]


def _coord_names(n):
    return [f"x{k}" for k in range(1, n + 1)]


def _read_tensor(path, n) -> Tensor:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CommandError(f"cannot read tensor file {path}: {exc.strerror}", EXIT_IO) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CommandError(f"tensor file {path} is not valid JSON: {exc}") from exc
    T = Tensor.from_dict(data)
    if T.n != n:
        raise CommandError(f"tensor dimension {T.n} does not match the scenario dimension {n}")
    return T


def _need_F(sc: Scenario, command: str):
    if not sc.has_F:
        raise CommandError(f"'{command}' needs a scenario with an [F] table")


# ---------------------------------------------------------------------------
# subcommands


def cmd_check(sc: Scenario, args) -> Outcome:
    pts = sc.chart.samples()
    c = sc.connection()
    R = curvature_many(c, pts)
    curv = float(np.max(np.abs(R)))
    result = {"curvature_max": curv, "connection": c.provenance}
    rows = [["curvature_max", curv, ""]]
    if not sc.has_F:
        # nothing to assert without a transport law
        result["asserted"] = {}
        result["passed"] = True
        return Outcome(result, ["quantity", "value", "passed"], rows)

    law = sc.law()
    axioms = check_axioms(law, trials=args.trials, seed=sc.seed)
    curv_fd = float(np.max(np.abs(curvature_fd_many(c, pts))))
    flat = flatness_report(law, pts)
    asserted = {
        "axioms": axioms.passed,
        "curvature_symbolic": curv < CURVATURE_TOL,
        "curvature_fd": curv_fd < CURVATURE_FD_TOL,
        "torsion_closedness_equivalence": flat.biconditional_holds,
    }
    result.update({
        "axioms": axioms.to_dict(),
        "curvature_fd_max": curv_fd,
        "torsion_max": flat.torsion_max,
        "closedness": flat.closedness.to_dict(),
        "holonomic_basis_exists": flat.holonomic_basis_exists,
        "asserted": asserted,
        "passed": all(asserted.values()),
        "tolerances": {
            "axioms": AXIOM_TOL, "curvature_symbolic": CURVATURE_TOL,
            "curvature_fd": CURVATURE_FD_TOL, "closedness": CLOSED_TOL,
        },
    })
    for name, v in sorted(axioms.violations.items()):
        rows.append([f"axiom:{name}", v, v < AXIOM_TOL])
    rows.append(["curvature_fd_max", curv_fd, asserted["curvature_fd"]])
    rows[0][2] = asserted["curvature_symbolic"]
    rows.append(["torsion_max", flat.torsion_max, ""])
    rows.append(["closedness_defect", flat.closedness.max_defect, ""])
    code = EXIT_OK if result["passed"] else EXIT_TOLERANCE
    return Outcome(result, ["quantity", "value", "passed"], rows, code)


def cmd_transport(sc: Scenario, args) -> Outcome:
    _need_F(sc, "transport")
    law = sc.law()
    x = law.chart.require(parse_point(args.from_, sc.n))
    y = law.chart.require(parse_point(args.to, sc.n))
    H = law.transport_matrix(x, y)
    result = {"from": _floats(x), "to": _floats(y), "H": _floats(H)}
    header = ["i", "j", "H"]
    rows = [[i + 1, j + 1, float(H[i, j])] for i in range(sc.n) for j in range(sc.n)]
    if args.tensor:
        T = _read_tensor(args.tensor, sc.n)
        if not T.at:
            T = T.moved(x)
        moved = transport_tensor(law, x, y, T)
        result["tensor"] = T.to_dict()
        result["transported"] = moved.to_dict()
    return Outcome(result, header, rows)


def cmd_connection(sc: Scenario, args) -> Outcome:
    c = sc.connection()
    p = sc.chart.require(parse_point(args.at, sc.n) if args.at else sc.base)
    G = c.components(p)
    mats = [G[:, :, k] for k in range(sc.n)]
    rows = [[k + 1, i + 1, j + 1, float(G[i, j, k])]
            for k in range(sc.n) for i in range(sc.n) for j in range(sc.n)]
    result = {"at": _floats(p), "connection": c.provenance, "gamma": [_floats(m) for m in mats]}
    if c.symbolic:
        result["gamma_expressions"] = c.gamma_strings()
    return Outcome(result, ["k", "i", "j", "gamma"], rows)


def cmd_curvature(sc: Scenario, args) -> Outcome:
    c = sc.connection()
    pts = _points(sc, args.grid)
    R = curvature_many(c, pts)
    per_point = np.abs(R).reshape(len(pts), -1).max(axis=1)
    worst = int(np.argmax(per_point))
    result = {
        "connection": c.provenance,
        "points": len(pts),
        "curvature_max": float(per_point[worst]),
        "worst_point": _floats(pts[worst]),
    }
    return Outcome(result, [*_coord_names(sc.n), "max_abs_R"], _point_rows(pts, per_point))


def cmd_torsion(sc: Scenario, args) -> Outcome:
    c = sc.connection()
    pts = _points(sc, args.grid)
    T = np.abs(torsion_many(c, pts))
    per_point = T.reshape(len(pts), -1).max(axis=1)
    comp = T.max(axis=0)
    n = sc.n
    table = [{"i": i + 1, "j": j + 1, "k": k + 1, "max_abs": float(comp[i, j, k])}
             for i in range(n) for j in range(n) for k in range(n)]
    result = {
        "connection": c.provenance,
        "points": len(pts),
        "torsion_max": float(per_point.max()),
        "pointwise_max_range": [float(per_point.min()), float(per_point.max())],
        "components": table,
    }
    return Outcome(result, [*_coord_names(n), "max_abs_T"], _point_rows(pts, per_point))


def cmd_parallel(sc: Scenario, args) -> Outcome:
    c = sc.connection()
    texts = [s.strip() for s in args.path.split(",")]
    path = parse_path(texts, sc.n)
    prog = Program(path)
    start, end = prog.at([args.t0]), prog.at([args.t1])
    T = _read_tensor(args.tensor, sc.n)
    T = T.moved(start) if not T.at else T
    ode = parallel_transport_path(c, path, args.t0, args.t1, T, args.steps)
    result = {
        "path": texts, "t0": args.t0, "t1": args.t1, "steps": args.steps,
        "start": _floats(start), "end": _floats(end),
        "ode": ode.to_dict(), "closed_form": None, "difference": None,
    }
    ode_flat = ode.flat
    closed_flat = [None] * ode_flat.size
    if sc.has_F:
        closed = transport_tensor(sc.law(), start, end, T)
        closed_flat = closed.flat
        result["closed_form"] = closed.to_dict()
        result["difference"] = float(np.max(np.abs(ode_flat - closed_flat)))
    rows = [[i, float(ode_flat[i]), None if closed_flat[i] is None else float(closed_flat[i])]
            for i in range(ode_flat.size)]
    return Outcome(result, ["component", "ode", "closed_form"], rows)


def cmd_reconstruct(sc: Scenario, args) -> Outcome:
    base = sc.chart.require(parse_point(args.base, sc.n) if args.base else sc.base)
    pts = _points(sc, args.grid)
    if sc.has_F:
        rt = reconstruction_round_trip(sc.law(), base, points=pts, connection_check=5)
        rec = integrate_frame_field(derive_connection(sc.law()), base)
        result = {"base": _floats(base), "connection": "derived-from-F", **rt.to_dict()}
    else:
        c = sc.connection()
        rec = integrate_frame_field(c, base)
        result = {
            "base": _floats(base), "connection": c.provenance, "points": len(pts),
            "connection_residual": derived_connection_residual(rec, c, pts[:5]),
        }
    F_rec = rec.many(pts)
    n = sc.n
    header = [*_coord_names(n), *(f"F{i + 1}{j + 1}" for i in range(n) for j in range(n))]
    rows = [[*map(float, p), *map(float, F.reshape(-1))] for p, F in zip(pts, F_rec)]
    return Outcome(result, header, rows)


def cmd_holonomize(sc: Scenario, args) -> Outcome:
    _need_F(sc, "holonomize")
    law = sc.law()
    base = sc.chart.require(parse_point(args.base, sc.n) if args.base else sc.base)
    pts = _points(sc, args.grid)
    closed = check_closedness(law.F, pts)
    result = {"base": _floats(base), "closedness": closed.to_dict(), "points": len(pts)}
    if not closed.all_closed:
        result["coordinates"] = None
        return Outcome(result, ["row", "defect", "closed"],
                       [[i + 1, d, ok] for i, (d, ok) in enumerate(zip(closed.defects, closed.closed))])
    cmap = holonomic_coordinates(law.F, base)
    values = cmap.many(pts)
    result.update({
        "coordinates": "computed",
        "jacobian_residual": cmap.jacobian_residual(pts[:JACOBIAN_POINTS]),
        "jacobian_points": min(JACOBIAN_POINTS, len(pts)),
        "zero_component_residual": zero_component_residual(law, pts),
    })
    n = sc.n
    header = [*_coord_names(n), *(f"y{k}" for k in range(1, n + 1))]
    rows = [[*map(float, p), *map(float, v)] for p, v in zip(pts, values)]
    return Outcome(result, header, rows)


def cmd_adapted_frame(sc: Scenario, args) -> Outcome:
    _need_F(sc, "adapted-frame")
    law = sc.law()
    frame = adapted_frame(law)
    pts = sc.chart.samples()
    pairs = zip(pts, np.roll(pts, 1, axis=0))
    dev = [float(np.max(np.abs(frame_transport_matrix(law, frame, x, y) - np.eye(sc.n))))
           for x, y in pairs]
    components = float(np.max(np.abs(
        transform_connection(derive_connection(law), frame).components_many(pts))))
    result = {
        "frame": frame.E.to_strings() if frame.symbolic else None,
        "frame_tag": frame.tag,
        "delta_deviation_max": max(dev),
        "connection_components_max": components,
        "pairs": len(dev),
    }
    header = [*(f"x{k}" for k in range(1, sc.n + 1)), *(f"y{k}" for k in range(1, sc.n + 1)),
              "delta_deviation"]
    rows = [[*map(float, x), *map(float, y), d]
            for (x, y), d in zip(zip(pts, np.roll(pts, 1, axis=0)), dev)]
    return Outcome(result, header, rows)


COMMANDS = {
    "check": cmd_check,
    "transport": cmd_transport,
    "connection": cmd_connection,
    "curvature": cmd_curvature,
    "torsion": cmd_torsion,
    "parallel": cmd_parallel,
    "reconstruct": cmd_reconstruct,
    "holonomize": cmd_holonomize,
    "adapted-frame": cmd_adapted_frame,
}


class _Parser(argparse.ArgumentParser):
    # usage errors are validation failures; exit 2 is reserved for `check`
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="flatt", description=__doc__.splitlines()[0].replace("``", ""))
    ap.add_argument("--version", action="version", version=f"flatt {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND", parser_class=_Parser)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("scenario", help="scenario file, or the name of a bundled scenario")
        p.add_argument("--out", help="also write a CSV table to this file")
        return p

    add("check", "axioms, flatness, torsion and closedness; exit 2 on failure").add_argument(
        "--trials", type=int, default=100)
    p = add("transport", "transport matrix H(to, from) and optionally a moved tensor")
    p.add_argument("--from", dest="from_", required=True, metavar="POINT")
    p.add_argument("--to", required=True, metavar="POINT")
    p.add_argument("--tensor", metavar="FILE")
    add("connection", "connection matrices Gamma_k at a point").add_argument("--at", metavar="POINT")
    for name, what in (("curvature", "max |R| over the samples or a grid"),
                       ("torsion", "max |T| and per-component table")):
        add(name, what).add_argument("--grid", type=int, metavar="G")
    p = add("parallel", "parallel transport along a path versus the transport law")
    p.add_argument("--path", required=True, help='comma-separated components in t, e.g. "t,0"')
    p.add_argument("--t0", type=float, required=True)
    p.add_argument("--t1", type=float, required=True)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--tensor", required=True, metavar="FILE")
    for name, what in (("reconstruct", "rebuild F from the connection"),
                       ("holonomize", "closedness and holonomic coordinates")):
        p = add(name, what)
        p.add_argument("--base", metavar="POINT")
        p.add_argument("--grid", type=int, metavar="G")
    add("adapted-frame", "frame in which transport components are Kronecker deltas")
    return ap


def _error_code(exc) -> int:
    if isinstance(exc, CommandError):
        return exc.code
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, (SingularMatrixError, DomainError, FloatingPointError)):
        return EXIT_NUMERICAL
    return EXIT_VALIDATION


def _error_payload(exc, code) -> dict:
    out = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("line", "point", "max_curvature", "defects", "det", "offset"):
        v = getattr(exc, attr, None)
        if v is not None:
            out[attr] = list(v) if isinstance(v, tuple) else v
    if isinstance(exc, OSError) and exc.filename:
        out["message"] = f"{exc.strerror}: {exc.filename}"
    return out


def report(command: str, sc: Scenario, result: dict) -> dict:
    return {
        "tool": "flatt",
        "version": __version__,
        "command": command,
        "scenario": sc.info(),
        "seed": sc.seed,
        "result": result,
    }


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])


def run_command(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario)
        outcome = COMMANDS[args.command](sc, args)
        stdout.write(dumps(report(args.command, sc, outcome.result)))
        if args.out:
            write_csv(args.out, outcome.header, outcome.rows)
        return outcome.code
    except (FlattError, CommandError, OSError, ValueError, FloatingPointError) as exc:
        code = _error_code(exc)
        stderr.write(json.dumps(_error_payload(exc, code), sort_keys=True) + "\n")
        return code


def main(argv=None) -> None:
    sys.exit(run_command(argv))


if __name__ == "__main__":
    main()
