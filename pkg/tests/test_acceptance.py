"""Acceptance gate: one test per criterion, each logging a PASS/FAIL line.

The lines are also collected and printed in the terminal summary (see
``conftest.py``), so ``pytest tests/test_acceptance.py`` shows the verdicts
without ``-s``.
"""
import io
import math
import time

import numpy as np
import pytest

from flatt.cli import run_command
from flatt.connection import (check_annihilation, covariant_derivative, curvature_fd_many,
                              curvature_many, fd_transport_derivative, parse_path,
                              parallel_transport_path)
from flatt.errors import CurvatureError
from flatt.expr import parse_expr
from flatt.kernels import Program
from flatt.numeric import convergence_order
from flatt.reconstruct import (flatness_report, holonomic_coordinates, integrate_frame_field,
                               reconstruction_round_trip, zero_component_residual)
from flatt.scenario import CATALOG, bundled
from flatt.tensor import Tensor
from flatt.transport import (PerturbedLaw, adapted_frame, check_axioms, frame_transport_matrix,
                             gauge_left_multiply, transport_tensor)

from helpers import ACCEPTANCE_LINES, random_field, random_vector_texts

TRANSPORT_SET = ("diag-exp", "rotation", "shear")


def verdict(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def random_tensor(rng, p, q, at):
    return Tensor.of_type(p, q, rng.uniform(-1, 1, (2,) * (p + q)), tuple(map(float, at)))


@pytest.fixture(scope="module")
def scenarios():
    return {name: bundled(name) for name in CATALOG}


def test_criterion_01_axioms(scenarios):
    worst = {name: max(check_axioms(sc.law(), trials=100, seed=sc.seed).violations.values())
             for name, sc in scenarios.items()}
    control = check_axioms(PerturbedLaw(scenarios["diag-exp"].law()), trials=100, seed=42)
    comp = control.violations["composition"]
    ok = max(worst.values()) < 1e-9 and comp > 1e-3
    verdict(1, "transport axioms", ok,
            f"max violation {max(worst.values()):.2e} < 1e-9; corrupted composition {comp:.2e} > 1e-3")


def test_criterion_02_flatness(scenarios):
    sym = fd = 0.0
    for sc in scenarios.values():
        pts = sc.chart.samples()
        sym = max(sym, float(np.max(np.abs(curvature_many(sc.connection(), pts)))))
        fd = max(fd, float(np.max(np.abs(curvature_fd_many(sc.connection(), pts)))))
    verdict(2, "flatness of derived connections", sym < 1e-9 and fd < 1e-5,
            f"symbolic {sym:.2e} < 1e-9; finite-difference {fd:.2e} < 1e-5")


def test_criterion_03_limit_consistency(scenarios):
    rng = np.random.default_rng(3)
    worst = 0.0
    for name in ("diag-exp", "shear", "rotation", "polar-jacobian"):
        sc = scenarios[name]
        c, law = sc.connection(), sc.law()
        pts = sc.chart.samples(20)
        for p, q in [(0, 0), (1, 0), (0, 1), (1, 1)]:
            for x in pts:
                S = random_field(rng, p, q)
                V = [parse_expr(s, 2) for s in random_vector_texts(rng)]
                got = covariant_derivative(c, V, S, x).components
                want = fd_transport_derivative(law, V, S, x)
                worst = max(worst, float(np.max(np.abs(got - want))))
    verdict(3, "covariant derivative equals transport limit", worst < 1e-5,
            f"max gap {worst:.2e} < 1e-5 over 4 types x 20 fields x 4 scenarios")


def test_criterion_04_parallel_transport(scenarios):
    rng = np.random.default_rng(4)
    ode_gap = cross_gap = 0.0
    for name in TRANSPORT_SET:
        sc = scenarios[name]
        c, law = sc.connection(), sc.law()
        lo, hi = sc.chart.lo, sc.chart.hi
        t1 = 0.9 * hi[0]
        amp = 0.5 * hi[1]
        straight = parse_path(["t", "0"], 2)
        wavy = parse_path(["t", f"{amp}*sin({math.pi / t1}*t)"], 2)
        curved = parse_path([f"{0.8 * lo[0]}*cos(t)", f"{0.8 * hi[1]}*sin(t)"], 2)
        for p, q in [(1, 0), (0, 1), (1, 1)]:
            B0 = random_tensor(rng, p, q, (0.0, 0.0))
            a = parallel_transport_path(c, straight, 0.0, t1, B0, 1000)
            b = parallel_transport_path(c, wavy, 0.0, t1, B0, 1000)
            exact = transport_tensor(law, (0.0, 0.0), (t1, 0.0), B0)
            ode_gap = max(ode_gap, float(np.max(np.abs(a.components - exact.components))))
            cross_gap = max(cross_gap, float(np.max(np.abs(a.components - b.components))))
            start = Program(curved).at([0.0])
            C0 = random_tensor(rng, p, q, start)
            d = parallel_transport_path(c, curved, 0.0, 2.0, C0, 1000)
            exact = transport_tensor(law, start, Program(curved).at([2.0]), C0)
            ode_gap = max(ode_gap, float(np.max(np.abs(d.components - exact.components))))

    steps = [250, 500, 1000]
    slopes = []
    for name, texts, t0, t1 in [("rotation", ["t", "0"], -2.0, 2.0),
                                ("diag-exp", ["t", "sin(5*t)"], -1.0, 1.0)]:
        sc = scenarios[name]
        path = parse_path(texts, 2)
        start, end = Program(path).at([t0]), Program(path).at([t1])
        B0 = Tensor.vector([0.6, -0.8], tuple(start))
        exact = transport_tensor(sc.law(), start, end, B0).components
        errs = [np.max(np.abs(parallel_transport_path(sc.connection(), path, t0, t1, B0, s).components
                              - exact)) for s in steps]
        slopes.append(convergence_order(steps, errs))
    ok = ode_gap < 1e-7 and cross_gap < 1e-7 and all(3.5 <= s <= 4.5 for s in slopes)
    verdict(4, "parallel transport equals closed-form transport", ok,
            f"ODE gap {ode_gap:.2e} < 1e-7; cross-path {cross_gap:.2e} < 1e-7; "
            f"RK4 order {', '.join(f'{s:.3f}' for s in slopes)} in [3.5, 4.5]")


def test_criterion_05_annihilation(scenarios):
    rng = np.random.default_rng(5)
    worst = 0.0
    for name in TRANSPORT_SET:
        sc = scenarios[name]
        pts = sc.chart.samples()[:50]
        for i in range(10):
            p, q = [(1, 0), (0, 1), (1, 1), (0, 2), (2, 0)][i % 5]
            y = sc.chart.random_points(rng, 1)[0]
            A0 = random_tensor(rng, p, q, y)
            worst = max(worst, check_annihilation(sc.law(), sc.connection(), y, A0, points=pts))
    verdict(5, "derived connection annihilates transported fields", worst < 1e-6,
            f"max |nabla(L_y A)| {worst:.2e} < 1e-6 over 50 points x 10 fields x 3 scenarios")


def test_criterion_06_round_trip(scenarios):
    spread = resid = 0.0
    for sc in scenarios.values():
        rt = reconstruction_round_trip(sc.law(), sc.base)
        spread = max(spread, rt.gauge_spread)
        resid = max(resid, rt.transport_residual)
    control = bundled("nonflat-control")
    try:
        integrate_frame_field(control.connection(), control.base)
        rejected, diag = False, "accepted"
    except CurvatureError as exc:
        rejected, diag = True, f"rejected with curvature {exc.max_curvature:.2f}"
    ok = spread < 1e-6 and resid < 1e-6 and rejected
    verdict(6, "frame field reconstruction round trip", ok,
            f"gauge spread {spread:.2e} < 1e-6; H residual {resid:.2e} < 1e-6; non-flat control {diag}")


def test_criterion_07_adapted_frame(scenarios):
    rng = np.random.default_rng(7)
    worst = 0.0
    for sc in scenarios.values():
        t = sc.law()
        f = adapted_frame(t)
        for _ in range(50):
            x, y = t.chart.random_points(rng, 2)
            worst = max(worst, float(np.max(np.abs(frame_transport_matrix(t, f, x, y) - np.eye(2)))))
    verdict(7, "adapted frame transports as the identity", worst < 1e-9,
            f"max |H - delta| {worst:.2e} < 1e-9 on all 5 scenarios")


def test_criterion_08_biconditional(scenarios):
    reports = {name: flatness_report(sc.law()) for name, sc in scenarios.items()}
    agree = all((r.torsion_max < 1e-8) == (r.closedness.max_defect < 1e-8) for r in reports.values())
    holo = all(reports[n].torsion_max < 1e-8 and reports[n].closedness.all_closed
               for n in ("diag-exp", "polar-jacobian"))
    defects = {n: reports[n].closedness.max_defect for n in ("shear", "rotation")}
    anholo = all(reports[n].torsion_max > 1e-8 and d >= 1 - 1e-9 for n, d in defects.items())
    examples = reports["shear"].closedness.defects == [1.0, 0.0]
    ok = agree and holo and anholo and examples
    verdict(8, "zero torsion iff closed frame rows", ok,
            f"agreement on all 5; diag-exp/polar closed; defects shear {defects['shear']:.9f}, "
            f"rotation {defects['rotation']:.9f} >= 1 - 1e-9")


@pytest.mark.parametrize("name, point, want", [
    ("diag-exp", (math.log(2), math.log(3)), (1.0, 2.0)),
    ("polar-jacobian", (2.0, 0.1), (math.cos(0.1), math.sin(0.1))),
])
def test_criterion_09_holonomic_coordinates(name, point, want, scenarios):
    sc = scenarios[name]
    start = time.perf_counter()
    cmap = holonomic_coordinates(sc.matrix_field(), sc.base)
    value_gap = float(np.max(np.abs(cmap(point) - np.asarray(want))))
    jac = cmap.jacobian_residual(sc.chart.samples(10))
    zero = zero_component_residual(sc.law())
    elapsed = time.perf_counter() - start
    ok = value_gap < 1e-9 and jac < 1e-5 and zero < 1e-5 and elapsed < 10.0
    verdict(9, f"holonomic coordinates [{name}]", ok,
            f"x~{tuple(round(v, 4) for v in point)} gap {value_gap:.2e} < 1e-9; Jacobian {jac:.2e}, "
            f"zero-component {zero:.2e} < 1e-5; {elapsed:.2f} s < 10 s")


def test_criterion_10_gauge(scenarios):
    rng = np.random.default_rng(10)
    worst = 0.0
    for sc in scenarios.values():
        t = sc.law()
        pairs = [t.chart.random_points(rng, 2) for _ in range(20)]
        for _ in range(20):
            D = rng.uniform(-1, 1, (2, 2)) + 2.0 * np.eye(2)
            g = gauge_left_multiply(t, D)
            for x, y in pairs:
                worst = max(worst, float(np.max(np.abs(g.transport_matrix(x, y) - t.transport_matrix(x, y)))))
    verdict(10, "transport invariant under constant left factors", worst < 1e-10,
            f"max |H_D - H| {worst:.2e} < 1e-10 over 20 random D")


def test_criterion_11_determinism():
    outputs = []
    for name in CATALOG:
        runs = []
        for _ in range(2):
            buf = io.StringIO()
            code = run_command(["check", name], buf, io.StringIO())
            runs.append((code, buf.getvalue()))
        outputs.append(runs[0] == runs[1] and runs[0][0] == 0)
    verdict(11, "repeated check runs are byte-identical", all(outputs),
            f"{sum(outputs)}/{len(outputs)} scenarios identical")
