import math

import numpy as np
import pytest

from flatt.chart import Chart, MatrixField
from flatt.connection import (
    Connection, TensorField, check_annihilation, connection_fd_components,
    covariant_derivative, curvature_fd_many, curvature_many, curvature_tensor, derive_connection,
    fd_transport_derivative, max_curvature, parallel_transport_path, parse_path, torsion_many,
    torsion_tensor,
)
from flatt.errors import OutOfChartError, TensorMismatchError
from flatt.expr import parse_expr
from flatt.kernels import Program
from flatt.numeric import convergence_order
from flatt.scenario import bundled
from flatt.tensor import Tensor, contract, random_tensor, tensor_product
from flatt.transport import TransportLaw, transport_tensor

from helpers import random_field, random_vector_texts

J = np.array([[0.0, -1.0], [1.0, 0.0]])


def test_derive_connection_examples(catalog, backend):
    pts = catalog["rotation"].chart.samples()
    assert np.all(catalog["identity"].connection().components_many(pts) == 0)
    G = catalog["diag-exp"].connection().components_many(catalog["diag-exp"].chart.samples())
    want = np.zeros((2, 2, 2))
    want[0, 0, 0] = want[1, 1, 1] = 1.0
    np.testing.assert_allclose(G, np.broadcast_to(want, G.shape), atol=1e-15)
    G = catalog["rotation"].connection().components_many(pts)
    np.testing.assert_allclose(G[..., 0], np.broadcast_to(J, (len(pts), 2, 2)), atol=1e-15)
    np.testing.assert_allclose(G[..., 1], 0, atol=1e-15)


def test_derived_connection_matches_fd_of_transport(catalog):
    for sc in catalog.values():
        c = sc.connection()
        for p in sc.chart.samples(20):
            np.testing.assert_allclose(c.components(p), connection_fd_components(sc.law(), p),
                                       atol=1e-8)


def test_large_n_connection_is_numeric_and_correct():
    n = 5
    entries = [["0"] * n for _ in range(n)]
    for i in range(n):
        entries[i][i] = f"exp(x{i + 1})"
    entries[0][1] = "x3"
    entries[2][4] = "sin(x1)"
    t = TransportLaw(Chart.box(n, -0.5, 0.5), MatrixField.from_strings(entries, n))
    c = derive_connection(t)
    assert not c.symbolic
    pts = t.chart.samples(5)
    for p in pts:
        np.testing.assert_allclose(c.components(p), connection_fd_components(t, p), atol=1e-8)
    assert np.max(np.abs(curvature_many(c, pts))) < 1e-9


def test_gamma_matrix_layout():
    chart = Chart.box(2)
    c = Connection.from_strings(chart, [[["0", "0"], ["0", "0"]], [["0", "x1"], ["0", "0"]]])
    G = c.components([0.5, 0.0])
    assert G[0, 1, 1] == 0.5  # Gamma^1_22
    np.testing.assert_array_equal(c.gamma_matrices([0.5, 0.0])[1], [[0, 0.5], [0, 0]])


# -- covariant derivative ---------------------------------------------------


def test_covariant_derivative_examples():
    chart = Chart([(-5.0, 5.0), (-5.0, 5.0)])
    zero = Connection.zero(chart)
    S = TensorField.from_strings(1, 1, 2, ["1", "2", "-3", "4"])
    assert np.all(covariant_derivative(zero, ["x2", "1"], S, [0.3, 0.2]).components == 0)
    f = TensorField.from_strings(0, 0, 2, ["x1^2"])
    assert covariant_derivative(zero, ["1", "0"], f, [3.0, 0.0]).value() == 6.0
    diag = bundled("diag-exp").connection()
    v = covariant_derivative(diag, [parse_expr("1", 2), parse_expr("0", 2)],
                             TensorField.from_strings(1, 0, 2, ["1", "0"]), [0.0, 0.0])
    np.testing.assert_allclose(v.components, [1.0, 0.0], atol=1e-15)
    oracle = fd_transport_derivative(bundled("diag-exp").law(), [1.0, 0.0],
                                     TensorField.from_strings(1, 0, 2, ["1", "0"]), [0.0, 0.0])
    np.testing.assert_allclose(oracle, [1.0, 0.0], atol=1e-6)


def test_covariant_derivative_type_limit():
    c = Connection.zero(Chart.box(2))
    S = TensorField.from_strings(3, 0, 2, ["0"] * 8)
    with pytest.raises(TensorMismatchError):
        covariant_derivative(c, [1, 0], S, [0, 0])


@pytest.mark.parametrize("name", ["diag-exp", "shear", "rotation", "polar-jacobian"])
@pytest.mark.parametrize("p, q", [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (2, 1)])
def test_limit_consistency(name, p, q, rng):
    sc = bundled(name)
    c, law = sc.connection(), sc.law()
    for x in sc.chart.samples(6):
        S = random_field(rng, p, q)
        V = [parse_expr(s, 2) for s in random_vector_texts(rng)]
        got = covariant_derivative(c, V, S, x).components
        want = fd_transport_derivative(law, V, S, x)
        assert np.max(np.abs(got - want)) < 1e-5


def test_leibniz_and_contraction(rng):
    sc = bundled("polar-jacobian")
    c = sc.connection()
    for x in sc.chart.samples(10):
        A, B = random_field(rng, 1, 0), random_field(rng, 0, 1)
        V = random_vector_texts(rng)
        Vp = [parse_expr(s, 2) for s in V]
        AB = TensorField(1, 1, 2, [a * b for a in A.components for b in B.components])
        lhs = covariant_derivative(c, Vp, AB, x)
        dA, dB = covariant_derivative(c, Vp, A, x), covariant_derivative(c, Vp, B, x)
        At = Tensor.vector(A.values(x), tuple(x))
        Bt = Tensor.covector(B.values(x), tuple(x))
        rhs = tensor_product(dA, Bt).components + tensor_product(At, dB).components
        assert np.max(np.abs(lhs.components - rhs)) < 1e-8
        # contraction commutes with nabla
        trace = TensorField(0, 0, 2, [AB.components[0] + AB.components[3]])
        assert abs(covariant_derivative(c, Vp, trace, x).value() - contract(lhs, 1, 1).value()) < 1e-8


def test_function_linearity(rng):
    sc = bundled("rotation")
    c = sc.connection()
    S = random_field(rng, 1, 1)
    V = random_vector_texts(rng)
    f = "2 + sin(x1*x2)"
    fV = [parse_expr(f"({f})*({v})", 2) for v in V]
    for x in sc.chart.samples(10):
        fx = Program([parse_expr(f, 2)]).at(x)[0]
        a = covariant_derivative(c, fV, S, x).components
        b = fx * covariant_derivative(c, [parse_expr(v, 2) for v in V], S, x).components
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)


# -- curvature and torsion --------------------------------------------------


def test_curvature_examples():
    zero = Connection.zero(Chart.box(2))
    assert np.all(curvature_tensor(zero, [0.1, 0.2]).components == 0)
    rot = bundled("rotation").connection()
    assert max_curvature(rot, bundled("rotation").chart.samples())[0] < 1e-10


def test_nonflat_control_curvature():
    sc = bundled("nonflat-control")
    c = sc.connection()
    R = curvature_tensor(c, [1.0, 1.0]).components
    fd = curvature_fd_many(c, np.array([[1.0, 1.0]]))[0]
    assert abs(R[0, 1, 1, 0] - fd[0, 1, 1, 0]) < 1e-6
    # frozen value of the FD oracle
    assert R[0, 1, 1, 0] == pytest.approx(-1.0, abs=1e-12)
    assert R[0, 1, 0, 1] == pytest.approx(1.0, abs=1e-12)
    mask = np.ones_like(R, dtype=bool)
    mask[0, 1, 1, 0] = mask[0, 1, 0, 1] = False
    assert np.all(R[mask] == 0)


def test_curvature_antisymmetric_in_last_pair(rng):
    chart = Chart.box(2)
    mats = [[[f"{rng.uniform(-1, 1):.3f}*x{1 + (i + j + k) % 2}^2" for j in range(2)]
             for i in range(2)] for k in range(2)]
    c = Connection.from_strings(chart, mats)
    R = curvature_many(c, chart.samples(20))
    np.testing.assert_allclose(R, -np.swapaxes(R, -1, -2), atol=1e-15)
    np.testing.assert_allclose(R, curvature_fd_many(c, chart.samples(20)), atol=1e-7)


def test_flatness_of_derived_connections(catalog):
    for sc in catalog.values():
        pts = sc.chart.samples()
        assert np.max(np.abs(curvature_many(sc.connection(), pts))) < 1e-9
        assert np.max(np.abs(curvature_fd_many(sc.connection(), pts))) < 1e-5


def test_torsion_examples(catalog):
    sym = Connection.from_strings(Chart.box(2), [[["x1", "x2"], ["1", "0"]], [["x2", "3"], ["0", "x1"]]])
    assert np.all(torsion_tensor(sym, None, [0.2, 0.4]).components == 0)
    assert np.all(torsion_many(catalog["diag-exp"].connection(), catalog["diag-exp"].chart.samples()) == 0)
    T = torsion_tensor(catalog["shear"].connection(), None, [0.3, -0.7]).components
    want = np.zeros((2, 2, 2))
    want[0, 0, 1], want[0, 1, 0] = 1.0, -1.0
    np.testing.assert_array_equal(T, want)


def test_torsion_is_a_tensor(catalog):
    """Torsion in an anholonomic frame equals the coordinate torsion transformed as a (1,2)-tensor."""
    from flatt.chart import Frame

    sc = catalog["polar-jacobian"]
    c = sc.connection()
    f = Frame(sc.chart, MatrixField.from_strings([["1", "x2"], ["0", "x1"]], 2), "A")
    pts = sc.chart.samples(20)
    T = torsion_many(c, pts)
    Tf = torsion_many(c, pts, frame=f)
    E = f.many(pts)
    Einv = np.linalg.inv(E)
    want = np.einsum("mIi,mijk,mjJ,mkK->mIJK", Einv, T, E, E)
    np.testing.assert_allclose(Tf, want, atol=1e-12)


# -- parallel transport -----------------------------------------------------


def test_parallel_transport_examples(catalog):
    zero = Connection.zero(Chart.box(2))
    B0 = Tensor.vector([0.3, 0.4], (0.0, 0.0))
    out = parallel_transport_path(zero, parse_path(["t/2", "t/3"], 2), 0, 1, B0, 10)
    np.testing.assert_array_equal(out.components, B0.components)
    c = catalog["rotation"].connection()
    e1 = Tensor.vector([1, 0], (0.0, 0.0))
    out = parallel_transport_path(c, parse_path(["t", "0"], 2), 0, math.pi / 2, e1, 1000)
    np.testing.assert_allclose(out.components, [0, -1], atol=1e-8)
    closed = transport_tensor(catalog["rotation"].law(), (0, 0), (math.pi / 2, 0), e1)
    assert np.max(np.abs(out.components - closed.components)) < 1e-7
    # a second path with the same endpoints
    other = parallel_transport_path(c, parse_path(["t", "sin(2*t)"], 2), 0, math.pi / 2, e1, 1000)
    assert np.max(np.abs(other.components - out.components)) < 1e-7


@pytest.mark.parametrize("name", ["diag-exp", "shear", "rotation", "polar-jacobian"])
@pytest.mark.parametrize("p, q", [(1, 0), (0, 1), (1, 1)])
def test_parallel_transport_matches_law(name, p, q, rng):
    sc = bundled(name)
    lo, hi = sc.chart.lo, sc.chart.hi
    mid = sc.chart.center
    span = 0.4 * (hi - lo)
    texts = [f"{mid[0]} + {span[0]}*sin(t)", f"{mid[1]} + {span[1]}*t*t - {span[1] / 2}"]
    path = parse_path(texts, 2)
    start, end = Program(path).at([0.0]), Program(path).at([1.0])
    B0 = random_tensor(rng, p, q, start)
    ode = parallel_transport_path(sc.connection(), path, 0.0, 1.0, B0, 1000)
    exact = transport_tensor(sc.law(), start, end, B0)
    assert np.max(np.abs(ode.components - exact.components)) < 1e-7


def test_rk4_convergence_order_on_rotation():
    sc = bundled("rotation")
    path = parse_path(["t", "0"], 2)
    B0 = Tensor.vector([0.6, -0.8], (-2.0, 0.0))
    exact = transport_tensor(sc.law(), (-2, 0), (2, 0), B0).components
    steps = [250, 500, 1000]
    errs = [np.max(np.abs(parallel_transport_path(sc.connection(), path, -2, 2, B0, s).components
                          - exact)) for s in steps]
    assert 3.5 <= convergence_order(steps, errs) <= 4.5


def test_parallel_transport_errors(catalog):
    c = catalog["shear"].connection()
    with pytest.raises(OutOfChartError):
        parallel_transport_path(c, parse_path(["2*t", "0"], 2), 0, 1, Tensor.vector([1, 0], (0, 0)), 10)
    with pytest.raises(TensorMismatchError):
        parallel_transport_path(c, parse_path(["t", "0"], 2), 0, 1, Tensor.vector([1, 0], (0.5, 0)), 10)
    with pytest.raises(TensorMismatchError):
        parallel_transport_path(c, parse_path(["t", "0"], 2), 0, 1,
                                Tensor.of_type(2, 0, np.eye(2), (0, 0)), 10)


# -- annihilation -----------------------------------------------------------


def test_annihilation_examples(catalog):
    ident = TransportLaw(Chart.box(2), MatrixField.identity(2))
    A0 = Tensor.vector([1, 1], (0.0, 0.0))
    assert check_annihilation(ident, derive_connection(ident), (0, 0), A0) == 0.0
    diag = catalog["diag-exp"]
    assert check_annihilation(diag.law(), diag.connection(), (0, 0), A0) < 1e-6
    rot = catalog["rotation"]
    w = Tensor.covector([0, 1], (0.0, 0.0))
    assert check_annihilation(rot.law(), rot.connection(), (0, 0), w) < 1e-6


def test_annihilation_detects_wrong_connection(catalog):
    rot = catalog["rotation"]
    A0 = Tensor.vector([1, 1], (0.0, 0.0))
    assert check_annihilation(rot.law(), Connection.zero(rot.chart), (0, 0), A0) > 0.5
