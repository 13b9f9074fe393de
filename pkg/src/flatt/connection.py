"""Linear connections on the chart: derivation from a transport, covariant
derivatives, curvature, torsion and parallel transport along paths.

Component arrays use ``G[i, j, k] = Gamma^i_{jk}``; the matrix
``Gamma_k`` is ``G[:, :, k]``.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .chart import (
    Chart, Frame, FramedConnection, MatrixField, SYMBOLIC_INVERSE_MAX_N, invert_matrices,
    structure_coefficients_many, transform_connection,
)
from .errors import OutOfChartError, TensorMismatchError
from .expr import Expr, as_expr, diff_expr, parse_expr
from .kernels import Program
from .numeric import DEFAULT_SCHEME, FDScheme, fd_partial, richardson, rk4_step
from .tensor import COORD, Tensor, TensorType, same_point
from .transport import TransportLaw, apply_matrix, transport_extend_field

DERIVED = "derived-from-F"
USER = "user-supplied"


class Connection:
    """Coordinate-frame connection given by ``n`` matrix fields ``Gamma_k``.

    Derived connections on charts with ``n > 4`` carry no closed form; their
    components are evaluated from ``F`` and its symbolic derivatives.
    """

    frame = None

    def __init__(self, chart: Chart, gammas: Sequence[MatrixField] | None,
                 provenance: str = USER, law: TransportLaw | None = None):
        self.chart = chart
        self.provenance = provenance
        self.law = law
        if gammas is None:
            if law is None:
                raise ValueError("a connection needs gamma matrices or a transport law")
            self.gammas = None
        else:
            gammas = tuple(g.on(chart) for g in gammas)
            if len(gammas) != chart.n or any(g.n != chart.n for g in gammas):
                raise ValueError(f"need {chart.n} matrices of size {chart.n}x{chart.n}")
            self.gammas = gammas

    @classmethod
    def zero(cls, chart: Chart) -> "Connection":
        return cls(chart, [MatrixField.zeros(chart.n) for _ in range(chart.n)])

    @classmethod
    def from_strings(cls, chart: Chart, mats, provenance: str = USER) -> "Connection":
        return cls(chart, [MatrixField.from_strings(m, chart.n) for m in mats], provenance)

    @property
    def n(self) -> int:
        return self.chart.n

    @property
    def symbolic(self) -> bool:
        return self.gammas is not None

    def __repr__(self):
        if self.gammas is None:
            return f"Connection(provenance={self.provenance!r}, <numeric from {self.law!r}>)"
        return f"Connection(provenance={self.provenance!r}, gammas={[g.to_strings() for g in self.gammas]})"

    def gamma_strings(self) -> list:
        if self.gammas is None:
            raise ValueError("numeric connection has no closed form")
        return [g.to_strings() for g in self.gammas]

    def components_many(self, points) -> np.ndarray:
        """``G[m, i, j, k]`` at each point (no bounds checks)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.gammas is not None:
            return np.stack([g.many(pts) for g in self.gammas], axis=-1)
        F, dF, _ = self._F_parts(pts, second=False)
        Finv = invert_matrices(F, pts, "F")
        return np.einsum("mia,mkaj->mijk", Finv, dF)

    def components(self, p) -> np.ndarray:
        p = self.chart.require(p)
        return self.components_many(p[None, :])[0]

    def gamma_matrices(self, p) -> list[np.ndarray]:
        G = self.components(p)
        return [G[:, :, k] for k in range(self.n)]

    def dcomponents_many(self, points) -> np.ndarray:
        """``D[m, i, j, k, l] = d_l Gamma^i_{jk}`` from symbolic derivatives."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.n
        if self.gammas is not None:
            return np.stack(
                [np.stack([g.diff(l).many(pts) for l in range(1, n + 1)], axis=-1) for g in self.gammas],
                axis=-2,
            )
        F, dF, ddF = self._F_parts(pts, second=True)
        Finv = invert_matrices(F, pts, "F")
        Gk = np.einsum("mia,mkaj->mkij", Finv, dF)  # Gamma_k as (m, k, i, j)
        # d_l(F^-1 d_k F) = -Gamma_l Gamma_k + F^-1 d_l d_k F
        term = np.einsum("mlia,mkaj->mijkl", Gk, Gk)
        second = np.einsum("mia,mklaj->mijkl", Finv, ddF)
        return second - term

    def _F_parts(self, pts, second):
        F = self.law.F
        n = self.n
        Fm = F.many(pts)
        dF = np.stack([F.diff(k).many(pts) for k in range(1, n + 1)], axis=1)
        ddF = None
        if second:
            ddF = np.stack(
                [np.stack([F.diff(k).diff(l).many(pts) for l in range(1, n + 1)], axis=1)
                 for k in range(1, n + 1)],
                axis=1,
            )
        return Fm, dF, ddF


def derive_connection(t: TransportLaw) -> Connection:
    """``Gamma_k = F^-1 dF/dx^k``, built symbolically for ``n <= 4``."""
    if t.n > SYMBOLIC_INVERSE_MAX_N:
        return Connection(t.chart, None, DERIVED, law=t)
    Finv = t.F.inverse_symbolic()
    gammas = [Finv @ t.F.diff(k) for k in range(1, t.n + 1)]
    return Connection(t.chart, gammas, DERIVED, law=t)


def connection_fd_components(t: TransportLaw, p, scheme: FDScheme = DEFAULT_SCHEME) -> np.ndarray:
    """Independent route to the derived connection: ``d H(x, y) / d y^k`` at ``y = x``
    by finite differences of numeric transport matrices."""
    x = np.asarray(p, dtype=float)

    def H_of(y):
        return t.transport_matrices(y, x)[0]  # H(x, y) = F(x)^-1 F(y)

    return np.stack([fd_partial(H_of, x, k, scheme) for k in range(1, t.n + 1)], axis=-1)


# ---------------------------------------------------------------------------
# tensor fields and covariant derivatives


class TensorField:
    """Tensor field with expression components in the usual index order."""

    def __init__(self, p: int, q: int, n: int, components: Sequence[Expr]):
        self.ttype = TensorType(p, q)
        self.n = n
        comps = tuple(components)
        if len(comps) != n ** (p + q):
            raise TensorMismatchError(f"type ({p},{q}) in dimension {n} needs {n ** (p + q)} components")
        self.components = comps
        self._program = Program(comps)
        self._dprogram = Program([diff_expr(e, k) for e in comps for k in range(1, n + 1)])

    @classmethod
    def from_strings(cls, p: int, q: int, n: int, texts: Sequence[str]) -> "TensorField":
        return cls(p, q, n, [parse_expr(s, n) for s in texts])

    @property
    def shape(self):
        return (self.n,) * self.ttype.rank

    def values(self, x) -> np.ndarray:
        return self._program.at(x).reshape(self.shape)

    def derivatives(self, x) -> np.ndarray:
        """Array of shape ``shape + (n,)``; last axis is the derivative direction."""
        return self._dprogram.at(x).reshape(self.shape + (self.n,))


def covariant_from_parts(G: np.ndarray, V: np.ndarray, values: np.ndarray,
                         dvalues: np.ndarray, p: int, q: int) -> np.ndarray:
    """Assemble ``(nabla_V S)`` from components, their partials and ``G``.

    ``+Gamma^i_{mk} V^k S^{..m..}`` for each upper slot and
    ``-Gamma^m_{jk} V^k S_{..m..}`` for each lower slot.
    """
    out = dvalues @ V
    GV = np.einsum("ijk,k->ij", G, V)
    for a in range(p):
        out = out + np.moveaxis(np.tensordot(GV, values, axes=([1], [a])), 0, a)
    for b in range(p, p + q):
        out = out - np.moveaxis(np.tensordot(GV, values, axes=([0], [b])), 0, b)
    return out


def _vector_values(V, x, n) -> np.ndarray:
    if isinstance(V, TensorField):
        return V.values(x)
    if any(isinstance(v, str) for v in V):
        V = [parse_expr(v, n) if isinstance(v, str) else as_expr(v) for v in V]
    if all(isinstance(v, Expr) for v in V):
        return Program(list(V)).at(x)
    return np.asarray(V, dtype=float)


def covariant_derivative(c: Connection, V, S: TensorField, p) -> Tensor:
    """``(nabla_V S)(p)``; ``V`` is a sequence of ``n`` expressions, strings or numbers."""
    if S.ttype.p > 2 or S.ttype.q > 2:
        raise TensorMismatchError(f"covariant derivative supports types up to (2,2), got {S.ttype}")
    x = c.chart.require(p)
    Vx = _vector_values(V, x, c.n)
    G = c.components(x)
    comps = covariant_from_parts(G, Vx, S.values(x), S.derivatives(x), S.ttype.p, S.ttype.q)
    return Tensor(S.ttype, c.n, comps, tuple(x), COORD)


def fd_transport_derivative(t: TransportLaw, V, S, x, eps=(1e-3, 1e-4)) -> np.ndarray:
    """Finite-difference value of ``d/de [L_{x_e -> x} S(x_e)]`` at ``e = 0``.

    ``x_e = x + e V(x)``; two central differences with steps ``eps`` are
    Richardson-combined (second-order error, step ratio ``eps[0]/eps[1]``).
    ``S`` is a :class:`TensorField` or a callable returning components.
    """
    x = np.asarray(x, dtype=float)
    Vx = _vector_values(V, x, t.n)
    p, q = S.ttype.p, S.ttype.q
    values = S.values if isinstance(S, TensorField) else S

    def g(e):
        xe = x + e * Vx
        H = t.transport_matrices(xe, x)[0]  # H(x, x_e)
        return apply_matrix(H, values(xe), p, q)

    def central(e):
        return (g(e) - g(-e)) / (2.0 * e)

    coarse, fine = eps
    return richardson(central(coarse), central(fine), ratio=coarse / fine, order=2)


# ---------------------------------------------------------------------------
# curvature and torsion


def curvature_from_parts(G: np.ndarray, D: np.ndarray) -> np.ndarray:
    """``R[m, i, j, k, l] = -(d_l G_ijk - d_k G_ijl + G_iml G_mjk - G_imk G_mjl)``."""
    dterm = D - np.swapaxes(D, -1, -2)
    prod = np.einsum("minl,mnjk->mijkl", G, G)  # (Gamma_l Gamma_k)^i_j
    return -(dterm + prod - np.swapaxes(prod, -1, -2))


def curvature_many(c: Connection, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return curvature_from_parts(c.components_many(pts), c.dcomponents_many(pts))


def curvature_fd_many(c: Connection, points, scheme: FDScheme = DEFAULT_SCHEME) -> np.ndarray:
    """Curvature with ``d_l Gamma`` replaced by finite differences of evaluated components."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))

    def comps(x):
        return c.components_many(x[None, :])[0]

    out = []
    for x in pts:
        D = np.stack([fd_partial(comps, x, l, scheme) for l in range(1, c.n + 1)], axis=-1)
        out.append(curvature_from_parts(comps(x)[None], D[None])[0])
    return np.stack(out)


def curvature_tensor(c: Connection, p) -> Tensor:
    """Coordinate components ``R^i_{jkl}`` at ``p``; ``R[:, :, k, l]`` is the matrix ``R_kl``."""
    x = c.chart.require(p)
    return Tensor(TensorType(1, 3), c.n, curvature_many(c, x[None, :])[0], tuple(x), COORD)


def max_curvature(c: Connection, points) -> tuple[float, np.ndarray]:
    """Largest ``|R^i_{jkl}|`` over ``points`` and the point where it occurs."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    R = np.abs(curvature_many(c, pts)).reshape(len(pts), -1).max(axis=1)
    r = int(np.argmax(R))
    return float(R[r]), pts[r]


def torsion_many(c, points, frame: Frame | None = None) -> np.ndarray:
    """``T[m, i, j, k] = -(G_ijk - G_ikj) - C^i_jk`` in ``frame`` (coordinate by default)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if frame is not None and not frame.is_coordinate():
        framed = transform_connection(c, frame)
        G = framed.components_many(pts)
        C = structure_coefficients_many(framed.frame, pts)
    elif isinstance(c, FramedConnection) and not c.frame.is_coordinate():
        G = c.components_many(pts)
        C = structure_coefficients_many(c.frame, pts)
    else:
        G = c.components_many(pts)
        C = 0.0
    return -(G - np.swapaxes(G, -1, -2)) - C


def torsion_tensor(c, f: Frame | None, p) -> Tensor:
    x = c.chart.require(p)
    tag = COORD if f is None else f.tag
    return Tensor(TensorType(1, 2), c.n, torsion_many(c, x[None, :], f)[0], tuple(x), tag)


# ---------------------------------------------------------------------------
# parallel transport


def parse_path(texts: Sequence[str], n: int) -> list[Expr]:
    """Path components in the parameter ``t``."""
    if len(texts) != n:
        raise ValueError(f"a path in dimension {n} needs {n} components, got {len(texts)}")
    return [parse_expr(s, 1, aliases={"t": 1}) for s in texts]


def parallel_transport_path(c: Connection, path: Sequence[Expr], t0: float, t1: float,
                            B0: Tensor, steps: int) -> Tensor:
    """Solve ``nabla_{gamma'} B = 0`` with RK4 from ``gamma(t0)`` to ``gamma(t1)``.

    ``path`` holds ``n`` expressions in the single variable ``x1`` (spelled
    ``t`` by :func:`parse_path`).
    """
    n = c.n
    if len(path) != n:
        raise ValueError(f"path needs {n} components")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    p, q = B0.ttype.p, B0.ttype.q
    if p > 1 or q > 1:
        raise TensorMismatchError(f"parallel transport supports types up to (1,1), got {B0.ttype}")
    prog = Program(list(path) + [diff_expr(e, 1) for e in path])

    def gamma(t):
        vals = prog.at([t])
        return vals[:n], vals[n:]

    start, _ = gamma(t0)
    c.chart.require(start)
    if not same_point(B0.at, start, atol=1e-9):
        raise TensorMismatchError(f"B0 lives at {B0.at}, path starts at {tuple(start)}")
    shape = B0.components.shape

    def rhs(t, y):
        x, v = gamma(t)
        # slack absorbs rounding in t0 + i*dt at the final stage
        if not c.chart.contains(x, slack=1e-12):
            raise OutOfChartError(x, c.chart.bounds)
        GV = c.components_many(x[None, :])[0] @ v
        B = y.reshape(shape)
        if p == 1 and q == 1:
            dB = -GV @ B + B @ GV
        elif p == 1:
            dB = -GV @ B
        elif q == 1:
            dB = GV.T @ B
        else:
            dB = np.zeros(shape)
        return np.asarray(dB).reshape(-1)

    y = B0.components.reshape(-1).astype(float)
    dt = (t1 - t0) / steps
    for i in range(steps):
        y = rk4_step(rhs, y, t0 + i * dt, dt)
    end, _ = gamma(t1)
    c.chart.require(end)
    return Tensor(B0.ttype, n, y.reshape(shape), tuple(end), COORD)


# ---------------------------------------------------------------------------
# annihilation of transported fields


def check_annihilation(t: TransportLaw, c: Connection, y, A0: Tensor,
                       points=None, scheme: FDScheme = DEFAULT_SCHEME) -> float:
    """Max ``|nabla_{d_k}(L_y A0)|`` over sample points and coordinate directions."""
    field = transport_extend_field(t, y, A0)
    pts = t.chart.samples()[:50] if points is None else np.atleast_2d(points)
    eye = np.eye(t.n)
    worst = 0.0
    for x in pts:
        values = field.components(x)
        dvalues = np.stack([fd_partial(field.components, x, k, scheme) for k in range(1, t.n + 1)],
                           axis=-1)
        G = c.components_many(x[None, :])[0]
        for k in range(t.n):
            out = covariant_from_parts(G, eye[k], values, dvalues, A0.p, A0.q)
            worst = max(worst, float(np.max(np.abs(out))))
    return worst
