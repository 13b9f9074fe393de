"""Inverse problems: frame fields from flat connections, closedness of the
rows of ``F``, and holonomic coordinates whose differentials are those rows.

All path integrals run along axis-parallel staircases inside the chart,
moving the coordinates in ascending order unless ``order`` says otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chart import Chart, Frame, MatrixField, invert_matrices, transform_connection
from .connection import Connection, derive_connection, max_curvature, torsion_many
from .errors import ClosednessError, CurvatureError
from .numeric import (
    DEFAULT_SCHEME, FDScheme, fd_partial, richardson, rk4_step, simpson_line_integral,
)
from .transport import TransportLaw

CLOSED_TOL = 1e-8
FLAT_TOL = 1e-6
TORSION_TOL = 1e-8
SEPARATION_TOL = 1e-6
STEPS_PER_SEGMENT = 1000
SIMPSON_PER_UNIT = 1000


def _order(n: int, order) -> tuple:
    if order is None:
        return tuple(range(n))
    order = tuple(int(k) for k in order)
    if sorted(order) != list(range(n)):
        raise ValueError(f"order must be a permutation of 0..{n - 1}, got {order}")
    return order


def staircase(base, x, order=None) -> list[np.ndarray]:
    """Corners of the axis-parallel path ``base -> x``."""
    cur = np.array(base, dtype=float)
    x = np.asarray(x, dtype=float)
    corners = [cur.copy()]
    for k in _order(cur.size, order):
        cur[k] = x[k]
        corners.append(cur.copy())
    return corners


# ---------------------------------------------------------------------------
# closedness


@dataclass
class ClosednessReport:
    defects: list
    tolerance: float = CLOSED_TOL

    @property
    def closed(self) -> list:
        return [d < self.tolerance for d in self.defects]

    @property
    def all_closed(self) -> bool:
        return all(self.closed)

    @property
    def max_defect(self) -> float:
        return max(self.defects) if self.defects else 0.0

    def to_dict(self) -> dict:
        return {
            "defects": [float(d) for d in self.defects],
            "closed": self.closed,
            "max_defect": float(self.max_defect),
            "all_closed": self.all_closed,
            "tolerance": self.tolerance,
        }


def closedness_defects_many(F: MatrixField, points) -> np.ndarray:
    """``|d_k F^i_j - d_j F^i_k|`` maximised over ``j < k``; shape ``(m, rows)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = F.n
    dF = np.stack([F.diff(k).many(pts) for k in range(1, n + 1)], axis=1)  # (m, k, i, j)
    # W[m, i, j, k] = d_k F^i_j
    W = np.transpose(dF, (0, 2, 3, 1))
    A = np.abs(W - np.swapaxes(W, -1, -2))
    return A.reshape(len(pts), n, -1).max(axis=2)


def check_closedness(F: MatrixField, points=None) -> ClosednessReport:
    """Per-row closedness of the 1-forms ``F^i_j dx^j`` over sample points."""
    if points is None:
        if F.chart is None:
            raise ValueError("pass sample points or a matrix field bound to a chart")
        points = F.chart.samples()
    defects = closedness_defects_many(F, points).max(axis=0)
    return ClosednessReport([float(d) for d in defects])


# ---------------------------------------------------------------------------
# frame fields from connections


def _gamma_k(c: Connection, k: int, pts) -> np.ndarray:
    if c.gammas is not None:
        return c.gammas[k].many(pts)
    return c.components_many(pts)[..., k]


class IntegratedFrameField:
    """``F`` solving ``dF/dx^k = F Gamma_k``, ``F(base) = F0``, by RK4 along staircases.

    Values are cached per exact query point.
    """

    def __init__(self, c: Connection, base, F0, order=None, steps: int = STEPS_PER_SEGMENT):
        self.connection = c
        self.chart = c.chart
        self.base = c.chart.require(base)
        self.F0 = np.array(F0, dtype=float)
        self.order = _order(c.n, order)
        self.steps = max(int(steps), STEPS_PER_SEGMENT)
        self._cache: dict = {}

    @property
    def n(self) -> int:
        return self.chart.n

    def at(self, p) -> np.ndarray:
        return self.many(self.chart.require(p)[None, :])[0]

    __call__ = at

    def many(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        keys = [tuple(p) for p in pts]
        todo = sorted({k for k in keys if k not in self._cache})
        if todo:
            for key, value in zip(todo, self._integrate(np.array(todo))):
                self._cache.setdefault(key, value)
        return np.stack([self._cache[k] for k in keys])

    def _integrate(self, pts) -> np.ndarray:
        for p in pts:
            self.chart.require(p)
        m, n = pts.shape
        F = np.broadcast_to(self.F0, (m, n, n)).copy()
        cur = np.broadcast_to(self.base, (m, n)).copy()
        h = 1.0 / self.steps
        for k in self.order:
            length = pts[:, k] - cur[:, k]
            start = cur[:, k].copy()

            def rhs(s, Y, k=k, length=length, start=start):
                nodes = cur.copy()
                nodes[:, k] = start + s * length
                return Y @ (_gamma_k(self.connection, k, nodes) * length[:, None, None])

            for i in range(self.steps):
                F = rk4_step(rhs, F, i * h, h)
            cur[:, k] = pts[:, k]
        return F


def integrate_frame_field(c: Connection, base=None, F0=None, order=None,
                          steps: int = STEPS_PER_SEGMENT, check_points=None) -> IntegratedFrameField:
    """Recover a frame field whose derived connection is ``c``.

    Rejects connections whose curvature exceeds ``1e-6`` on the sample
    lattice, since the equation is then not integrable.
    """
    pts = c.chart.samples() if check_points is None else check_points
    worst, where = max_curvature(c, pts)
    if not worst < FLAT_TOL:
        raise CurvatureError(worst, where)
    base = c.chart.center if base is None else base
    F0 = np.eye(c.n) if F0 is None else F0
    return IntegratedFrameField(c, base, F0, order, steps)


@dataclass
class RoundTrip:
    D: np.ndarray
    gauge_spread: float
    transport_residual: float
    path_independence: float | None = None
    connection_residual: float | None = None
    points: int = 0

    def to_dict(self) -> dict:
        return {
            "D": self.D.tolist(),
            "gauge_spread": self.gauge_spread,
            "transport_residual": self.transport_residual,
            "path_independence": self.path_independence,
            "connection_residual": self.connection_residual,
            "points": self.points,
        }


def reconstruction_round_trip(t: TransportLaw, base=None, F0=None, points=None,
                              reverse_check: bool = True, connection_check: int = 0) -> RoundTrip:
    """Derive the connection of ``t``, integrate it back, and compare with ``F``.

    ``D`` is estimated at the base point as ``F_rec(base) F(base)^-1`` and the
    spread of ``F_rec F^-1`` around it is reported; transport matrices built
    from ``F_rec`` are compared with those of ``t`` on consecutive point pairs.
    ``connection_check`` > 0 re-derives the connection from ``F_rec`` by finite
    differences at that many points.
    """
    c = derive_connection(t)
    rec = integrate_frame_field(c, base, F0)
    pts = t.chart.samples() if points is None else np.atleast_2d(points)
    F_true = t.F.many(pts)
    F_rec = rec.many(pts)
    Fb = t.F.at(rec.base)
    D = rec.at(rec.base) @ np.linalg.inv(Fb)
    ratio = F_rec @ invert_matrices(F_true, pts, "F")
    spread = float(np.max(np.abs(ratio - D)))
    xs, ys = pts, np.roll(pts, 1, axis=0)
    Fr_x, Fr_y = F_rec, np.roll(F_rec, 1, axis=0)
    H_rec = np.linalg.solve(Fr_y, Fr_x)
    H_true = t.transport_matrices(xs, ys)
    residual = float(np.max(np.abs(H_rec - H_true)))
    report = RoundTrip(D=D, gauge_spread=spread, transport_residual=residual, points=len(pts))
    if reverse_check:
        rev = IntegratedFrameField(c, rec.base, rec.F0, order=tuple(reversed(range(t.n))))
        report.path_independence = float(np.max(np.abs(rev.many(pts) - F_rec)))
    if connection_check:
        report.connection_residual = derived_connection_residual(rec, c, pts[:connection_check])
    return report


def derived_connection_residual(rec: IntegratedFrameField, c: Connection, points,
                                scheme: FDScheme = DEFAULT_SCHEME) -> float:
    """Max ``|F_rec^-1 d_k F_rec - Gamma_k|`` with ``d_k`` by finite differences.

    All displaced points are integrated in one batch.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m, n = pts.shape
    steps = [scheme.h, scheme.h / 2.0] if scheme.richardson else [scheme.h]
    # displaced[s, sign, k, point]
    offsets = np.array([[[sign * h * np.eye(n)[k] for k in range(n)] for sign in (1.0, -1.0)]
                        for h in steps])
    displaced = pts[None, None, None, :, :] + offsets[:, :, :, None, :]
    values = rec.many(displaced.reshape(-1, n)).reshape(displaced.shape[:-1] + (n, n))
    central = (values[:, 0] - values[:, 1]) / (2.0 * np.asarray(steps)[:, None, None, None, None])
    dF = richardson(central[0], central[1]) if scheme.richardson else central[0]  # (k, m, n, n)
    Finv = np.linalg.inv(rec.many(pts))
    G = c.components_many(pts)
    derived = np.einsum("mij,kmjl->milk", Finv, dF)
    return float(np.max(np.abs(derived - G)))


# ---------------------------------------------------------------------------
# holonomic coordinates


def _simpson_count(length: float, per_unit: int) -> int:
    count = max(2, math.ceil(abs(length) * per_unit))
    return count + (count % 2)


class CoordinateMap:
    """``x -> x~`` with ``d x~^j = F^j_i dx^i`` and ``x~(base) = 0``."""

    def __init__(self, chart: Chart, base, F: MatrixField, order=None,
                 per_unit: int = SIMPSON_PER_UNIT):
        self.chart = chart
        self.base = chart.require(base)
        self.jacobian_field = F.on(chart)
        self.order = _order(chart.n, order)
        self.per_unit = max(int(per_unit), SIMPSON_PER_UNIT)

    def values(self, x) -> np.ndarray:
        x = self.chart.require(x)
        return self._integrate(x)

    __call__ = values

    def _integrate(self, x) -> np.ndarray:
        corners = staircase(self.base, x, self.order)
        total = np.zeros(self.chart.n)
        for a, b in zip(corners[:-1], corners[1:]):
            length = float(np.max(np.abs(b - a)))
            if length == 0.0:
                continue
            total = total + simpson_line_integral(
                self.jacobian_field.many, a, b, _simpson_count(length, self.per_unit), vectorized=True
            )
        return total

    def many(self, points) -> np.ndarray:
        return np.stack([self.values(p) for p in np.atleast_2d(points)])

    def jacobian_residual(self, points, scheme: FDScheme = DEFAULT_SCHEME) -> float:
        """Max ``|d x~ / dx - F|`` with the Jacobian taken by finite differences."""
        worst = 0.0
        for x in np.atleast_2d(points):
            J = np.stack([fd_partial(self._integrate, x, k, scheme) for k in range(1, self.chart.n + 1)],
                         axis=1)
            worst = max(worst, float(np.max(np.abs(J - self.jacobian_field.at(x)))))
        return worst


def holonomic_coordinates(F: MatrixField, base, chart: Chart | None = None, order=None,
                          per_unit: int = SIMPSON_PER_UNIT) -> CoordinateMap:
    chart = chart or F.chart
    if chart is None:
        raise ValueError("holonomic_coordinates needs a chart")
    report = check_closedness(F.on(chart), chart.samples())
    if not report.all_closed:
        raise ClosednessError(report.defects)
    return CoordinateMap(chart, base, F, order, per_unit)


def zero_component_residual(t: TransportLaw, points=None) -> float:
    """Max connection component in the frame ``F^-1`` (``d/dx~`` when closed)."""
    pts = t.chart.samples() if points is None else np.atleast_2d(points)
    frame = Frame(t.chart, t.F.inverse_symbolic(), "holonomic")
    framed = transform_connection(derive_connection(t), frame)
    return float(np.max(np.abs(framed.components_many(pts))))


# ---------------------------------------------------------------------------
# flatness verdict


@dataclass
class FlatnessReport:
    curvature_max: float
    torsion_max: float
    closedness: ClosednessReport
    extra: dict = field(default_factory=dict)

    @property
    def holonomic_basis_exists(self) -> bool:
        return self.torsion_max < TORSION_TOL

    @property
    def biconditional_holds(self) -> bool:
        d = self.closedness.max_defect
        both_zero = self.torsion_max < TORSION_TOL and d < CLOSED_TOL
        both_nonzero = self.torsion_max > SEPARATION_TOL and d > SEPARATION_TOL
        return both_zero or both_nonzero

    def to_dict(self) -> dict:
        return {
            "curvature_max": self.curvature_max,
            "torsion_max": self.torsion_max,
            "closedness": self.closedness.to_dict(),
            "holonomic_basis_exists": self.holonomic_basis_exists,
            "biconditional_holds": self.biconditional_holds,
            **self.extra,
        }


def flatness_report(t: TransportLaw, points=None) -> FlatnessReport:
    pts = t.chart.samples() if points is None else np.atleast_2d(points)
    c = derive_connection(t)
    curv, _ = max_curvature(c, pts)
    tors = float(np.max(np.abs(torsion_many(c, pts))))
    return FlatnessReport(curv, tors, check_closedness(t.F, pts))
