"""A single rectangular coordinate chart, matrix fields and frames over it.

Conventions used across the package:

* matrices are indexed ``[row, column]`` with the superscript as row, so a
  frame matrix ``E`` has ``E[i, a]`` = coordinate component ``i`` of frame
  vector ``a``;
* connection components are arrays ``G[i, j, k]`` = Gamma^i_{jk}, the last
  index being the differentiation direction;
* the antisymmetrisation bracket is ``A_[kl] = (A_kl - A_lk) / 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import OutOfChartError, SingularMatrixError
from .expr import Const, Expr, add, as_expr, diff_expr, mul, neg, parse_expr, sub, div, to_text
from .kernels import Program
from .tensor import COORD, Tensor, TensorType

DET_TOL = 1e-9
LATTICE_SIZE = 100
# Korobov generator for the sample lattice; 13 gives the largest minimum
# spacing for N = 100 jointly in 2, 3 and 4 dimensions.
LATTICE_GENERATOR = 13
# sample points keep this fraction of each side away from the boundary
LATTICE_MARGIN = 0.01
SYMBOLIC_INVERSE_MAX_N = 4


@dataclass(frozen=True)
class Chart:
    bounds: tuple

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if not bounds:
            raise ValueError("a chart needs at least one coordinate")
        for k, (lo, hi) in enumerate(bounds, start=1):
            if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
                raise ValueError(f"degenerate interval for x{k}: [{lo}, {hi}]")
        object.__setattr__(self, "bounds", bounds)

    @classmethod
    def box(cls, n: int, lo: float = -1.0, hi: float = 1.0) -> "Chart":
        return cls(((lo, hi),) * n)

    @property
    def n(self) -> int:
        return len(self.bounds)

    @property
    def lo(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @property
    def hi(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, p, slack: float = 0.0) -> bool:
        """Closed-box membership; ``slack`` widens each side by that fraction of its width."""
        p = np.asarray(p, dtype=float)
        pad = slack * (self.hi - self.lo)
        return p.shape == (self.n,) and bool(np.all((p >= self.lo - pad) & (p <= self.hi + pad)))

    def require(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.n,):
            raise ValueError(f"expected a point with {self.n} coordinates, got {p.tolist()}")
        if not self.contains(p):
            raise OutOfChartError(p, self.bounds)
        return p

    def samples(self, count: int = LATTICE_SIZE) -> np.ndarray:
        """Deterministic rank-1 lattice of ``count`` interior points.

        Point 0 is the chart centre.  Coordinates are
        ``frac(i * g**d / count + 1/2)`` mapped affinely onto the box shrunk by
        ``LATTICE_MARGIN`` on every side.
        """
        i = np.arange(count)[:, None]
        z = np.array([pow(LATTICE_GENERATOR, d, count) if count > 1 else 0 for d in range(self.n)])
        u = np.mod(i * z[None, :] / count + 0.5, 1.0)
        u = LATTICE_MARGIN + (1.0 - 2.0 * LATTICE_MARGIN) * u
        return self.lo + (self.hi - self.lo) * u

    def grid(self, g: int) -> np.ndarray:
        """Cell-centred ``g x ... x g`` grid (``g**n`` points, all interior)."""
        if g < 1:
            raise ValueError("grid size must be positive")
        axes = [lo + (hi - lo) * (np.arange(g) + 0.5) / g for lo, hi in self.bounds]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def random_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        u = rng.uniform(LATTICE_MARGIN, 1.0 - LATTICE_MARGIN, size=(count, self.n))
        return self.lo + (self.hi - self.lo) * u

    def to_dict(self) -> dict:
        return {"n": self.n, "bounds": [list(b) for b in self.bounds]}


# ---------------------------------------------------------------------------
# matrix fields


def _mat(entries) -> tuple:
    rows = tuple(tuple(as_expr(e) for e in row) for row in entries)
    n = len(rows)
    if n == 0 or any(len(r) != n for r in rows):
        raise ValueError("matrix fields must be square and non-empty")
    return rows


class MatrixField:
    """An ``n x n`` matrix whose entries are expressions in the chart coordinates."""

    def __init__(self, entries, chart: Chart | None = None):
        self.entries = _mat(entries)
        self.chart = chart
        if chart is not None and chart.n != self.n:
            raise ValueError(f"{self.n}x{self.n} field on a {chart.n}-dimensional chart")

    @classmethod
    def from_strings(cls, rows: Sequence[Sequence[str]], n: int, chart: Chart | None = None):
        return cls([[parse_expr(s, n) for s in row] for row in rows], chart)

    @classmethod
    def identity(cls, n: int, chart: Chart | None = None):
        return cls([[Const(1.0 if i == j else 0.0) for j in range(n)] for i in range(n)], chart)

    @classmethod
    def constant(cls, matrix, chart: Chart | None = None):
        m = np.asarray(matrix, dtype=float)
        return cls([[Const(v) for v in row] for row in m], chart)

    @classmethod
    def zeros(cls, n: int, chart: Chart | None = None):
        return cls.constant(np.zeros((n, n)), chart)

    @property
    def n(self) -> int:
        return len(self.entries)

    def on(self, chart: Chart) -> "MatrixField":
        return MatrixField(self.entries, chart)

    def __getitem__(self, ij) -> Expr:
        i, j = ij
        return self.entries[i][j]

    def __eq__(self, other):
        return isinstance(other, MatrixField) and self.entries == other.entries

    __hash__ = None

    def __repr__(self):
        return f"MatrixField({self.to_strings()})"

    def to_strings(self) -> list[list[str]]:
        return [[to_text(e) for e in row] for row in self.entries]

    @cached_property
    def program(self) -> Program:
        return Program([e for row in self.entries for e in row])

    def is_constant(self) -> bool:
        return all(isinstance(e, Const) for row in self.entries for e in row)

    def many(self, points) -> np.ndarray:
        """Evaluate at each row of ``points``; returns shape ``(m, n, n)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.n:
            raise ValueError(f"points must have {self.n} coordinates")
        return self.program(pts).reshape(-1, self.n, self.n)

    def at(self, p) -> np.ndarray:
        if self.chart is not None:
            p = self.chart.require(p)
        return self.many(np.asarray(p, dtype=float)[None, :])[0]

    __call__ = at

    def diff(self, k: int) -> "MatrixField":
        """Entrywise ``d/dx^k`` (1-based ``k``)."""
        cache = self.__dict__.setdefault("_diff_cache", {})
        if k not in cache:
            cache[k] = MatrixField([[diff_expr(e, k) for e in row] for row in self.entries], self.chart)
        return cache[k]

    def __matmul__(self, other: "MatrixField") -> "MatrixField":
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        n = self.n
        rows = []
        for i in range(n):
            row = []
            for j in range(n):
                acc = Const(0.0)
                for a in range(n):
                    acc = add(acc, mul(self.entries[i][a], other.entries[a][j]))
                row.append(acc)
            rows.append(row)
        return MatrixField(rows, self.chart or other.chart)

    def left_multiply(self, d) -> "MatrixField":
        """``D @ self`` for a constant numeric matrix ``D``."""
        return MatrixField.constant(d, self.chart) @ self

    def det_expr(self) -> Expr:
        return _det([list(r) for r in self.entries])

    @cached_property
    def det_program(self) -> Program:
        return Program([self.det_expr()]) if self.n <= SYMBOLIC_INVERSE_MAX_N else None

    def inverse_symbolic(self) -> "MatrixField":
        """Adjugate over determinant; only for ``n <= 4``."""
        if self.n > SYMBOLIC_INVERSE_MAX_N:
            raise ValueError(f"symbolic inverse limited to n <= {SYMBOLIC_INVERSE_MAX_N}")
        cached = self.__dict__.get("_inverse")
        if cached is not None:
            return cached
        m = [list(r) for r in self.entries]
        n = self.n
        det = _det(m)
        rows = []
        for i in range(n):
            row = []
            for j in range(n):
                cof = _det(_minor(m, j, i))
                if (i + j) % 2:
                    cof = neg(cof)
                row.append(div(cof, det))
            rows.append(row)
        inv = MatrixField(rows, self.chart)
        self.__dict__["_inverse"] = inv
        return inv


def _minor(m, row, col):
    return [r[:col] + r[col + 1:] for k, r in enumerate(m) if k != row]


def _det(m) -> Expr:
    n = len(m)
    if n == 1:
        return m[0][0]
    if n == 2:
        return sub(mul(m[0][0], m[1][1]), mul(m[0][1], m[1][0]))
    acc = Const(0.0)
    for j in range(n):
        term = mul(m[0][j], _det(_minor(m, 0, j)))
        acc = add(acc, term) if j % 2 == 0 else sub(acc, term)
    return acc


def eval_matrix(mf: MatrixField, p) -> np.ndarray:
    return mf.at(p)


def invert_matrix(m, point=None, what: str = "matrix") -> np.ndarray:
    """Inverse of a numeric matrix, refusing ``|det| <= 1e-9``."""
    m = np.asarray(m, dtype=float)
    det = np.linalg.det(m)
    if not abs(det) > DET_TOL:
        raise SingularMatrixError(point, det, what)
    return np.linalg.inv(m)


def invert_matrices(ms, points=None, what: str = "matrix") -> np.ndarray:
    """Batched :func:`invert_matrix` over a stack of shape ``(m, n, n)``."""
    ms = np.asarray(ms, dtype=float)
    dets = np.linalg.det(ms)
    bad = ~(np.abs(dets) > DET_TOL)
    if np.any(bad):
        r = int(np.flatnonzero(bad)[0])
        raise SingularMatrixError(None if points is None else points[r], dets[r], what)
    return np.linalg.inv(ms)


def invert_matrix_field(mf: MatrixField, p) -> np.ndarray:
    return invert_matrix(mf.at(p), p)


def check_invertible(mf: MatrixField, points, what: str = "matrix field") -> None:
    dets = np.linalg.det(mf.many(points))
    bad = ~(np.abs(dets) > DET_TOL)
    if np.any(bad):
        r = int(np.flatnonzero(bad)[0])
        raise SingularMatrixError(points[r], dets[r], what)


# ---------------------------------------------------------------------------
# frames


class Frame:
    """Frame field ``E_a = E[i, a] d/dx^i``; the coordinate frame has ``E = I``.

    ``numeric`` replaces ``E`` by a pointwise evaluator for frames that have
    no closed form (adapted frames with ``n > 4``); such frames support
    evaluation only.
    """

    def __init__(self, chart: Chart, E: MatrixField | None, tag: str,
                 numeric: Callable | None = None, validate: bool = True):
        if E is None and numeric is None:
            raise ValueError("a frame needs a matrix field or a numeric evaluator")
        self.chart = chart
        self.E = None if E is None else E.on(chart)
        self.tag = tag
        self.numeric = numeric
        if validate:
            check_invertible(self, chart.samples(), f"frame {tag!r}")

    @classmethod
    def coordinate(cls, chart: Chart) -> "Frame":
        return cls(chart, MatrixField.identity(chart.n), COORD, validate=False)

    @property
    def n(self) -> int:
        return self.chart.n

    @property
    def symbolic(self) -> bool:
        return self.E is not None

    def is_coordinate(self) -> bool:
        if self.E is None:
            return False
        n = self.n
        return all(
            isinstance(self.E[i, j], Const) and self.E[i, j].value == (1.0 if i == j else 0.0)
            for i in range(n) for j in range(n)
        )

    def many(self, points) -> np.ndarray:
        if self.E is not None:
            return self.E.many(points)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.stack([np.asarray(self.numeric(p), dtype=float) for p in pts])

    def at(self, p) -> np.ndarray:
        p = self.chart.require(p)
        return self.many(p[None, :])[0]

    def inverse_at(self, p) -> np.ndarray:
        return invert_matrix(self.at(p), p, f"frame {self.tag!r}")

    def inverse_field(self) -> MatrixField:
        self._need_symbolic()
        return self.E.inverse_symbolic()

    def _need_symbolic(self):
        if self.E is None:
            raise ValueError(f"frame {self.tag!r} has no closed form")

    def __repr__(self):
        return f"Frame(tag={self.tag!r}, E={self.E.to_strings() if self.E else '<numeric>'})"


def structure_coefficients(f: Frame, p) -> Tensor:
    """``C^k_ij`` with ``[E_i, E_j] = C^k_ij E_k``, as a (1, 2)-tensor in frame ``f``."""
    p = f.chart.require(p)
    return Tensor(TensorType(1, 2), f.n, structure_coefficients_many(f, p[None, :])[0],
                  tuple(p), f.tag)


def structure_coefficients_many(f: Frame, points) -> np.ndarray:
    """Batched structure coefficients; shape ``(m, k, i, j)``."""
    f._need_symbolic()
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = f.n
    E = f.E.many(pts)
    Einv = invert_matrices(E, pts, f"frame {f.tag!r}")
    dE = np.stack([f.E.diff(a).many(pts) for a in range(1, n + 1)], axis=1)  # (m, a, r, col)
    # D[m, i, c, j] = E_i(E^c_j) = E[a, i] d_a E[c, j]
    D = np.einsum("mai,macj->micj", E, dE)
    bracket = D - np.transpose(D, (0, 3, 2, 1))  # [E_i, E_j]^c
    return np.einsum("mkc,micj->mkij", Einv, bracket)


# ---------------------------------------------------------------------------
# connection components in a frame


class FramedConnection:
    """Connection components ``G[i, j, k]`` with respect to a (possibly anholonomic) frame.

    Produced by :func:`transform_connection`; ``frame.E`` is always the full
    matrix relative to the coordinate frame.
    """

    def __init__(self, chart: Chart, frame: Frame, evaluator: Callable):
        self.chart = chart
        self.frame = frame
        self._evaluator = evaluator

    @property
    def n(self) -> int:
        return self.chart.n

    def components_many(self, points) -> np.ndarray:
        return self._evaluator(np.atleast_2d(np.asarray(points, dtype=float)))

    def components(self, p) -> np.ndarray:
        p = self.chart.require(p)
        return self.components_many(p[None, :])[0]


def transform_connection(conn, f: Frame) -> FramedConnection:
    """Components of ``conn`` in the frame ``E'_b = A[a, b] E_a``.

    ``A = f.E`` is read relative to the frame ``conn`` is currently expressed
    in (the coordinate frame for a plain connection).  Implements

        G'^I_JK = Ainv^I_i A^j_J A^k_K G^i_jk + Ainv^I_i E'_K(A^i_J)

    where ``E'_K`` acts as ``E'[a, K] d_a`` and ``E' = E_current A``.
    """
    f._need_symbolic()
    chart = conn.chart
    current = getattr(conn, "frame", None)
    A = f.E
    if current is None or current.is_coordinate():
        composite = A
    else:
        composite = current.E @ A
    new_frame = Frame(chart, composite, f.tag, validate=True)
    n = chart.n
    dA = [A.diff(a) for a in range(1, n + 1)]

    def evaluate(points):
        G = conn.components_many(points)
        Am = A.many(points)
        Ainv = invert_matrices(Am, points, f"frame {f.tag!r}")
        Em = composite.many(points)
        dAm = np.stack([d.many(points) for d in dA], axis=1)  # (m, a, i, J)
        first = np.einsum("mIi,mijk,mjJ,mkK->mIJK", Ainv, G, Am, Am)
        deriv = np.einsum("maK,maiJ->miJK", Em, dAm)
        return first + np.einsum("mIi,miJK->mIJK", Ainv, deriv)

    return FramedConnection(chart, new_frame, evaluate)
