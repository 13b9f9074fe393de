"""Flat linear transports generated by an invertible matrix field ``F``.

A transport acts on vector components through ``H(y, x) = F(y)^-1 F(x)``
and on covector components through the inverse transpose of ``H``, which
keeps every contraction invariant.  Higher tensors take one factor per
slot.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .chart import (
    Chart, Frame, MatrixField, SYMBOLIC_INVERSE_MAX_N, check_invertible, invert_matrices,
    invert_matrix,
)
from .errors import TensorMismatchError
from .tensor import (
    COORD, Tensor, contract, linear_combine, max_abs_diff, random_tensor, same_point,
    tensor_product,
)

AXIOM_TOL = 1e-9
IDENTITY_TOL = 1e-12


class TransportLaw:
    """Chart plus invertible matrix field ``F``; realises ``L_{x->y}``."""

    def __init__(self, chart: Chart, F: MatrixField, label: str = "", validate: bool = True):
        if F.n != chart.n:
            raise ValueError(f"F is {F.n}x{F.n} but the chart has dimension {chart.n}")
        self.chart = chart
        self.F = F.on(chart)
        self.label = label
        if validate:
            pts = chart.samples()
            check_invertible(self.F, pts, "F")
            Fm = self.F.many(pts)
            H = np.linalg.solve(Fm, Fm)
            err = float(np.max(np.abs(H - np.eye(self.n))))
            if err > IDENTITY_TOL:
                raise ValueError(f"H(x, x) deviates from identity by {err:.2e}")

    @property
    def n(self) -> int:
        return self.chart.n

    def __repr__(self):
        return f"TransportLaw(label={self.label!r}, F={self.F.to_strings()})"

    def F_at(self, p) -> np.ndarray:
        return self.F.at(p)

    def transport_matrix(self, x, y) -> np.ndarray:
        """``H(y, x) = F(y)^-1 F(x)``: acts on vector components from ``x`` to ``y``."""
        x = self.chart.require(x)
        y = self.chart.require(y)
        Fx, Fy = self.F.many(np.stack([x, y]))
        return invert_matrix(Fy, y, "F") @ Fx

    def transport_matrices(self, xs, ys) -> np.ndarray:
        """Batched ``H(ys[m], xs[m])``; no bounds checks."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        return invert_matrices(self.F.many(ys), ys, "F") @ self.F.many(xs)

    def inverse_components(self, x, y) -> np.ndarray:
        """Matrix of the inverse bivector, i.e. ``H(y, x)^-1``."""
        return invert_matrix(self.transport_matrix(x, y), y, "H")


def transport_matrix(t: TransportLaw, x, y) -> np.ndarray:
    return t.transport_matrix(x, y)


def apply_matrix(H: np.ndarray, comps: np.ndarray, p: int, q: int, Hinv: np.ndarray | None = None):
    """Transform components: ``H`` on each contravariant slot, ``Hinv^T`` on each covariant one."""
    out = np.asarray(comps, dtype=float)
    if p + q == 0:
        return out.copy()
    if q and Hinv is None:
        Hinv = np.linalg.inv(H)
    for a in range(p):
        out = np.moveaxis(np.tensordot(H, out, axes=([1], [a])), 0, a)
    for b in range(p, p + q):
        out = np.moveaxis(np.tensordot(Hinv, out, axes=([0], [b])), 0, b)
    return out


def transport_tensor(t: TransportLaw, x, y, T: Tensor) -> Tensor:
    """Move ``T`` (given at ``x`` in the coordinate frame) to ``y``."""
    x = t.chart.require(x)
    y = t.chart.require(y)
    if T.n != t.n:
        raise TensorMismatchError(f"tensor dimension {T.n} != chart dimension {t.n}")
    if not same_point(T.at, x):
        raise TensorMismatchError(f"tensor lives at {T.at}, not at {tuple(x)}")
    if T.frame_tag != COORD:
        raise TensorMismatchError(f"expected coordinate-frame components, got frame {T.frame_tag!r}")
    if T.ttype.rank == 0:
        return T.moved(y)
    H = t.transport_matrix(x, y)
    Hinv = invert_matrix(H, y, "H") if T.q else None
    return T.moved(y, apply_matrix(H, T.components, T.p, T.q, Hinv))


# ---------------------------------------------------------------------------
# axiom suite


@dataclass
class AxiomReport:
    trials: int
    seed: int
    violations: dict = field(default_factory=dict)
    tolerance: float = AXIOM_TOL

    @property
    def passed(self) -> bool:
        return all(v < self.tolerance for v in self.violations.values())

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "tolerance": self.tolerance,
            "violations": dict(sorted(self.violations.items())),
            "passed": self.passed,
        }


AXIOMS = (
    "type_preservation",
    "linearity",
    "multiplicativity",
    "contraction",
    "composition",
    "identity",
    "inverse",
    "scalar_invariance",
    "inverse_pairing",
)


def check_axioms(t: TransportLaw, trials: int = 100, seed: int = 42) -> AxiomReport:
    """Maximum violation of each transport axiom over seeded random trials."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = dict.fromkeys(AXIOMS, 0.0)
    n = t.n

    def bump(name, value):
        worst[name] = max(worst[name], float(value))

    def L(a, b, T):
        return transport_tensor(t, a, b, T)

    for _ in range(trials):
        x, y, z = t.chart.random_points(rng, 3)
        p, q = (int(v) for v in rng.integers(0, 3, size=2))
        A = random_tensor(rng, p, q, x)
        A2 = random_tensor(rng, p, q, x)
        lam, mu = rng.uniform(-1.0, 1.0, size=2)

        LA = L(x, y, A)
        bump("type_preservation", 0.0 if LA.ttype == A.ttype and same_point(LA.at, y) else np.inf)
        bump("linearity", max_abs_diff(
            L(x, y, linear_combine(lam, A, mu, A2)),
            linear_combine(lam, LA, mu, L(x, y, A2)),
        ))

        p2, q2 = (int(v) for v in rng.integers(0, 2, size=2))
        B = random_tensor(rng, p2, q2, x)
        bump("multiplicativity", max_abs_diff(L(x, y, tensor_product(A, B)),
                                              tensor_product(LA, L(x, y, B))))

        pc, qc = (int(v) for v in rng.integers(1, 3, size=2))
        Cand = random_tensor(rng, pc, qc, x)
        up, dn = int(rng.integers(1, pc + 1)), int(rng.integers(1, qc + 1))
        bump("contraction", max_abs_diff(L(x, y, contract(Cand, up, dn)),
                                         contract(L(x, y, Cand), up, dn)))

        bump("composition", max_abs_diff(L(y, z, LA), L(x, z, A)))
        bump("identity", max_abs_diff(L(x, x, A), A))
        bump("inverse", max_abs_diff(L(y, x, LA), A))

        lam_t = Tensor.scalar(lam, x)
        bump("scalar_invariance", abs(L(x, y, lam_t).value() - lam))

        H = t.transport_matrix(x, y)
        bump("inverse_pairing", np.max(np.abs(H @ t.inverse_components(x, y) - np.eye(n))))

    return AxiomReport(trials=trials, seed=seed, violations=worst)


class PerturbedLaw(TransportLaw):
    """Negative control: ``H(y, x) = F(y)^-1 F(x) + scale * offset``.

    Breaks composition and identity on purpose so that the axiom suite has
    something to catch.
    """

    def __init__(self, base: TransportLaw, scale: float = 0.01, offset=None):
        super().__init__(base.chart, base.F, f"perturbed:{base.label}", validate=False)
        self.scale = float(scale)
        self.offset = np.ones((base.n, base.n)) if offset is None else np.asarray(offset, float)

    def transport_matrix(self, x, y) -> np.ndarray:
        return super().transport_matrix(x, y) + self.scale * self.offset

    def transport_matrices(self, xs, ys) -> np.ndarray:
        return super().transport_matrices(xs, ys) + self.scale * self.offset


# ---------------------------------------------------------------------------
# gauge freedom and adapted frames


def gauge_left_multiply(t: TransportLaw, D) -> TransportLaw:
    """Same transport generated by ``D @ F`` for a constant invertible ``D``."""
    D = np.asarray(D, dtype=float)
    if D.shape != (t.n, t.n):
        raise ValueError(f"D must be {t.n}x{t.n}")
    invert_matrix(D, None, "gauge matrix D")
    return TransportLaw(t.chart, t.F.left_multiply(D), f"{t.label}|gauge", validate=True)


def adapted_frame(t: TransportLaw) -> Frame:
    """Frame ``E = F^-1`` in which every transport matrix is the identity."""
    tag = f"adapted:{t.label}" if t.label else "adapted"
    if t.n <= SYMBOLIC_INVERSE_MAX_N:
        return Frame(t.chart, t.F.inverse_symbolic(), tag)
    warnings.warn(
        f"n = {t.n} > {SYMBOLIC_INVERSE_MAX_N}: adapted frame is evaluated numerically only",
        RuntimeWarning,
        stacklevel=2,
    )
    return Frame(t.chart, None, tag, numeric=lambda p: np.linalg.inv(t.F.at(p)))


def frame_transport_matrix(t: TransportLaw, f: Frame, x, y) -> np.ndarray:
    """Transport matrix expressed in frame ``f``: ``E(y)^-1 H(y, x) E(x)``."""
    return f.inverse_at(y) @ t.transport_matrix(x, y) @ f.at(x)


def push_frame(t: TransportLaw, f: Frame, x, y) -> float:
    """Max deviation of ``L_{x->y} E_a(x)`` from ``E_a(y)`` over all frame vectors."""
    Ex, Ey = f.at(x), f.at(y)
    worst = 0.0
    for a in range(t.n):
        moved = transport_tensor(t, x, y, Tensor.vector(Ex[:, a], x))
        worst = max(worst, float(np.max(np.abs(moved.components - Ey[:, a]))))
    return worst


# ---------------------------------------------------------------------------
# extension of a single tensor to a field


class ExtendedField:
    """The field ``x -> L_{y->x} A0``."""

    def __init__(self, t: TransportLaw, y, A0: Tensor):
        self.law = t
        self.y = t.chart.require(y)
        if not same_point(A0.at, self.y):
            raise TensorMismatchError(f"A0 lives at {A0.at}, not at {tuple(self.y)}")
        self.A0 = A0

    def __call__(self, x) -> Tensor:
        return transport_tensor(self.law, self.y, x, self.A0)

    def components(self, x) -> np.ndarray:
        """Components at ``x`` without bounds checks (for finite differences)."""
        x = np.asarray(x, dtype=float)
        H = self.law.transport_matrices(self.y, x)[0]
        Hinv = np.linalg.inv(H) if self.A0.q else None
        return apply_matrix(H, self.A0.components, self.A0.p, self.A0.q, Hinv)


def transport_extend_field(t: TransportLaw, y, A0: Tensor) -> ExtendedField:
    return ExtendedField(t, y, A0)
