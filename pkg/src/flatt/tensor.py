"""Dense (p, q)-tensors attached to a point and a frame.

Component arrays have shape ``(n,) * (p + q)`` with all contravariant
indices first, then all covariant ones, row-major.  Scalars are
(0, 0)-tensors with a 0-d component array.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import TensorMismatchError

COORD = "coord"
POINT_ATOL = 1e-12


@dataclass(frozen=True)
class TensorType:
    p: int
    q: int

    def __post_init__(self):
        if self.p < 0 or self.q < 0:
            raise ValueError(f"tensor type needs p, q >= 0, got ({self.p}, {self.q})")

    @property
    def rank(self) -> int:
        return self.p + self.q

    def __str__(self):
        return f"({self.p},{self.q})"


def same_point(a: Sequence[float], b: Sequence[float], atol: float = POINT_ATOL) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a.shape == b.shape and bool(np.all(np.abs(a - b) <= atol))


@dataclass(frozen=True, eq=False)
class Tensor:
    ttype: TensorType
    n: int
    components: np.ndarray
    at: tuple = field(default=())
    frame_tag: str = COORD

    def __post_init__(self):
        shape = (self.n,) * self.ttype.rank
        comps = np.array(self.components, dtype=np.float64)
        if comps.size != self.n**self.ttype.rank:
            raise TensorMismatchError(
                f"type {self.ttype} in dimension {self.n} needs {self.n ** self.ttype.rank} "
                f"components, got {comps.size}"
            )
        comps = comps.reshape(shape)
        if not np.all(np.isfinite(comps)):
            raise ValueError("tensor components must be finite")
        comps.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "at", tuple(float(v) for v in self.at))
        if self.at and len(self.at) != self.n:
            raise TensorMismatchError(f"point {self.at} does not have {self.n} coordinates")

    @classmethod
    def scalar(cls, value: float, at=(), n: int = 1, frame_tag: str = COORD) -> "Tensor":
        at = tuple(at)
        if at:
            n = len(at)
        return cls(TensorType(0, 0), n, np.asarray(float(value)), at, frame_tag)

    @classmethod
    def vector(cls, components, at, frame_tag: str = COORD) -> "Tensor":
        comps = np.asarray(components, dtype=float)
        return cls(TensorType(1, 0), comps.size, comps, at, frame_tag)

    @classmethod
    def covector(cls, components, at, frame_tag: str = COORD) -> "Tensor":
        comps = np.asarray(components, dtype=float)
        return cls(TensorType(0, 1), comps.size, comps, at, frame_tag)

    @classmethod
    def of_type(cls, p: int, q: int, components, at, frame_tag: str = COORD) -> "Tensor":
        return cls(TensorType(p, q), len(tuple(at)), components, tuple(at), frame_tag)

    @property
    def p(self) -> int:
        return self.ttype.p

    @property
    def q(self) -> int:
        return self.ttype.q

    @property
    def flat(self) -> np.ndarray:
        return self.components.reshape(-1)

    def value(self) -> float:
        """The component of a (0, 0)-tensor."""
        if self.ttype.rank:
            raise TensorMismatchError(f"type {self.ttype} tensor is not a scalar")
        return float(self.components)

    def moved(self, at, components=None) -> "Tensor":
        comps = self.components if components is None else components
        return Tensor(self.ttype, self.n, comps, tuple(at), self.frame_tag)

    def to_dict(self) -> dict:
        return {
            "p": self.ttype.p,
            "q": self.ttype.q,
            "n": self.n,
            "at": list(self.at),
            "frame": self.frame_tag,
            "components": [float(c) for c in self.flat],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Tensor":
        try:
            ttype = TensorType(int(data["p"]), int(data["q"]))
            n = int(data["n"])
            at = tuple(float(v) for v in data.get("at", ()))
            comps = np.asarray(data["components"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise TensorMismatchError(f"malformed tensor record: {exc}") from exc
        return cls(ttype, n, comps, at, str(data.get("frame", COORD)))

    @classmethod
    def from_json(cls, text: str) -> "Tensor":
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return (
            f"Tensor(type={self.ttype}, n={self.n}, at={self.at}, frame={self.frame_tag!r}, "
            f"components={self.components.tolist()})"
        )


def _check_compatible(a: Tensor, b: Tensor):
    if a.n != b.n:
        raise TensorMismatchError(f"dimension mismatch: {a.n} vs {b.n}")
    if not same_point(a.at, b.at):
        raise TensorMismatchError(f"tensors live at different points: {a.at} vs {b.at}")
    if a.frame_tag != b.frame_tag:
        raise TensorMismatchError(f"frame mismatch: {a.frame_tag!r} vs {b.frame_tag!r}")


def tensor_product(a: Tensor, b: Tensor) -> Tensor:
    """``a (x) b`` with ``a``'s indices leading inside each variance block."""
    # a scalar carries no point of its own when built without one
    if a.ttype.rank == 0 and not a.at:
        a = Tensor(a.ttype, b.n, a.components, b.at, b.frame_tag)
    if b.ttype.rank == 0 and not b.at:
        b = Tensor(b.ttype, a.n, b.components, a.at, a.frame_tag)
    _check_compatible(a, b)
    outer = np.multiply.outer(a.components, b.components)
    pa, qa, pb = a.p, a.q, b.p
    # axes of outer: a_up (pa), a_dn (qa), b_up (pb), b_dn (qb)
    order = (
        list(range(pa))
        + list(range(pa + qa, pa + qa + pb))
        + list(range(pa, pa + qa))
        + list(range(pa + qa + pb, outer.ndim))
    )
    comps = np.transpose(outer, order)
    return Tensor(TensorType(pa + pb, qa + b.q), a.n, comps, a.at, a.frame_tag)


def contract(t: Tensor, upper_slot: int, lower_slot: int) -> Tensor:
    """Sum contravariant slot ``upper_slot`` against covariant slot ``lower_slot`` (1-based)."""
    if t.p < 1 or t.q < 1:
        raise TensorMismatchError(f"cannot contract a type {t.ttype} tensor")
    if not 1 <= upper_slot <= t.p:
        raise TensorMismatchError(f"upper slot {upper_slot} outside 1..{t.p}")
    if not 1 <= lower_slot <= t.q:
        raise TensorMismatchError(f"lower slot {lower_slot} outside 1..{t.q}")
    comps = np.trace(t.components, axis1=upper_slot - 1, axis2=t.p + lower_slot - 1)
    return Tensor(TensorType(t.p - 1, t.q - 1), t.n, comps, t.at, t.frame_tag)


def linear_combine(lam: float, a: Tensor, mu: float, b: Tensor) -> Tensor:
    if a.ttype != b.ttype:
        raise TensorMismatchError(f"type mismatch: {a.ttype} vs {b.ttype}")
    _check_compatible(a, b)
    return a.moved(a.at, lam * a.components + mu * b.components)


def max_abs_diff(a: Tensor, b: Tensor) -> float:
    if a.ttype != b.ttype or a.n != b.n:
        raise TensorMismatchError(f"cannot compare {a.ttype} with {b.ttype}")
    if a.ttype.rank == 0:
        return abs(float(a.components) - float(b.components))
    return float(np.max(np.abs(a.components - b.components)))


def random_tensor(rng: np.random.Generator, p: int, q: int, at, frame_tag: str = COORD) -> Tensor:
    """Components uniform in [-1, 1] from ``rng``."""
    n = len(at)
    comps = rng.uniform(-1.0, 1.0, size=(n,) * (p + q))
    return Tensor(TensorType(p, q), n, comps, at, frame_tag)
