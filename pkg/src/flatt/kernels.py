"""Compile expressions to postfix programs and evaluate them over point batches.

Two interchangeable kernels run the programs: the compiled ``_vmcore``
extension and the NumPy fallback in ``_vmpy``.  The compiled one is chosen
at import when it is importable; set ``FLATT_BACKEND=python`` to force the
fallback.  :func:`use_backend` switches at runtime (tests and the benchmark
use it to compare the two).
"""
from __future__ import annotations

import os
from contextlib import contextmanager
from typing import Sequence

import numpy as np

from . import _vmpy
from .errors import DomainError
from .expr import Binary, Const, Expr, Unary, Var
from .opcodes import (
    CONST, COS, COSH, DIV, ERROR_MESSAGES, EXP, LOG, MUL, NEG, POW, SIN, SINH,
    SQRT, STORE, SUB, TAN, VAR, ADD,
)

try:
    from . import _vmcore
except ImportError:  # extension not built
    _vmcore = None

_KERNELS = {"python": _vmpy.run}
if _vmcore is not None:
    _KERNELS["cython"] = _vmcore.run

_requested = os.environ.get("FLATT_BACKEND", "").strip().lower()
if _requested and _requested not in ("python", "cython"):
    raise ImportError(f"FLATT_BACKEND must be 'python' or 'cython', got {_requested!r}")
if _requested == "cython" and _vmcore is None:
    raise ImportError("FLATT_BACKEND=cython but flatt._vmcore is not built")
BACKEND = _requested or ("cython" if _vmcore is not None else "python")


def available_backends() -> list[str]:
    return sorted(_KERNELS)


def set_backend(name: str) -> None:
    global BACKEND
    if name not in _KERNELS:
        raise ValueError(f"backend {name!r} is not available ({available_backends()})")
    BACKEND = name


@contextmanager
def use_backend(name: str):
    previous = BACKEND
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


_UNARY_OPS = {
    "neg": NEG, "sin": SIN, "cos": COS, "tan": TAN, "exp": EXP,
    "log": LOG, "sqrt": SQRT, "sinh": SINH, "cosh": COSH,
}
_BINARY_OPS = {"add": ADD, "sub": SUB, "mul": MUL, "div": DIV, "pow": POW}


class Program:
    """A batch of expressions compiled into one postfix instruction stream.

    ``Program(exprs)(points)`` returns an array of shape ``(m, len(exprs))``.
    """

    def __init__(self, exprs: Sequence[Expr]):
        self.exprs = tuple(exprs)
        ops: list[int] = []
        args: list[int] = []
        nodes: list[Expr] = []
        consts: list[float] = []
        const_slot: dict[float, int] = {}
        self.n_vars = 0
        depth = 0
        max_depth = 0

        def emit(op, arg, node, delta):
            nonlocal depth, max_depth
            ops.append(op)
            args.append(arg)
            nodes.append(node)
            depth += delta
            max_depth = max(max_depth, depth)

        def walk(e):
            # explicit stack: derivative trees can be deep
            todo = [(e, False)]
            while todo:
                node, expanded = todo.pop()
                if isinstance(node, Const):
                    key = node.value
                    if key not in const_slot:
                        const_slot[key] = len(consts)
                        consts.append(key)
                    emit(CONST, const_slot[key], node, +1)
                elif isinstance(node, Var):
                    self.n_vars = max(self.n_vars, node.index)
                    emit(VAR, node.index - 1, node, +1)
                elif isinstance(node, Unary):
                    if expanded:
                        emit(_UNARY_OPS[node.op], 0, node, 0)
                    else:
                        todo.append((node, True))
                        todo.append((node.arg, False))
                elif isinstance(node, Binary):
                    if expanded:
                        emit(_BINARY_OPS[node.op], 0, node, -1)
                    else:
                        todo.append((node, True))
                        todo.append((node.right, False))
                        todo.append((node.left, False))
                else:
                    raise TypeError(f"not an expression: {node!r}")

        for j, e in enumerate(self.exprs):
            walk(e)
            emit(STORE, j, e, -1)

        self.ops = np.asarray(ops, dtype=np.intc)
        self.args = np.asarray(args, dtype=np.intc)
        self.consts = np.asarray(consts if consts else [0.0], dtype=np.float64)
        self.nodes = nodes
        self.stack_size = max(max_depth, 1)

    def __len__(self):
        return len(self.exprs)

    def __call__(self, points) -> np.ndarray:
        pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=np.float64)))
        if pts.shape[1] < self.n_vars:
            raise IndexError(
                f"program uses x{self.n_vars} but points have {pts.shape[1]} coordinates"
            )
        out = np.empty((pts.shape[0], len(self.exprs)), dtype=np.float64)
        if not self.exprs:
            return out
        row, pc, code = _KERNELS[BACKEND](
            self.ops, self.args, self.consts, pts, out, self.stack_size
        )
        if row >= 0:
            raise DomainError(ERROR_MESSAGES[code], self.nodes[pc], pts[row])
        return out

    def at(self, point) -> np.ndarray:
        return self(np.asarray(point, dtype=np.float64)[None, :])[0]
