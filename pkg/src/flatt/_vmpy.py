"""NumPy stack machine: the fallback kernel used when ``_vmcore`` is absent.

Same contract as ``_vmcore.run``: fills ``out`` in place and returns
``(row, pc, code)`` of the first domain error, or ``(-1, -1, 0)``.  Each
instruction is applied to all rows at once.
"""
import numpy as np

from .opcodes import (
    ADD, CONST, COS, COSH, DIV, ERR_DIV, ERR_LOG, ERR_NONFINITE, ERR_POW,
    ERR_SQRT, EXP, LOG, MUL, NEG, POW, SIN, SINH, SQRT, STORE, SUB, TAN, VAR,
)

_UNARY = {
    SIN: np.sin,
    COS: np.cos,
    TAN: np.tan,
    EXP: np.exp,
    SINH: np.sinh,
    COSH: np.cosh,
}


def _first(bad):
    rows = np.flatnonzero(bad)
    return int(rows[0]) if rows.size else -1


def run(ops, args, consts, points, out, stack_size):
    m = points.shape[0]
    stack = []
    with np.errstate(all="ignore"):
        for pc in range(len(ops)):
            op = ops[pc]
            code = 0
            if op == CONST:
                stack.append(np.full(m, consts[args[pc]]))
                continue
            if op == VAR:
                stack.append(points[:, args[pc]])
                continue
            if op == STORE:
                out[:, args[pc]] = stack.pop()
                continue
            if op == NEG:
                r = -stack.pop()
            elif op in _UNARY:
                r = _UNARY[op](stack.pop())
                code = ERR_NONFINITE
            elif op == LOG:
                a = stack.pop()
                row = _first(a <= 0.0)
                if row >= 0:
                    return row, pc, ERR_LOG
                r = np.log(a)
            elif op == SQRT:
                a = stack.pop()
                row = _first(a < 0.0)
                if row >= 0:
                    return row, pc, ERR_SQRT
                r = np.sqrt(a)
            else:
                b = stack.pop()
                a = stack.pop()
                if op == ADD:
                    r = a + b
                elif op == SUB:
                    r = a - b
                elif op == MUL:
                    r = a * b
                elif op == DIV:
                    row = _first(b == 0.0)
                    if row >= 0:
                        return row, pc, ERR_DIV
                    r = a / b
                elif op == POW:
                    bad = ((a < 0.0) & (b != np.floor(b))) | ((a == 0.0) & (b < 0.0))
                    row = _first(bad)
                    if row >= 0:
                        return row, pc, ERR_POW
                    r = np.power(a, b)
                else:
                    raise ValueError(f"bad opcode {op}")
                code = ERR_NONFINITE
            if code:
                row = _first(~np.isfinite(r))
                if row >= 0:
                    return row, pc, ERR_NONFINITE
            stack.append(r)
    return -1, -1, 0
