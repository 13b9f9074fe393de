# Compiled stack machine for flatt expression programs.
#
# Mirrors flatt._vmpy.run: evaluates a postfix program once per row of
# ``points`` and writes STORE results into ``out``.  Returns the first
# domain error as (row, pc, code) or (-1, -1, 0).

from libc.math cimport sin, cos, tan, exp, log, sqrt, sinh, cosh, pow, floor, isfinite
from libc.stdlib cimport malloc, free

cdef enum:
    CONST = 0
    VAR = 1
    NEG = 2
    ADD = 3
    SUB = 4
    MUL = 5
    DIV = 6
    POW = 7
    SIN = 8
    COS = 9
    TAN = 10
    EXP = 11
    LOG = 12
    SQRT = 13
    SINH = 14
    COSH = 15
    STORE = 16

cdef enum:
    ERR_DIV = 1
    ERR_LOG = 2
    ERR_SQRT = 3
    ERR_POW = 4
    ERR_NONFINITE = 5


def run(const int[::1] ops, const int[::1] args, const double[::1] consts,
        const double[:, :] points, double[:, ::1] out, int stack_size):
    cdef Py_ssize_t m = points.shape[0]
    cdef Py_ssize_t ninstr = ops.shape[0]
    cdef Py_ssize_t row, pc
    cdef int sp, op, err = 0
    cdef double a, b, r
    cdef double* stack = <double*> malloc((stack_size + 1) * sizeof(double))
    if stack == NULL:
        raise MemoryError()
    try:
        with nogil:
            for row in range(m):
                sp = 0
                for pc in range(ninstr):
                    op = ops[pc]
                    if op == CONST:
                        stack[sp] = consts[args[pc]]
                        sp += 1
                        continue
                    if op == VAR:
                        stack[sp] = points[row, args[pc]]
                        sp += 1
                        continue
                    if op == STORE:
                        sp -= 1
                        out[row, args[pc]] = stack[sp]
                        continue
                    if op <= POW and op != NEG:
                        sp -= 1
                        b = stack[sp]
                        a = stack[sp - 1]
                        if op == ADD:
                            r = a + b
                        elif op == SUB:
                            r = a - b
                        elif op == MUL:
                            r = a * b
                        elif op == DIV:
                            if b == 0.0:
                                err = ERR_DIV
                                break
                            r = a / b
                        else:
                            if (a < 0.0 and b != floor(b)) or (a == 0.0 and b < 0.0):
                                err = ERR_POW
                                break
                            r = pow(a, b)
                    else:
                        a = stack[sp - 1]
                        if op == NEG:
                            r = -a
                        elif op == SIN:
                            r = sin(a)
                        elif op == COS:
                            r = cos(a)
                        elif op == TAN:
                            r = tan(a)
                        elif op == EXP:
                            r = exp(a)
                        elif op == LOG:
                            if a <= 0.0:
                                err = ERR_LOG
                                break
                            r = log(a)
                        elif op == SQRT:
                            if a < 0.0:
                                err = ERR_SQRT
                                break
                            r = sqrt(a)
                        elif op == SINH:
                            r = sinh(a)
                        else:
                            r = cosh(a)
                    if not isfinite(r):
                        err = ERR_NONFINITE
                        break
                    stack[sp - 1] = r
                if err:
                    break
    finally:
        free(stack)
    if err:
        return row, pc, err
    return -1, -1, 0
