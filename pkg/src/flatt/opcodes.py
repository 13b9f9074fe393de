"""Opcode and error-code numbering shared by both expression kernels."""

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

ERR_DIV = 1
ERR_LOG = 2
ERR_SQRT = 3
ERR_POW = 4
ERR_NONFINITE = 5

ERROR_MESSAGES = {
    ERR_DIV: "division by zero",
    ERR_LOG: "log of non-positive value",
    ERR_SQRT: "sqrt of negative value",
    ERR_POW: "invalid power (negative base with non-integer exponent, or 0 to a negative power)",
    ERR_NONFINITE: "non-finite result",
}
