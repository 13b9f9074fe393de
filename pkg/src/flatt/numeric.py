"""Independent numerical oracles: finite differences, RK4, composite Simpson.

Nothing here touches the symbolic pipeline, which is what makes these
routines usable as cross-checks for it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import OutOfChartError


@dataclass(frozen=True)
class FDScheme:
    """Central difference with step ``h``; optionally Richardson-paired with ``h/2``."""

    h: float = 1e-4
    richardson: bool = True

    def __post_init__(self):
        if not 1e-8 <= self.h <= 1e-1:
            raise ValueError(f"finite-difference step must lie in [1e-8, 1e-1], got {self.h}")


DEFAULT_SCHEME = FDScheme()


def richardson(coarse, fine, ratio: float = 2.0, order: int = 2):
    """Eliminate the leading ``h**order`` error term from two estimates.

    ``fine`` uses step ``h / ratio``.  With ratio 2 and order 2 this is the
    familiar ``(4 D(h/2) - D(h)) / 3``.
    """
    w = ratio**order
    return (w * np.asarray(fine) - np.asarray(coarse)) / (w - 1.0)


def central_difference(f: Callable, p, k: int, h: float):
    p = np.asarray(p, dtype=float)
    e = np.zeros_like(p)
    e[k - 1] = h
    return (np.asarray(f(p + e)) - np.asarray(f(p - e))) / (2.0 * h)


def fd_partial(f: Callable, p, k: int, scheme: FDScheme = DEFAULT_SCHEME, chart=None):
    """Finite-difference ``df/dx^k`` at ``p`` (``k`` is 1-based).

    ``f`` may return a scalar or an array; the result has the same shape.
    When ``chart`` is given, displaced points must stay inside it.
    """
    p = np.asarray(p, dtype=float)
    if not 1 <= k <= p.size:
        raise IndexError(f"coordinate index {k} out of range 1..{p.size}")
    if chart is not None:
        for sign in (1.0, -1.0):
            q = p.copy()
            q[k - 1] += sign * scheme.h
            if not chart.contains(q):
                raise OutOfChartError(q, chart.bounds)
    d_h = central_difference(f, p, k, scheme.h)
    if not scheme.richardson:
        return d_h
    return richardson(d_h, central_difference(f, p, k, scheme.h / 2.0))


def rk4_step(rhs: Callable, state, t: float, dt: float):
    """One classical fourth-order Runge-Kutta step of ``y' = rhs(t, y)``."""
    if dt == 0.0:
        raise ValueError("RK4 step size must be non-zero")
    y = np.asarray(state, dtype=float)
    k1 = np.asarray(rhs(t, y))
    k2 = np.asarray(rhs(t + 0.5 * dt, y + 0.5 * dt * k1))
    k3 = np.asarray(rhs(t + 0.5 * dt, y + 0.5 * dt * k2))
    k4 = np.asarray(rhs(t + dt, y + dt * k3))
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_integrate(rhs: Callable, state, t0: float, t1: float, steps: int):
    if steps < 1:
        raise ValueError("need at least one step")
    dt = (t1 - t0) / steps
    y = np.asarray(state, dtype=float)
    for i in range(steps):
        y = rk4_step(rhs, y, t0 + i * dt, dt)
    return y


def simpson_weights(subintervals: int) -> np.ndarray:
    """Composite Simpson weights on ``[0, 1]`` with ``subintervals + 1`` nodes."""
    if subintervals < 2 or subintervals % 2:
        raise ValueError(f"Simpson needs an even count >= 2, got {subintervals}")
    w = np.ones(subintervals + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * subintervals)


def simpson_line_integral(form: Callable, a, b, subintervals: int, vectorized: bool = False):
    """Integrate the covector field ``form`` along the straight segment ``a -> b``.

    ``form(x)`` returns the covector components at ``x``, or a stack of
    covectors of shape ``(r, n)`` (one integral per row is returned).  With
    ``vectorized=True`` it receives all nodes at once as an ``(m, n)`` array.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w = simpson_weights(subintervals)
    s = np.linspace(0.0, 1.0, subintervals + 1)
    nodes = a[None, :] + s[:, None] * (b - a)[None, :]
    if vectorized:
        values = np.asarray(form(nodes))
    else:
        values = np.array([np.asarray(form(x)) for x in nodes])
    result = np.tensordot(w, values @ (b - a), axes=(0, 0))
    return float(result) if np.ndim(result) == 0 else result


def convergence_order(counts, errors) -> float:
    """Least-squares slope of ``-log(error)`` against ``log(count)``."""
    x = np.log(np.asarray(counts, dtype=float))
    y = -np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
