"""Monotone root finding: bisection with a secant polish, scalar and vectorized."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import LevelRangeError


def bracket_values(f: Callable[[float], float], lo: float, hi: float) -> tuple[float, float]:
    return f(lo), f(hi)


def invert_monotone(
    f: Callable[[float], float],
    target: float,
    lo: float,
    hi: float,
    tol: float = 1e-9,
    max_iter: int = 200,
) -> float:
    """Solve f(x) = target for a monotone f on [lo, hi].

    Bisection down to ~sqrt(tol) of the bracket, then secant polish. Raises
    LevelRangeError if target is not attained on the bracket.
    """
    f_lo, f_hi = f(lo), f(hi)
    increasing = f_hi >= f_lo
    g_lo = f_lo - target
    g_hi = f_hi - target
    if g_lo == 0.0:
        return lo
    if g_hi == 0.0:
        return hi
    if np.sign(g_lo) == np.sign(g_hi):
        a, b = (f_lo, f_hi) if increasing else (f_hi, f_lo)
        raise LevelRangeError(
            f"target {target!r} outside attained range [{a!r}, {b!r}]"
        )
    a, b = lo, hi
    ga, gb = g_lo, g_hi
    for _ in range(max_iter):
        if b - a <= tol * 1e3:
            break
        m = 0.5 * (a + b)
        gm = f(m) - target
        if gm == 0.0:
            return m
        if np.sign(gm) == np.sign(ga):
            a, ga = m, gm
        else:
            b, gb = m, gm
    # secant polish inside the bracket
    x0, x1 = a, b
    g0, g1 = ga, gb
    for _ in range(60):
        denom = g1 - g0
        if denom == 0.0:
            break
        x2 = x1 - g1 * (x1 - x0) / denom
        if not (a <= x2 <= b):
            x2 = 0.5 * (a + b)
        g2 = f(x2) - target
        if abs(x2 - x1) <= tol:
            return x2
        if np.sign(g2) == np.sign(ga):
            a, ga = x2, g2
        else:
            b, gb = x2, g2
        x0, g0 = x1, g1
        x1, g1 = x2, g2
    return 0.5 * (a + b)


def invert_monotone_vec(
    f: Callable[[np.ndarray], np.ndarray],
    targets: np.ndarray,
    lo: float,
    hi: float,
    tol: float = 1e-9,
    max_iter: int = 100,
) -> np.ndarray:
    """Vectorized bisection: solve f(x) = targets elementwise on a shared bracket.

    f must map an array of abscissae to function values elementwise. Entries
    whose target lies outside [f(lo), f(hi)] come back NaN; callers decide how
    to treat them.
    """
    targets = np.asarray(targets, dtype=float)
    f_lo = f(np.full_like(targets, lo))
    f_hi = f(np.full_like(targets, hi))
    increasing = bool(np.all(f_hi >= f_lo))
    if increasing:
        in_range = (targets >= f_lo) & (targets <= f_hi)
    else:
        in_range = (targets <= f_lo) & (targets >= f_hi)
    a = np.full_like(targets, lo)
    b = np.full_like(targets, hi)
    for _ in range(max_iter):
        if np.max(b - a) <= tol:
            break
        m = 0.5 * (a + b)
        fm = f(m)
        go_right = (fm < targets) if increasing else (fm > targets)
        a = np.where(go_right, m, a)
        b = np.where(go_right, b, m)
    out = 0.5 * (a + b)
    return np.where(in_range, out, np.nan)
