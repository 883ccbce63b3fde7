"""Independent reference implementations used as test oracles.

Nothing here imports flowgrad: these are written from textbook formulas so
that agreement with the package is meaningful.
"""

import math

import mpmath
import numpy as np


def expm_taylor(A, terms: int = 30) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a plain Taylor core."""
    A = np.asarray(A, dtype=float)
    norm = np.max(np.sum(np.abs(A), axis=0)) if A.size else 0.0
    s = max(0, math.ceil(math.log2(norm)) + 1) if norm > 0 else 0
    B = A / 2.0**s
    out = np.eye(len(A))
    term = np.eye(len(A))
    for k in range(1, terms):
        term = term @ B / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def exp_partial_sum(A, order: int) -> np.ndarray:
    """``sum_{n <= order} A^n / n!``."""
    out = np.eye(len(A))
    term = np.eye(len(A))
    for n in range(1, order + 1):
        term = term @ A / n
        out = out + term
    return out


def rotation_matrix_xy(angle: float) -> np.ndarray:
    R = np.eye(4)
    c, s = math.cos(angle), math.sin(angle)
    R[1:3, 1:3] = [[c, -s], [s, c]]
    return R


# Christoffel symbols worked out by hand from the Levi-Civita formula.

def polar_christoffel(r: float) -> dict:
    """Nonzero symbols of the plane metric diag(1, r^2), keyed (upper, lower, lower) over (r, theta)."""
    return {("r", "th", "th"): -r, ("th", "r", "th"): 1.0 / r, ("th", "th", "r"): 1.0 / r}


def mp_matrix(A, dps: int = 40):
    with mpmath.workdps(dps):
        return mpmath.matrix([[mpmath.mpf(v) if not isinstance(v, mpmath.mpf) else v for v in row] for row in np.asarray(A).tolist()])


def mp_to_object(M) -> np.ndarray:
    return np.array([[M[i, j] for j in range(M.cols)] for i in range(M.rows)], dtype=object)


def mp_bch_error(X, Y, Z, dps: int = 40) -> float:
    """``max |exp(X) exp(Y) - exp(Z)|`` evaluated with ``dps`` decimal digits."""
    with mpmath.workdps(dps):
        lhs = mpmath.expm(mp_matrix(X)) * mpmath.expm(mp_matrix(Y))
        rhs = mpmath.expm(mp_matrix(Z))
        diff = lhs - rhs
        return float(max(abs(diff[i, j]) for i in range(diff.rows) for j in range(diff.cols)))


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])
