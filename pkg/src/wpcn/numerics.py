"""Special functions and bracketed root finders shared by the allocation rules.

Everything here accepts numpy arrays where that is natural so that a whole
batch of epochs can be processed in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

INV_E = 1.0 / math.e
# inputs this close below -1/e are rounding noise from (B - 1)/e with B = 0
_BRANCH_SLACK = 4 * np.finfo(float).eps
_HALLEY_MAX_ITER = 64


class NumericsError(ValueError):
    pass


class LambertDomainError(NumericsError):
    pass


class NoSignChangeError(NumericsError):
    pass


class MaxIterationsError(NumericsError):
    pass


@dataclass(frozen=True)
class RootBracket:
    lo: float
    hi: float
    tol_abs: float = 1e-12
    tol_rel: float = 1e-10
    max_iter: int = 200

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"bracket needs lo < hi, got [{self.lo}, {self.hi}]")
        if self.tol_abs <= 0 or self.tol_rel < 0:
            raise ValueError("tol_abs must be > 0 and tol_rel >= 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


def _lambert_initial(x: np.ndarray) -> np.ndarray:
    w = np.empty_like(x)
    near = x < -0.32
    big = x > math.e
    mid = ~(near | big)

    p = np.sqrt(np.maximum(2.0 * (math.e * x[near] + 1.0), 0.0))
    w[near] = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p**3

    # Winitzki's approximation
    l1p = np.log1p(x[mid])
    w[mid] = l1p * (1.0 - np.log1p(l1p) / (2.0 + l1p))

    l1 = np.log(x[big])
    l2 = np.log(l1)
    w[big] = l1 - l2 + l2 / l1
    return w


def lambert_w0(x):
    """Principal branch of the Lambert W function for real ``x >= -1/e``.

    Halley iteration from a piecewise initial guess (branch-point series,
    Winitzki's formula, asymptotic expansion). Scalars in, scalar out;
    arrays are handled elementwise.
    """
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr).copy()
    if np.any(np.isnan(arr)) or np.any(arr < -INV_E - _BRANCH_SLACK):
        bad = arr[np.isnan(arr) | (arr < -INV_E - _BRANCH_SLACK)][0]
        raise LambertDomainError(f"lambert_w0 undefined for x={bad!r} < -1/e")

    out = np.empty_like(arr)
    at_branch = arr <= -INV_E
    at_inf = np.isposinf(arr)
    out[at_branch] = -1.0
    out[at_inf] = np.inf
    todo = ~(at_branch | at_inf)

    xs = arr[todo]
    w = _lambert_initial(xs)
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(_HALLEY_MAX_ITER):
            ew = np.exp(w)
            f = w * ew - xs
            wp1 = w + 1.0
            denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
            dw = np.where((denom != 0.0) & np.isfinite(denom), f / denom, 0.0)
            w_new = np.maximum(w - dw, -1.0)
            done = np.abs(w_new - w) <= 2e-16 * np.maximum(np.abs(w_new), 1e-300)
            w = w_new
            if np.all(done):
                break
    out[todo] = w
    return float(out[0]) if scalar else out


def z_of(b):
    """Unique ``z >= 1`` with ``z*(ln z - 1) = b - 1`` for ``b >= 0``.

    Closed form ``(b - 1) / W((b - 1)/e)``; ``b = 1`` gives ``e`` and ``b = 0``
    gives exactly 1. ``b = inf`` maps to ``inf`` (an EHU that never saturates).
    """
    arr = np.asarray(b, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise NumericsError("z_of requires b >= 0")
    d = arr - 1.0
    y = d / math.e
    w = lambert_w0(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(y == 0.0, math.e, d / w)
    z = np.where(arr == 0.0, 1.0, z)
    z = np.where(np.isposinf(arr), np.inf, z)
    return float(z[0]) if scalar else z


def z_of_rootfind(b: float) -> float:
    """Same root as :func:`z_of`, found by bracketing instead of Lambert W."""
    if b < 0:
        raise NumericsError("z_of_rootfind requires b >= 0")
    if b == 0:
        return 1.0

    def f(z):
        return z * (math.log(z) - 1.0) - (b - 1.0)

    hi = max(math.e, b + 2.0)
    while f(hi) <= 0:
        hi *= 2.0
    return solve_monotone_root(f, RootBracket(1.0, hi, tol_abs=1e-300, tol_rel=1e-15),
                               fprime=math.log)


def solve_monotone_root(
    f: Callable[[float], float],
    bracket: RootBracket,
    fprime: Optional[Callable[[float], float]] = None,
) -> float:
    """Bisection on a sign-changing bracket, optionally accelerated by Newton.

    A Newton step is only taken when it lands strictly inside the current
    bracket; otherwise the midpoint is used. Stops once ``|f(x)| <= tol_abs``
    or the bracket is narrower than ``tol_abs + tol_rel*|x|``.
    """
    lo, hi = float(bracket.lo), float(bracket.hi)
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise NoSignChangeError(f"f has the same sign at {lo} and {hi}")
    rising = fhi > 0

    x = 0.5 * (lo + hi)
    for _ in range(bracket.max_iter):
        fx = f(x)
        if fx == 0.0 or abs(fx) <= bracket.tol_abs:
            return x
        if (fx > 0) == rising:
            hi = x
        else:
            lo = x
        if hi - lo <= bracket.tol_abs + bracket.tol_rel * abs(x):
            return 0.5 * (lo + hi)
        x_next = 0.5 * (lo + hi)
        if fprime is not None:
            d = fprime(x)
            if d != 0.0 and math.isfinite(d):
                cand = x - fx / d
                if lo < cand < hi:
                    x_next = cand
        x = x_next
    raise MaxIterationsError(f"no convergence in {bracket.max_iter} iterations")


def solve_snr_excess(a, g, max_iter: int = 200):
    """Solve ``(1+u)(log1p(u) + a) - u - g = 0`` for ``u > 0``, elementwise.

    This is the common-SNR equation ``ln C - (C-1)/C + a = g/C`` multiplied
    through by ``C``, written in ``u = C - 1`` to keep precision when ``C``
    is close to 1. The left side is increasing and convex in ``u`` whenever
    ``a >= 0``, so Newton started to the right of the root descends to it
    monotonically. Requires ``g > a``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    g = np.atleast_1d(np.asarray(g, dtype=float))
    a, g = np.broadcast_arrays(a, g)
    if np.any(a < 0) or np.any(g <= a):
        raise NoSignChangeError("common-SNR equation needs a >= 0 and g > a")

    def phi(u):
        return (1.0 + u) * (np.log1p(u) + a) - u - g

    hi = np.maximum(g, 1.0)
    grow = phi(hi) <= 0
    for _ in range(2100):
        if not np.any(grow):
            break
        hi = np.where(grow, hi * 2.0, hi)
        grow = phi(hi) <= 0
    else:
        raise NoSignChangeError("could not bracket the common-SNR root")

    u = hi.copy()
    active = np.ones(u.shape, dtype=bool)
    for _ in range(max_iter):
        val = phi(u)
        slope = np.log1p(u) + a
        step = np.where(active & (slope > 0), val / np.where(slope > 0, slope, 1.0), 0.0)
        u_new = np.where(active, np.maximum(u - step, 0.0), u)
        # convex increasing: iterates only move left until they hit the root
        stalled = (u_new >= u) | (np.abs(u - u_new) <= 1e-16 * u_new)
        u = np.where(active & (u_new < u), u_new, u)
        active &= ~stalled
        if not np.any(active):
            break
    else:
        raise MaxIterationsError("common-SNR Newton iteration did not converge")
    return u


def common_snr_closed_form(a, g):
    """Lambert-W expression for the root of :func:`solve_snr_excess`, as ``C``.

    ``C = (g - 1) / W((g - 1) e^(a-1))``. Used to cross-check the iterative
    solver; overflows for large ``a``.
    """
    a = np.asarray(a, dtype=float)
    g = np.asarray(g, dtype=float)
    d = g - 1.0
    y = d * np.exp(a - 1.0)
    w = lambert_w0(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(d == 0.0, np.exp(1.0 - a), d / w)
    return c
