"""One-dimensional cubic building blocks: not-a-knot splines and limited Hermite slopes.

Everything here works on piecewise cubic Hermite form: an interval
``[x_k, x_{k+1}]`` of width ``h`` is described by its end values and end slopes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded


def hermite_basis(t) -> np.ndarray:
    """Cubic Hermite basis ``(h00, h10, h01, h11)`` stacked on the first axis."""
    t = np.asarray(t, dtype=float)
    t2 = t * t
    t3 = t2 * t
    return np.stack(
        [2.0 * t3 - 3.0 * t2 + 1.0, t3 - 2.0 * t2 + t, -2.0 * t3 + 3.0 * t2, t3 - t2]
    )


def hermite_combine(basis, y0, y1, m0, m1):
    """Hermite cubic with end values ``y0, y1`` and *scaled* slopes ``m = h * s``."""
    return basis[0] * y0 + basis[1] * m0 + basis[2] * y1 + basis[3] * m1


def hermite_interior_extrema(y0, y1, m0, m1) -> tuple[np.ndarray, np.ndarray]:
    """Min and max over the critical points strictly inside ``(0, 1)``.

    ``(+inf, -inf)`` where the cubic has no interior critical point.
    """
    y0, y1, m0, m1 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (y0, y1, m0, m1)))
    # p(t) = y0 + m0 t + c t^2 + e t^3
    c = 3.0 * (y1 - y0) - 2.0 * m0 - m1
    e = 2.0 * (y0 - y1) + m0 + m1
    lo = np.full(y0.shape, np.inf)
    hi = np.full(y0.shape, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = c * c - 3.0 * e * m0
        sq = np.sqrt(np.maximum(disc, 0.0))
        quad = np.abs(e) > 1e-300
        roots = [
            np.where(quad, (-c + sq) / (3.0 * e), -m0 / (2.0 * c)),
            np.where(quad, (-c - sq) / (3.0 * e), np.nan),
        ]
    for t in roots:
        valid = np.isfinite(t) & (t > 0.0) & (t < 1.0) & (disc >= 0.0)
        tt = np.where(valid, t, 0.0)
        val = y0 + tt * (m0 + tt * (c + tt * e))
        lo = np.where(valid, np.minimum(lo, val), lo)
        hi = np.where(valid, np.maximum(hi, val), hi)
    return lo, hi


def hermite_range(y0, y1, m0, m1) -> tuple[np.ndarray, np.ndarray]:
    """Min and max of the Hermite cubic over the closed unit interval."""
    lo, hi = hermite_interior_extrema(y0, y1, m0, m1)
    return np.minimum(lo, np.minimum(y0, y1)), np.maximum(hi, np.maximum(y0, y1))


def _moveaxis_in(x, y, axis):
    x = np.asarray(x, dtype=float)
    y = np.moveaxis(np.asarray(y, dtype=float), axis, 0)
    if x.ndim != 1 or x.size != y.shape[0]:
        raise ValueError("abscissae must be 1-d and match the values along the spline axis")
    if x.size > 1 and np.any(np.diff(x) <= 0.0):
        raise ValueError("abscissae must be strictly increasing")
    return x, y


def notaknot_slopes(x, y, axis: int = 0) -> np.ndarray:
    """Slopes at the knots of the C2 not-a-knot cubic spline through ``(x, y)``.

    Batched along every axis other than ``axis``.  With fewer than four points
    the unique interpolating polynomial (line, parabola) is used instead.
    """
    x, y = _moveaxis_in(x, y, axis)
    n = x.size
    if n == 1:
        return np.moveaxis(np.zeros_like(y), 0, axis)
    dx = np.diff(x)
    dxr = dx.reshape((-1,) + (1,) * (y.ndim - 1))
    secant = np.diff(y, axis=0) / dxr
    if n == 2:
        s = np.concatenate([secant, secant], axis=0)
        return np.moveaxis(s, 0, axis)
    if n == 3:
        # derivative of the parabola through three points
        d = x[2] - x[0]
        s0 = secant[0] - (secant[1] - secant[0]) * dx[0] / d
        s1 = (secant[0] * dx[1] + secant[1] * dx[0]) / d
        s2 = secant[1] + (secant[1] - secant[0]) * dx[1] / d
        return np.moveaxis(np.stack([s0, s1, s2]), 0, axis)

    ab = np.zeros((3, n))
    rhs = np.empty((n,) + y.shape[1:])
    ab[1, 1:-1] = 2.0 * (dx[:-1] + dx[1:])
    ab[0, 2:] = dx[:-1]
    ab[2, :-2] = dx[1:]
    rhs[1:-1] = 3.0 * (dxr[1:] * secant[:-1] + dxr[:-1] * secant[1:])
    d = x[2] - x[0]
    ab[1, 0] = dx[1]
    ab[0, 1] = d
    rhs[0] = ((dx[0] + 2.0 * d) * dx[1] * secant[0] + dx[0] ** 2 * secant[1]) / d
    d = x[-1] - x[-3]
    ab[1, -1] = dx[-2]
    ab[2, -2] = d
    rhs[-1] = (dx[-1] ** 2 * secant[-2] + (2.0 * d + dx[-1]) * dx[-2] * secant[-1]) / d
    shape = rhs.shape
    s = solve_banded((1, 1), ab, rhs.reshape(n, -1), check_finite=False)
    return np.moveaxis(s.reshape(shape), 0, axis)


def three_point_slopes(x, y, axis: int = 0) -> np.ndarray:
    """Second-order slope estimates: centered inside, one-sided at both ends."""
    x, y = _moveaxis_in(x, y, axis)
    n = x.size
    if n == 1:
        return np.moveaxis(np.zeros_like(y), 0, axis)
    dx = np.diff(x).reshape((-1,) + (1,) * (y.ndim - 1))
    secant = np.diff(y, axis=0) / dx
    if n == 2:
        return np.moveaxis(np.concatenate([secant, secant], axis=0), 0, axis)
    s = np.empty_like(y)
    s[1:-1] = (dx[:-1] * secant[1:] + dx[1:] * secant[:-1]) / (dx[:-1] + dx[1:])
    s[0] = ((2.0 * dx[0] + dx[1]) * secant[0] - dx[0] * secant[1]) / (dx[0] + dx[1])
    s[-1] = ((2.0 * dx[-1] + dx[-2]) * secant[-1] - dx[-1] * secant[-2]) / (dx[-1] + dx[-2])
    return np.moveaxis(s, 0, axis)


def limit_slopes(secant, left, right) -> tuple[np.ndarray, np.ndarray]:
    """Fritsch-Carlson limiter applied to one interval at a time.

    ``left``/``right`` are the slopes at the two ends of an interval whose
    secant is ``secant``.  Flat intervals get zero slopes; otherwise both ratios
    to the secant are clamped into ``[0, 3]``, which keeps the Hermite cubic
    monotone between its end values.
    """
    secant = np.asarray(secant, dtype=float)
    flat = secant == 0.0
    safe = np.where(flat, 1.0, secant)
    alpha = np.clip(np.asarray(left) / safe, 0.0, 3.0)
    beta = np.clip(np.asarray(right) / safe, 0.0, 3.0)
    return np.where(flat, 0.0, alpha * secant), np.where(flat, 0.0, beta * secant)


def monotone_slopes(x, y) -> tuple[np.ndarray, np.ndarray]:
    """Limited end slopes ``(left, right)`` for every interval of ``(x, y)``.

    Continuity of the derivative across knots is not enforced: interval ``k``
    uses its own limited pair, so each piece only depends on nearby data.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points")
    s = three_point_slopes(x, y)
    secant = np.diff(y) / np.diff(x)
    return limit_slopes(secant, s[:-1], s[1:])


@dataclass(frozen=True)
class PiecewiseCubic:
    """Cubic Hermite pieces on knots ``x`` with per-interval end slopes."""

    x: np.ndarray
    y: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @property
    def coefficients(self) -> np.ndarray:
        """``(n - 1, 4)`` power coefficients in ``(x - x_k)``, lowest order first."""
        h = np.diff(self.x)
        secant = np.diff(self.y) / h
        c2 = (3.0 * secant - 2.0 * self.left - self.right) / h
        c3 = (self.left + self.right - 2.0 * secant) / h**2
        return np.stack([self.y[:-1], self.left, c2, c3], axis=1)

    def __call__(self, xq):
        xq = np.asarray(xq, dtype=float)
        k = np.clip(np.searchsorted(self.x, xq, side="right") - 1, 0, self.x.size - 2)
        h = self.x[k + 1] - self.x[k]
        t = (xq - self.x[k]) / h
        out = hermite_combine(
            hermite_basis(t), self.y[k], self.y[k + 1], h * self.left[k], h * self.right[k]
        )
        return float(out) if out.ndim == 0 else out


def spline_build_1d(x, y) -> PiecewiseCubic:
    """Not-a-knot C2 cubic spline through ``(x, y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points")
    s = notaknot_slopes(x, y)
    return PiecewiseCubic(x, y, s[:-1], s[1:])


def monotone_build_1d(x, y) -> PiecewiseCubic:
    """Locally limited cubic Hermite interpolant through ``(x, y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    left, right = monotone_slopes(x, y)
    return PiecewiseCubic(x, y, left, right)
