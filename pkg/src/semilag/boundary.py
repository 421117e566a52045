"""Moment-preserving treatment of characteristic feet that leave the domain.

Every Brownian column ``v = sigma_i sqrt(h q)`` contributes the pair of feet
``c + v`` and ``c - v`` around the drifted point ``c = x + b h``, each with weight
``1 / (2 q)``.  When one foot exits, it is pulled back along ``v`` to the boundary
and the opposite foot is pushed out so that the pair keeps zero mean and the
same variance about ``c``; the weights are changed accordingly.  Pairs where
this is impossible are projected onto the domain with unchanged weights.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .grid import DomainBox

__all__ = [
    "Method",
    "FootResolution",
    "MomentMatchError",
    "match_moments_1d",
    "resolve_feet",
    "resolve_feet_batch",
]


class Method(enum.IntEnum):
    UNMODIFIED = 0
    MOMENT_MATCHED = 1
    PROJECTED = 2


class MomentMatchError(ValueError):
    """The shortened pair cannot be placed inside the domain."""


def match_moments_1d(sigma2h: float, available_up: float, available_down: float = np.inf):
    """Shortened displacement pair with the same mean and variance.

    ``available_up`` is the room between the drifted point and the boundary on
    the side whose foot exits; ``available_down`` the room on the other side.
    Returns ``(dx_plus, dx_minus, p_plus, p_minus)``.
    """
    if not sigma2h > 0.0:
        raise MomentMatchError(f"variance must be positive, got {sigma2h}")
    if not available_up > 0.0:
        raise MomentMatchError("drifted point is on or outside the boundary")
    dx_plus = min(float(available_up), float(np.sqrt(sigma2h)))
    dx_minus = sigma2h / dx_plus
    if dx_minus > available_down:
        raise MomentMatchError(
            f"opposite foot needs {dx_minus:.6g} but only {available_down:.6g} is available"
        )
    denom = dx_plus * dx_plus + sigma2h
    return dx_plus, dx_minus, sigma2h / denom, dx_plus * dx_plus / denom


@dataclass
class FootResolution:
    """Resolved feet of one node and control: ``2 q`` points with weights.

    Points are ordered column by column, ``+`` foot first.
    """

    points: np.ndarray  # (2q, d)
    weights: np.ndarray  # (2q,)
    methods: tuple[Method, ...]  # one per column

    @property
    def method(self) -> Method:
        return Method(max(self.methods)) if self.methods else Method.UNMODIFIED


def _exit_scale(center, v, lo, hi):
    """Largest ``s`` in ``[0, inf)`` with ``center + s v`` inside the box (per column)."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        s = np.where(v > 0.0, (hi - center) / v, np.where(v < 0.0, (lo - center) / v, np.inf))
    return np.min(s, axis=-1)


def resolve_feet_batch(center, columns, domain: DomainBox):
    """Vectorized foot resolution.

    ``center`` has shape ``(..., d)`` and ``columns`` shape ``(..., q, d)`` (already
    scaled by ``sqrt(h q)``).  Returns points ``(..., 2q, d)``, weights
    ``(..., 2q)`` and the per-column method codes ``(..., q)``.
    Pairs that cannot be moment matched are projected onto the domain.
    """
    center = np.asarray(center, dtype=float)
    v = np.asarray(columns, dtype=float)
    q = v.shape[-2]
    lo, hi = domain.lo, domain.hi
    c = center[..., None, :]
    plus = c + v
    minus = c - v
    c_in = domain.contains(center)[..., None]
    plus_in = domain.contains(plus)
    minus_in = domain.contains(minus)

    method = np.full(plus_in.shape, Method.PROJECTED, dtype=np.int8)
    method[c_in & plus_in & minus_in] = Method.UNMODIFIED
    one_out = c_in & (plus_in != minus_in)
    w_plus = np.full(plus_in.shape, 0.5)
    w_minus = np.full(plus_in.shape, 0.5)

    if np.any(one_out):
        # orient every column so that "u" points to the exiting foot
        sign = np.where(plus_in, -1.0, 1.0)[..., None]
        u = sign * v
        lam = _exit_scale(c, u, lo, hi)
        # lanes that overflow here are not matchable and are masked out below
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            near = c + lam[..., None] * u
            far = c - u / lam[..., None]
            lam2 = lam * lam
            p_near = 1.0 / (1.0 + lam2)
            p_far = lam2 / (1.0 + lam2)
        ok = one_out & (lam > 0.0) & (lam < 1.0) & domain.contains(far)
        ok &= np.all(np.isfinite(far), axis=-1)
        is_plus = (sign > 0)[..., 0]
        okx = ok[..., None]
        plus = np.where(okx, np.where(is_plus[..., None], near, far), plus)
        minus = np.where(okx, np.where(is_plus[..., None], far, near), minus)
        w_plus = np.where(ok, np.where(is_plus, p_near, p_far), w_plus)
        w_minus = np.where(ok, np.where(is_plus, p_far, p_near), w_minus)
        method[ok] = Method.MOMENT_MATCHED

    # the shortened foot sits on the boundary up to rounding; projection makes it exact
    plus = domain.clip(plus)
    minus = domain.clip(minus)
    points = np.stack([plus, minus], axis=-2).reshape(center.shape[:-1] + (2 * q, center.shape[-1]))
    weights = np.stack([w_plus, w_minus], axis=-1).reshape(center.shape[:-1] + (2 * q,)) / q
    return points, weights, method


def resolve_feet(center, columns, domain: DomainBox) -> FootResolution:
    """Resolve the feet of a single drifted point; see :func:`resolve_feet_batch`."""
    center = np.asarray(center, dtype=float).reshape(-1)
    columns = np.asarray(columns, dtype=float).reshape(-1, center.size)
    pts, w, m = resolve_feet_batch(center, columns, domain)
    return FootResolution(pts, w, tuple(Method(int(k)) for k in m))


def scaled_columns(sigma, h: float, q: int) -> np.ndarray:
    """Columns of ``sigma`` (``(..., d, q)``) as ``(..., q, d)`` vectors scaled by ``sqrt(h q)``."""
    return np.sqrt(h * q) * np.swapaxes(np.asarray(sigma, dtype=float), -1, -2)
