"""Benchmark problems with analytical or reference solutions.

Time runs forward from the initial data: ``exact_solution(t, x)`` of a test case
is the value after time ``t`` of marching, so ``exact_solution(0, x) = g(x)``.
The two stochastic target problems are naturally posed backward from a
horizon ``T``; their closed forms are written in that time and shifted here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri

from .grid import DomainBox
from .scheme import FixedControls, Problem, StateDependentControls

__all__ = [
    "TestCase",
    "make_test_case",
    "norm_cdf",
    "norm_quantile",
    "exact_tc4",
    "reference_tc5",
    "derivative_estimate",
]

TWO_PI = 2.0 * np.pi
SQRT2 = np.sqrt(2.0)


def norm_cdf(x):
    """Standard normal distribution function."""
    out = ndtr(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def norm_quantile(p):
    """Inverse of :func:`norm_cdf` on the open interval ``(0, 1)``."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("quantile is only finite for p in (0, 1)")
    out = ndtri(p)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class TestCase:
    """A benchmark problem together with its solution and paper defaults."""

    __test__ = False  # not a pytest class

    id: int
    problem: Problem
    exact_solution: Callable | None
    error_box: DomainBox
    steps: int
    control_count: int | None = None
    control_bound: float | None = None
    default_meshes: dict = field(default_factory=dict)

    @property
    def horizon(self) -> float:
        return self.problem.horizon


# ---------------------------------------------------------------- test case 1
BETA = 0.1


def _tc1_exact(t, x):
    return (2.0 - t) * np.sin(x[..., 0]) * np.sin(x[..., 1])


def _tc1_source(t, x, a):
    x1, x2 = x[..., 0], x[..., 1]
    s = x1 + x2
    return np.sin(x1) * np.sin(x2) * ((1.0 + 2.0 * BETA**2) * (2.0 - t) - 1.0) - (
        2.0 * (2.0 - t) * np.cos(x1) * np.cos(x2) * np.sin(s) * np.cos(s)
    )


def _tc1_diffusion(t, x, a):
    s = x[..., 0] + x[..., 1]
    sig = np.zeros(x.shape[:-1] + (2, 3))
    sig[..., 0, 0] = np.sin(s)
    sig[..., 1, 0] = np.cos(s)
    sig[..., 0, 1] = BETA
    sig[..., 1, 2] = BETA
    return SQRT2 * sig


def _tc1(**_) -> TestCase:
    dom = DomainBox((-TWO_PI, -TWO_PI), (TWO_PI, TWO_PI))
    prob = Problem(
        dim=2,
        brownian_dim=3,
        diffusion=_tc1_diffusion,
        initial=lambda x: _tc1_exact(0.0, x),
        controls=FixedControls.none(),
        domain=dom,
        horizon=1.0,
        source=_tc1_source,
        name="test case 1",
    )
    meshes = {
        "LINEAR": [240, 480, 960, 1920],
        "CUBIC": [20, 40, 80, 160],
        "MPCSL": [20, 40, 80, 160],
        "TCHEB 3": [20, 40, 80, 160],
        "LEGEND 2": [20, 40, 80, 160],
        "LEGEND 3": [20, 40, 80, 160],
        "BERN 2": [120, 240, 480, 960],
        "BERN 3": [120, 240, 480, 960],
    }
    return TestCase(1, prob, _tc1_exact, dom, 2000, default_meshes=meshes)


# ---------------------------------------------------------------- test case 2
def _tc2_exact(t, x):
    x1, x2 = x[..., 0], x[..., 1]
    side = np.where(x1 < 0.0, np.sin(0.5 * x1), np.sin(0.25 * x1))
    return (1.0 + t) * np.sin(0.5 * x2) * side


def _tc2_source(t, x, a):
    x1, x2 = x[..., 0], x[..., 1]
    s1, s2 = np.sin(x1), np.sin(x2)
    # the time derivative term is 1, not scaled by the diffusion weights
    left = np.sin(0.5 * x1) * (1.0 + (1.0 + t) / 4.0 * (s1**2 + s2**2))
    right = np.sin(0.25 * x1) * (1.0 + (1.0 + t) / 16.0 * (s1**2 + 4.0 * s2**2))
    cross_l = 0.5 * (1.0 + t) * np.cos(0.5 * x1)
    cross_r = 0.25 * (1.0 + t) * np.cos(0.25 * x1)
    neg = x1 < 0.0
    return np.sin(0.5 * x2) * np.where(neg, left, right) - s1 * s2 * np.cos(0.5 * x2) * np.where(
        neg, cross_l, cross_r
    )


def _tc2_diffusion(t, x, a):
    return SQRT2 * np.stack([np.sin(x[..., 0]), np.sin(x[..., 1])], axis=-1)[..., None]


def _tc2(**_) -> TestCase:
    dom = DomainBox((-TWO_PI, -TWO_PI), (TWO_PI, TWO_PI))
    prob = Problem(
        dim=2,
        brownian_dim=1,
        diffusion=_tc2_diffusion,
        initial=lambda x: _tc2_exact(0.0, x),
        controls=FixedControls.none(),
        domain=dom,
        horizon=1.0,
        source=_tc2_source,
        name="test case 2",
    )
    meshes = {
        "LINEAR": [640, 1280, 2560, 5120],
        "CUBIC": [80, 160, 320, 640],
        "MPCSL": [80, 160, 320, 640],
        "TCHEB 3": [20, 40, 80, 160],
        "LEGEND 2": [20, 40, 80, 160],
        "LEGEND 3": [20, 40, 80, 160],
        "BERN 2": [80, 160, 320, 640],
        "BERN 3": [80, 160, 320, 640],
    }
    return TestCase(2, prob, _tc2_exact, dom, 2000, default_meshes=meshes)


# ---------------------------------------------------------------- test case 3
def _tc3_exact(t, x):
    return (1.5 - t) * np.sin(x[..., 0]) * np.sin(x[..., 1])


def _tc3_source(t, x, a):
    x1, x2 = x[..., 0], x[..., 1]
    s = x1 + x2
    c1, c2, s1, s2 = np.cos(x1), np.cos(x2), np.sin(x1), np.sin(x2)
    grad = np.sqrt(c1**2 * s2**2 + s1**2 * c2**2)
    return (0.5 - t) * s1 * s2 + (1.5 - t) * (grad - 2.0 * np.sin(s) * np.cos(s) * c1 * c2)


def _tc3_diffusion(t, x, a):
    s = x[..., 0] + x[..., 1]
    return SQRT2 * np.stack([np.sin(s), np.cos(s)], axis=-1)[..., None]


def unit_circle_controls(count: int) -> np.ndarray:
    """``count`` uniformly spaced directions starting at angle 0."""
    theta = TWO_PI * np.arange(count) / count
    return np.stack([np.cos(theta), np.sin(theta)], axis=1)


def _tc3(control_count: int | None = None, **_) -> TestCase:
    count = control_count or 4000
    dom = DomainBox((-np.pi, -np.pi), (np.pi, np.pi))
    prob = Problem(
        dim=2,
        brownian_dim=1,
        diffusion=_tc3_diffusion,
        initial=lambda x: _tc3_exact(0.0, x),
        controls=FixedControls(unit_circle_controls(count)),
        domain=dom,
        horizon=1.0,
        drift=lambda t, x, a: a,
        source=_tc3_source,
        name="test case 3",
    )
    meshes = {
        "LINEAR": [80, 160, 320, 640],
        "CUBIC": [10, 20, 40, 80],
        "MPCSL": [10, 20, 40, 80],
        "TCHEB 3": [8, 16, 32, 64],
        "LEGEND 2": [8, 16, 32, 64],
        "LEGEND 3": [8, 16, 32, 64],
        "BERN 2": [20, 40, 80, 160],
        "BERN 3": [20, 40, 80, 160],
    }
    return TestCase(3, prob, _tc3_exact, dom, 1000, count, 1.0, meshes)


# ---------------------------------------------------------------- test case 4
TC4_MU = 0.1
TC4_KAPPA = 0.1


def exact_tc4(t, x, horizon: float = 1.0, mu: float = TC4_MU, kappa: float = TC4_KAPPA):
    """``N(N^{-1}(x) + (mu / kappa) sqrt(T - t))`` in the problem's backward time ``t``."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > 1.0)):
        raise ValueError("test case 4 is posed on [0, 1]")
    t = np.asarray(t, dtype=float)
    if np.any(t > horizon):
        raise ValueError("t must not exceed the horizon")
    shift = (mu / kappa) * np.sqrt(horizon - t)
    inner = np.clip(x, 1e-300, 1.0 - 1e-16)
    with np.errstate(divide="ignore"):
        val = ndtr(ndtri(inner) + shift)
    out = np.where(x <= 0.0, 0.0, np.where(x >= 1.0, 1.0, val))
    return float(out) if out.ndim == 0 else out


def derivative_estimate(approx, x: np.ndarray) -> np.ndarray:
    """Centered difference of a 1-d reconstruction with spacing ``dx / 2``.

    One-sided where the stencil would leave the domain.
    """
    lay = approx.layout
    x = np.asarray(x, dtype=float).reshape(-1)
    delta = 0.5 * lay.dx[0]
    lo, hi = lay.domain.lower[0], lay.domain.upper[0]
    left = np.maximum(x - delta, lo)
    right = np.minimum(x + delta, hi)
    # points where the stencil was clamped fall back to the one-sided half
    left = np.where(x - delta < lo, x, left)
    right = np.where(x + delta > hi, x, right)
    vals = approx.evaluate(np.concatenate([left, right])[:, None])
    n = x.size
    return (vals[n:] - vals[:n]) / (right - left)


def _tc4_controls(count: int, bound: float, kappa: float):
    alpha = np.linspace(-bound, bound, count)

    def generate(t, nodes, approx):
        ux = derivative_estimate(approx, nodes[:, 0])
        theta = alpha[None, :] * ux[:, None] / kappa
        return np.stack(np.broadcast_arrays(alpha[None, :], theta), axis=-1)

    envelope = np.stack([alpha, np.zeros_like(alpha)], axis=1)
    return StateDependentControls(generate, envelope, count)


def _tc4(control_count: int | None = None, control_bound: float | None = None, **_) -> TestCase:
    count = control_count or 8000
    bound = control_bound or 16.0
    mu, kappa, horizon = TC4_MU, TC4_KAPPA, 1.0
    dom = DomainBox((0.0,), (1.0,))
    prob = Problem(
        dim=1,
        brownian_dim=1,
        diffusion=lambda t, x, a: a[..., 0][..., None, None],
        initial=lambda x: x[..., 0],
        controls=_tc4_controls(count, bound, kappa),
        domain=dom,
        horizon=horizon,
        source=lambda t, x, a: -mu * a[..., 1],
        maximize=True,
        name="test case 4",
    )

    def exact(t, x):
        return exact_tc4(horizon - np.asarray(t, dtype=float), np.asarray(x)[..., 0], horizon)

    meshes = {
        "LINEAR": [200, 400, 800, 1600, 3200],
        "CUBIC": [80, 160, 320, 640, 1280],
        "MPCSL": [80, 160, 320, 640, 1280],
        "TCHEB 3": [20, 40, 80, 160, 320],
        "LEGEND 2": [20, 40, 80, 160, 320],
        "LEGEND 3": [20, 40, 80, 160, 320],
        "BERN 2": [100, 200, 400, 800, 1600],
        "BERN 3": [100, 200, 400, 800, 1600],
    }
    return TestCase(4, prob, exact, dom, 1600, count, bound, meshes)


# ---------------------------------------------------------------- test case 5
TC5_KAPPA = 0.4
TC5_MU = 1.0
TC5_S0 = 1.0
TC5_STRIKE = 1.0


def _bisect(func, lo, hi, iters: int = 200):
    """Vectorized bisection for a sign change of ``func`` on ``[lo, hi]`` (``func(lo) > 0``)."""
    lo, hi = np.array(lo, dtype=float), np.array(hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pos = func(mid) > 0.0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
        if np.all(hi - lo <= 4e-16 * np.maximum(1.0, np.abs(mid))):
            break
    return 0.5 * (lo + hi)


class _Tc5Dual:
    """Closed-form pieces of ``E[(q Q - Y)^+]`` for one ``(tau, x1)`` batch.

    With ``g ~ N(0, 1)``, ``Q = exp(-a^2/2 + a g)`` and
    ``Y = (S e^{b g - b^2/2} - K)^+`` where ``a = (mu/kappa) sqrt(tau)``,
    ``b = kappa sqrt(tau)`` and ``S = S0 e^{x1}``.  Since ``a > b`` the smooth
    difference ``q Q - S e^{b g - b^2/2} + K`` is positive at both tails and
    negative on at most one interval ``(r1, r2)``.
    """

    def __init__(self, tau: float, x1, mu, kappa, s0, strike):
        self.a = (mu / kappa) * np.sqrt(tau)
        self.b = kappa * np.sqrt(tau)
        if not self.a > self.b:
            raise ValueError("closed form needs mu / kappa > kappa")
        self.spot = s0 * np.exp(np.asarray(x1, dtype=float))
        self.k = strike
        # E[Y]: Black-Scholes call with zero rate
        with np.errstate(divide="ignore"):
            d2 = (np.log(self.spot / strike) - 0.5 * self.b**2) / self.b
        self.call = self.spot * ndtr(d2 + self.b) - strike * ndtr(d2)

    def _diff(self, q, g):
        a, b = self.a, self.b
        return q * np.exp(a * g - 0.5 * a * a) + self.k - self.spot * np.exp(b * g - 0.5 * b * b)

    def roots(self, q):
        """Ends of the negative interval of the smooth difference (empty: r1 = r2)."""
        a, b = self.a, self.b
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore"):
            g_star = (np.log(self.spot * b / (q * a)) + 0.5 * (a * a - b * b)) / (a - b)
        g_star = np.where(np.isfinite(g_star), g_star, 50.0)
        g_star = np.minimum(g_star, 50.0)
        neg = self._diff(q, g_star) < 0.0
        # the difference tends to K > 0 on the left and to +inf on the right
        span = 40.0
        r1 = _bisect(lambda g: self._diff(q, g), g_star - span, g_star)
        r2 = _bisect(lambda g: -self._diff(q, g), g_star, g_star + span)
        return np.where(neg, r1, g_star), np.where(neg, r2, g_star)

    def expectation(self, q):
        """``E[(q Q - Y)^+]`` in closed form."""
        q = np.asarray(q, dtype=float)
        if np.any(q < 0.0):
            raise ValueError("the dual variable must be nonnegative")
        zero = q == 0.0
        r1, r2 = self.roots(np.where(zero, 1.0, q))
        a, b = self.a, self.b
        neg_part = (
            self.spot * (ndtr(r2 - b) - ndtr(r1 - b))
            - self.k * (ndtr(r2) - ndtr(r1))
            - q * (ndtr(r2 - a) - ndtr(r1 - a))
        )
        return np.where(zero, 0.0, q - self.call + np.maximum(neg_part, 0.0))

    def slope(self, q):
        """``d/dq E[(q Q - Y)^+] = E[Q 1{q Q > Y}]``."""
        r1, r2 = self.roots(q)
        return 1.0 - (ndtr(r2 - self.a) - ndtr(r1 - self.a))


def reference_tc5(
    t,
    x1,
    x2,
    mu: float = TC5_MU,
    kappa: float = TC5_KAPPA,
    s0: float = TC5_S0,
    strike: float = TC5_STRIKE,
):
    """Bi-dual reference value after time ``t`` (``t = 0`` gives the initial data).

    ``u = max_q [x2 q - E[(q Q - Y)^+]]``; the objective is concave in ``q``, so
    the maximizer is the root of its monotone slope ``x2 - E[Q 1{qQ > Y}]``,
    found by bisection in ``log q``.
    """
    x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
    shape = x1.shape
    x1, x2 = x1.ravel(), x2.ravel()
    payoff = np.maximum(s0 * np.exp(x1) - strike, 0.0)
    if t <= 0.0:
        out = x2 * payoff
        return float(out[0]) if shape == () else out.reshape(shape)
    dual = _Tc5Dual(float(t), x1, mu, kappa, s0, strike)
    out = np.zeros_like(x1)
    top = x2 >= 1.0
    out[top] = dual.call[top] * x2[top]
    # with q -> 0 the slope is the probability weight of {Y = 0} under Q
    lo = np.full_like(x1, -60.0)
    hi = np.full_like(x1, 60.0)
    slope0 = dual.slope(np.exp(lo))
    active = (~top) & (x2 > slope0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = dual.slope(np.exp(mid)) < x2
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo < 1e-13):
            break
    q = np.exp(0.5 * (lo + hi))
    val = x2 * q - dual.expectation(q)
    out[active] = np.maximum(val[active], 0.0)
    return float(out[0]) if shape == () else out.reshape(shape)


def monte_carlo_tc5(t, x1, x2, q, samples: int = 10**6, seed: int = 0):
    """Monte-Carlo estimate and standard error of ``x2 q - E[(q Q - Y)^+]`` at a given ``q``."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(samples)
    a = (TC5_MU / TC5_KAPPA) * np.sqrt(t)
    b = TC5_KAPPA * np.sqrt(t)
    qq = np.exp(-0.5 * a * a + a * g)
    y = np.maximum(TC5_S0 * np.exp(x1 - 0.5 * b * b + b * g) - TC5_STRIKE, 0.0)
    z = x2 * q - np.maximum(q * qq - y, 0.0)
    return float(z.mean()), float(z.std(ddof=1) / np.sqrt(samples))


def _tc5(control_count: int | None = None, control_bound: float | None = None, **_) -> TestCase:
    count = control_count or 2000
    bound = control_bound or 10.0
    mu, kappa = TC5_MU, TC5_KAPPA
    dom = DomainBox((-3.0, 0.0), (3.0, 1.0))

    def drift(t, x, a):
        x, a = np.broadcast_arrays(x[..., :1], a[..., :1])
        return np.concatenate([np.full_like(a, -0.5 * kappa**2), -(mu / kappa) * a], axis=-1)

    def diffusion(t, x, a):
        x, a = np.broadcast_arrays(x[..., :1], a[..., :1])
        return np.stack([np.full_like(a, kappa), a], axis=-2)

    def initial(x):
        return x[..., 1] * np.maximum(TC5_S0 * np.exp(x[..., 0]) - TC5_STRIKE, 0.0)

    prob = Problem(
        dim=2,
        brownian_dim=1,
        diffusion=diffusion,
        initial=initial,
        controls=FixedControls(np.linspace(-bound, bound, count)[:, None]),
        domain=dom,
        horizon=1.0,
        drift=drift,
        name="test case 5",
    )

    def exact(t, x):
        return reference_tc5(float(t), x[..., 0], x[..., 1])

    meshes = {
        "LINEAR": [40, 80, 160, 320, 640],
        "CUBIC": [10, 20, 40, 80, 160],
        "MPCSL": [10, 20, 40, 80, 160],
        "TCHEB 3": [10, 20, 40, 80, 160],
        "LEGEND 2": [10, 20, 40, 80],
        "LEGEND 3": [10, 20, 40, 80],
        "BERN 2": [40, 80, 160, 320],
        "BERN 3": [40, 80, 160],
    }
    err_box = DomainBox((-1.6, 0.0), (1.6, 1.0))
    return TestCase(5, prob, exact, err_box, 1600, count, bound, meshes)


_BUILDERS = {1: _tc1, 2: _tc2, 3: _tc3, 4: _tc4, 5: _tc5}


def make_test_case(
    case_id: int, control_count: int | None = None, control_bound: float | None = None
) -> TestCase:
    """Benchmark ``case_id`` in 1..5 with optional control-discretization overrides."""
    try:
        build = _BUILDERS[int(case_id)]
    except (KeyError, ValueError):
        raise ValueError(f"unknown test case {case_id!r}; expected 1..5") from None
    return build(control_count=control_count, control_bound=control_bound)
