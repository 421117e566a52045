"""Explicit semi-Lagrangian time stepping for HJB equations.

One step maps the nodal values at time ``t`` to time ``t + h``::

    v(t + h, x) = opt_a [ sum_i (v(t, x + b h + s_i) + v(t, x + b h - s_i)) / (2 q)
                          + h f_a(t, x) + h c_a(t, x) v(t, x) ]

with ``s_i = sigma_i sqrt(h q)`` and ``opt`` an infimum (or supremum for
maximization problems).  ``v(t, .)`` off the grid is the reconstruction of the
previous level; feet leaving the domain go through :mod:`semilag.boundary`.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .approx import Approximator, ApproximatorKind, CellBox, Field, TruncationPolicy
from .approx.operators import get_operator
from .boundary import resolve_feet_batch, scaled_columns
from .grid import DomainBox, GridLayout

__all__ = [
    "Problem",
    "FixedControls",
    "StateDependentControls",
    "TimeGrid",
    "StepEngine",
    "RunResult",
    "NonFiniteError",
    "characteristic_feet",
    "one_step_value",
    "run",
    "eval_intermediate",
]

log = logging.getLogger(__name__)

# feet evaluated per batch, and the most feet whose plans are kept across steps
_BATCH_POINTS = 1_500_000
_CACHE_POINTS = 4_000_000


class NonFiniteError(FloatingPointError):
    """A time step produced a non-finite nodal value."""

    def __init__(self, node: int, step: int, point=None):
        self.node, self.step = node, step
        where = f" at x={np.asarray(point).tolist()}" if point is not None else ""
        super().__init__(f"non-finite value at global node {node}{where} in step {step}")


@dataclass(frozen=True)
class FixedControls:
    """A fixed finite list of control vectors, shape ``(K, m)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] == 0:
            raise ValueError("control list must be a nonempty (K, m) array")
        object.__setattr__(self, "values", v)

    @classmethod
    def none(cls) -> "FixedControls":
        """The single empty control of an uncontrolled problem."""
        return cls(np.zeros((1, 0)))

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def envelope(self) -> np.ndarray:
        return self.values

    def generate(self, t, nodes, approx) -> np.ndarray:
        return self.values


@dataclass(frozen=True)
class StateDependentControls:
    """Controls produced per node from the previous-level reconstruction.

    ``generator(t, nodes, approx)`` returns an ``(n, K, m)`` array for the
    ``(n, d)`` nodes.  ``envelope`` is a finite set whose coefficient maxima bound
    those of every generated control (used for halo sizing).
    """

    generator: Callable
    envelope: np.ndarray
    count: int

    def generate(self, t, nodes, approx) -> np.ndarray:
        a = np.asarray(self.generator(t, nodes, approx), dtype=float)
        if a.ndim != 3 or a.shape[0] != len(nodes) or a.shape[1] == 0:
            raise ValueError("state-dependent controls must be a nonempty (n, K, m) array")
        return a


@dataclass
class Problem:
    """Coefficients of a controlled diffusion, vectorized over nodes and controls.

    Every coefficient is called as ``func(t, x, a)`` with ``x`` of shape
    ``(..., d)`` and ``a`` of shape ``(..., m)`` broadcasting against each other:
    ``drift`` returns ``(..., d)``, ``diffusion`` ``(..., d, q)``, ``discount`` and
    ``source`` ``(...)``.  ``initial(x)`` is the data at ``t = 0``.
    """

    dim: int
    brownian_dim: int
    diffusion: Callable
    initial: Callable
    controls: FixedControls | StateDependentControls
    domain: DomainBox
    horizon: float
    drift: Callable | None = None
    discount: Callable | None = None
    source: Callable | None = None
    maximize: bool = False
    name: str = ""

    def __post_init__(self):
        if self.domain.dim != self.dim:
            raise ValueError("domain dimension does not match the problem")
        if self.brownian_dim < 1:
            raise ValueError("need at least one Brownian dimension")
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")

    def coefficients(self, t, x, a):
        """Broadcast ``(b, sigma, c, f)`` for nodes ``x (n, 1, d)`` and controls ``a``."""
        lead = np.broadcast_shapes(x.shape[:-1], a.shape[:-1])
        d, q = self.dim, self.brownian_dim
        b = np.broadcast_to(self.drift(t, x, a), lead + (d,)) if self.drift else None
        sig = np.broadcast_to(self.diffusion(t, x, a), lead + (d, q))
        c = np.broadcast_to(self.discount(t, x, a), lead) if self.discount else None
        f = np.broadcast_to(self.source(t, x, a), lead) if self.source else None
        return b, sig, c, f


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self):
        if int(self.steps) < 0 or self.steps != int(self.steps):
            raise ValueError("number of steps must be a nonnegative integer")
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")

    @property
    def h(self) -> float:
        if self.steps == 0:
            raise ValueError("a zero-step grid has no time step")
        return self.horizon / self.steps

    def time(self, n: int) -> float:
        return self.horizon * n / self.steps if self.steps else 0.0


def characteristic_feet(problem: Problem, a, t, x, h) -> np.ndarray:
    """The ``2 q`` feet ``x + b h +/- sigma_i sqrt(h q)``, shape ``(..., 2q, d)``."""
    if not h > 0.0:
        raise ValueError("time step must be positive")
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    b, sig, _, _ = problem.coefficients(t, x, a)
    center = x + b * h if b is not None else np.broadcast_to(x, sig.shape[:-1])
    cols = scaled_columns(sig, h, problem.brownian_dim)
    feet = np.stack([center[..., None, :] + cols, center[..., None, :] - cols], axis=-2)
    return feet.reshape(cols.shape[:-2] + (2 * problem.brownian_dim, problem.dim))


def resolved_feet(problem: Problem, h: float, t, x, a):
    """Resolved feet ``(n, K, 2q, d)``, weights ``(n, K, 2q)`` and ``(c, f)`` for nodes ``x (n, d)``."""
    b, sig, c, f = problem.coefficients(t, x[:, None, :], a)
    xb = x[:, None, :]
    center = xb + b * h if b is not None else np.broadcast_to(xb, sig.shape[:-1])
    cols = scaled_columns(sig, h, problem.brownian_dim)
    pts, w, _ = resolve_feet_batch(center, cols, problem.domain)
    return pts, w, c, f


def _combine(w, vals, c, f, h, here):
    # fixed order of accumulation, identical for every node
    totals = w[..., 0] * vals[..., 0]
    for j in range(1, w.shape[-1]):
        totals = totals + w[..., j] * vals[..., j]
    if f is not None:
        totals = totals + h * f
    if c is not None:
        totals = totals + h * c * here[:, None]
    return totals


def _select(totals: np.ndarray, maximize: bool):
    idx = np.argmax(totals, axis=1) if maximize else np.argmin(totals, axis=1)
    return totals[np.arange(totals.shape[0]), idx], idx


class StepEngine:
    """Advances a fixed set of owned nodes by one time step.

    ``nodes`` are global flat node indices; the reconstruction is read from
    ``box`` (the whole grid in a sequential run, owned cells plus halo for a
    worker).  Feet and their interpolation plans are cached between steps
    whenever the feet do not change.
    """

    def __init__(
        self,
        problem: Problem,
        layout: GridLayout,
        kind: ApproximatorKind,
        h: float,
        nodes: np.ndarray | None = None,
        box: CellBox | None = None,
    ):
        self.problem = problem
        self.layout = layout
        self.kind = kind
        self.h = float(h)
        self.box = box or CellBox.full(layout)
        self.nodes = np.arange(layout.num_nodes) if nodes is None else np.asarray(nodes)
        self.points = layout.node_points(self.nodes)
        # position of each owned node inside the box buffer
        n = layout.degree
        multi = np.unravel_index(self.nodes, layout.node_shape)
        local = tuple(m - lo * n for m, lo in zip(multi, self.box.lo))
        self.local_index = np.ravel_multi_index(local, self.box.node_shape(n))
        self.operator = get_operator(kind, layout, self.box)
        self._cache: dict[int, tuple[np.ndarray, object]] = {}
        self.plans_built = 0

    def _batches(self, count: int):
        per_node = max(1, count * 2 * self.problem.brownian_dim)
        size = max(1, _BATCH_POINTS // per_node)
        for k, a in enumerate(range(0, self.nodes.size, size)):
            yield k, slice(a, min(a + size, self.nodes.size))

    def _plan(self, key, pts, cacheable):
        hit = self._cache.get(key)
        if hit is not None and hit[0].shape == pts.shape and np.array_equal(hit[0], pts):
            return hit[1]
        plan = self.operator.plan(pts.reshape(-1, self.layout.dim))
        self.plans_built += 1
        if cacheable:
            self._cache[key] = (pts, plan)
        return plan

    def step(self, approx: Approximator, t: float):
        """Values at ``t + h`` of the owned nodes and the index of the chosen control."""
        p = self.problem
        ctrl = p.controls
        here = None
        if p.discount is not None:
            here = approx.at_nodes().ravel()[self.local_index]
        fixed = isinstance(ctrl, FixedControls)
        count = ctrl.count
        total_points = self.nodes.size * count * 2 * p.brownian_dim
        cacheable = total_points <= _CACHE_POINTS
        out = np.empty(self.nodes.size)
        choice = np.empty(self.nodes.size, dtype=np.int64)
        for key, sl in self._batches(count):
            x = self.points[sl]
            a = ctrl.values[None] if fixed else ctrl.generate(t, x, approx)
            pts, w, c, f = resolved_feet(p, self.h, t, x, a)
            plan = self._plan(key, pts, cacheable)
            vals = approx.evaluate_plan(plan).reshape(w.shape)
            totals = _combine(w, vals, c, f, self.h, here[sl] if here is not None else None)
            out[sl], choice[sl] = _select(totals, p.maximize)
        return out, choice


@dataclass
class RunResult:
    field: Field
    steps: int
    exchanges: int = 0
    snapshots: list = field(default_factory=list)
    last_controls: np.ndarray | None = None
    elapsed: float = 0.0  # wall-clock seconds of the time loop


def _policy(truncation, h) -> TruncationPolicy:
    if isinstance(truncation, TruncationPolicy):
        return truncation
    return TruncationPolicy(float(truncation or 0.0), h)


def _check_finite(values: np.ndarray, nodes: np.ndarray, layout: GridLayout, step: int):
    bad = ~np.isfinite(values)
    if np.any(bad):
        g = int(nodes[np.argmax(bad)])
        raise NonFiniteError(g, step, layout.node_points(g))


def run(
    problem: Problem,
    layout: GridLayout,
    time_grid: TimeGrid,
    kind: ApproximatorKind,
    truncation: TruncationPolicy | float | None = None,
    workers: int = 1,
    snapshot_every: int = 0,
) -> RunResult:
    """March from ``g`` to the horizon; ``workers > 1`` uses domain decomposition."""
    if layout.dim != problem.dim:
        raise ValueError("layout and problem dimensions differ")
    if layout.family != kind.node_family:
        raise ValueError(f"{kind.label} needs nodes {kind.node_family}, layout has {layout.family}")
    values = layout.sample(problem.initial)
    nodes = np.arange(layout.num_nodes)
    _check_finite(values.ravel(), nodes, layout, 0)
    if time_grid.steps == 0:
        return RunResult(Field(layout, values, 0.0), 0)
    h = time_grid.h
    policy = _policy(truncation, h)
    if workers > 1:
        from .parallel import ParallelRunner

        runner = ParallelRunner(problem, layout, kind, h, workers, policy)
        return runner.run(values, time_grid, snapshot_every)

    engine = StepEngine(problem, layout, kind, h)
    snaps = []
    choice = None
    start = time.perf_counter()
    for n in range(time_grid.steps):
        t = time_grid.time(n)
        approx = Approximator(kind, Field(layout, values, t), policy, engine.operator)
        new, choice = engine.step(approx, t)
        _check_finite(new, nodes, layout, n + 1)
        values = new.reshape(layout.node_shape)
        if snapshot_every and (n + 1) % snapshot_every == 0:
            snaps.append(Field(layout, values.copy(), time_grid.time(n + 1)))
    log.debug("run finished: %d plans built", engine.plans_built)
    # a single block still synchronizes once per step, with an empty exchange
    return RunResult(
        Field(layout, values, time_grid.horizon),
        time_grid.steps,
        time_grid.steps,
        snaps,
        choice,
        time.perf_counter() - start,
    )


def one_step_value(problem: Problem, approx_prev: Approximator, t: float, x, h: float):
    """Optimal one-step value at ``x`` and the chosen control vector."""
    x = np.asarray(x, dtype=float).reshape(1, problem.dim)
    ctrl = problem.controls
    a = ctrl.values[None] if isinstance(ctrl, FixedControls) else ctrl.generate(t, x, approx_prev)
    if a.shape[-2] == 0:
        raise ValueError("empty control list")
    pts, w, c, f = resolved_feet(problem, float(h), t, x, a)
    vals = approx_prev.evaluate(pts).reshape(w.shape)
    here = np.atleast_1d(approx_prev.evaluate(x)) if c is not None else None
    totals = _combine(w, vals, c, f, float(h), here)
    value, idx = _select(totals, problem.maximize)
    return float(value[0]), np.broadcast_to(a, (1,) + a.shape[-2:])[0, idx[0]]


def eval_intermediate(t: float, h: float, x, g, approx_h) -> float:
    """Linear-in-time blend ``(1 - t/h) g(x) + (t/h) v_h(h, x)`` on the first step."""
    if not 0.0 <= t <= h:
        raise ValueError(f"t={t} outside [0, {h}]")
    s = t / h
    gx = g(np.asarray(x, dtype=float))
    vx = approx_h(x) if callable(approx_h) else approx_h
    out = (1.0 - s) * gx + s * vx
    return float(out) if np.ndim(out) == 0 else out


def l_inf_error(values: np.ndarray, exact: np.ndarray, mask: np.ndarray | None = None) -> float:
    diff = np.abs(np.asarray(values) - np.asarray(exact))
    if mask is not None:
        diff = diff[mask]
    return float(np.max(diff)) if diff.size else math.nan
