"""Vectorized reconstruction operators with a plan/apply split.

Planning locates the cells of a batch of points and precomputes the
interpolation weights; applying contracts a plan against one field.  Plans only
depend on the points, so the time stepper can reuse them while the feet stay
put.  Values are always read through a ``CellBox`` so that parallel workers can
evaluate on their local buffers with globally consistent coordinates.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np

from ..grid import GridLayout, locate_cell
from .bernstein import bernstein_basis
from .core import ApproximatorKind, CellBox, DomainError, Field, HaloError, TruncationPolicy
from .lagrange import barycentric_weights, lagrange_basis
from .spline import (
    hermite_basis,
    hermite_combine,
    hermite_interior_extrema,
    limit_slopes,
    notaknot_slopes,
    three_point_slopes,
)

__all__ = ["Approximator", "get_operator", "tensor_eval", "CellOperator", "SplineOperator"]

# evaluation batches are split so temporaries stay around this many floats
_CHUNK_FLOATS = 4_000_000


def _as_points(layout: GridLayout, points) -> tuple[np.ndarray, tuple[int, ...]]:
    pts = np.asarray(points, dtype=float)
    d = layout.dim
    if d == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
        pts = pts[..., None]
    if pts.shape[-1] != d:
        raise ValueError(f"expected points with {d} coordinates, got shape {pts.shape}")
    return pts.reshape(-1, d), pts.shape[:-1]


def _locate(layout: GridLayout, box: CellBox, pts: np.ndarray):
    """Cells of ``pts``, which must lie in the domain and in the local cell block."""
    inside = layout.domain.contains(pts)
    if not np.all(inside):
        bad = pts[np.argmin(inside)]
        raise DomainError(f"point {bad} lies outside the domain; resolve feet before evaluating")
    cell, _ = locate_cell(layout, pts)
    held = box.contains_cells(cell)
    if not np.all(held):
        bad = cell[np.argmin(held)]
        raise HaloError(f"cell {tuple(bad)} is outside the local cell block {box}")
    return cell


def _unit_coordinate(raw):
    # absorbs rounding at cell faces
    return np.clip(raw, 0.0, 1.0)


def _cell_reduce(values: np.ndarray, degree: int, op) -> np.ndarray:
    """Reduce ``op`` over the ``(N + 1)^d`` nodes of every cell."""
    out = values
    for axis in range(values.ndim):
        win = np.lib.stride_tricks.sliding_window_view(out, degree + 1, axis=axis)
        out = op(win, axis=-1)
        out = np.take(out, np.arange(0, out.shape[axis], degree), axis=axis)
    return out


def _band_clamp(raw, y_lo, y_hi, band):
    lo = y_lo - band * np.abs(y_lo)
    hi = y_hi + band * np.abs(y_hi)
    return np.minimum(np.maximum(raw, lo), hi)


@dataclass
class CellPlan:
    base: np.ndarray  # flat index (in the box buffer) of each point's first cell node
    weights: np.ndarray  # (P, (N+1)^d)
    cell: np.ndarray  # flat cell index within the box

    @property
    def size(self) -> int:
        return self.base.size


@dataclass
class CellState:
    values: np.ndarray  # flattened box buffer
    cell_min: np.ndarray | None
    cell_max: np.ndarray | None
    band: float


class CellOperator:
    """Tensorized per-cell reconstruction: truncated Lagrange or Bernstein."""

    def __init__(self, kind: ApproximatorKind, layout: GridLayout, box: CellBox):
        if not kind.cell_local:
            raise ValueError(f"{kind.label} is not a cell-local kind")
        self.kind = kind
        self.layout = layout
        self.box = box
        n = layout.degree
        self.node_shape = box.node_shape(n)
        strides = np.cumprod((1,) + self.node_shape[:0:-1])[::-1]
        self.strides = strides.astype(np.int64)
        local = np.indices((n + 1,) * layout.dim).reshape(layout.dim, -1).T
        self.offsets = (local @ self.strides).astype(np.int64)
        self.bary = barycentric_weights(layout.xi)

    def basis_1d(self, axis: int, cell: np.ndarray, x: np.ndarray) -> np.ndarray:
        lay = self.layout
        face = lay.face_coordinate(axis, cell)
        u = _unit_coordinate((x - face) / lay.dx[axis])
        if self.kind.name == "bernstein":
            return bernstein_basis(lay.degree, u)
        return lagrange_basis(lay.xi, 2.0 * u - 1.0, self.bary)

    def plan(self, points) -> CellPlan:
        pts, _ = _as_points(self.layout, points)
        cell = _locate(self.layout, self.box, pts)
        rel = cell - np.asarray(self.box.lo)
        n = self.layout.degree
        base = (rel * n) @ self.strides
        weights = np.ones((pts.shape[0], 1))
        for k in range(self.layout.dim):
            b = self.basis_1d(k, cell[:, k], pts[:, k])
            weights = (weights[:, :, None] * b[:, None, :]).reshape(pts.shape[0], -1)
        cell_flat = np.ravel_multi_index(tuple(rel.T), self.box.shape)
        return CellPlan(base.astype(np.int64), weights, cell_flat.astype(np.int64))

    def prepare(self, values: np.ndarray, policy: TruncationPolicy) -> CellState:
        values = np.ascontiguousarray(values, dtype=float).reshape(self.node_shape)
        if self.kind.truncated:
            n = self.layout.degree
            cmin = _cell_reduce(values, n, np.min).ravel()
            cmax = _cell_reduce(values, n, np.max).ravel()
        else:
            cmin = cmax = None
        return CellState(values.ravel(), cmin, cmax, policy.band)

    def apply(self, plan: CellPlan, state: CellState) -> np.ndarray:
        vals = state.values
        out = np.zeros(plan.size)
        # fixed summation order keeps results independent of batching and partition
        for m, off in enumerate(self.offsets):
            out += plan.weights[:, m] * vals[plan.base + off]
        if state.cell_min is not None:
            out = _band_clamp(out, state.cell_min[plan.cell], state.cell_max[plan.cell], state.band)
        return out


@dataclass
class SplinePlan:
    interval: np.ndarray  # (P, d) interval index within the box node lines
    basis: list  # per dimension, (4, P) Hermite basis values
    width: np.ndarray  # (P, d) interval widths

    @property
    def size(self) -> int:
        return self.interval.shape[0]


@dataclass
class SplineState:
    values: np.ndarray
    left: np.ndarray  # first-sweep left slopes per interval along axis 0
    right: np.ndarray
    band: float
    tables: tuple | None = None  # fast 2-d not-a-knot contractions
    flags: tuple | None = None  # CSR list of first-sweep intervals needing a clamp


class SplineOperator:
    """Cubic spline family reconstructed by successive 1-d sweeps over grid lines.

    ``not-a-knot`` lines give the (optionally truncated) C2 spline; ``monotone``
    lines give the locally limited Hermite interpolant.  The first sweep runs
    along axis 0 for every line; later sweeps only touch what a point needs.
    """

    def __init__(self, kind: ApproximatorKind, layout: GridLayout, box: CellBox, fast: bool = True):
        if not kind.is_spline:
            raise ValueError(f"{kind.label} is not a spline kind")
        self.kind = kind
        self.layout = layout
        self.box = box
        self.rule = "monotone" if kind.name == "mpcsl" else "not-a-knot"
        self.truncated = kind.truncated
        self.node_shape = box.node_shape(1)
        self.axes = [
            np.asarray(ax[s]) for ax, s in zip(layout.node_axes, box.node_slices(1))
        ]
        self.widths = [np.diff(ax) for ax in self.axes]
        self.fast = fast and layout.dim == 2

    @functools.cached_property
    def slope_matrix(self) -> np.ndarray:
        """Dense not-a-knot slope operator along axis 1."""
        n = self.axes[1].size
        return notaknot_slopes(self.axes[1], np.eye(n), axis=0)

    def _slopes(self, axis_coords, y, axis):
        if self.rule == "not-a-knot":
            s = notaknot_slopes(axis_coords, y, axis=axis)
            return np.take(s, np.arange(s.shape[axis] - 1), axis=axis), np.take(
                s, np.arange(1, s.shape[axis]), axis=axis
            )
        s = three_point_slopes(axis_coords, y, axis=axis)
        h = np.diff(axis_coords).reshape((-1,) + (1,) * (y.ndim - 1 - axis))
        sec = np.diff(y, axis=axis) / h
        n = y.shape[axis]
        return limit_slopes(
            sec, np.take(s, np.arange(n - 1), axis=axis), np.take(s, np.arange(1, n), axis=axis)
        )

    def plan(self, points) -> SplinePlan:
        pts, _ = _as_points(self.layout, points)
        cell = _locate(self.layout, self.box, pts)
        rel = cell - np.asarray(self.box.lo)
        basis, width = [], []
        for k in range(self.layout.dim):
            r = rel[:, k]
            w = self.widths[k][r]
            t = _unit_coordinate((pts[:, k] - self.axes[k][r]) / w)
            basis.append(hermite_basis(t))
            width.append(w)
        return SplinePlan(rel.astype(np.int64), basis, np.stack(width, axis=1))

    def prepare(self, values: np.ndarray, policy: TruncationPolicy) -> SplineState:
        v = np.ascontiguousarray(values, dtype=float).reshape(self.node_shape)
        if v.shape[0] < 2:
            raise ValueError("splines need at least one interval along every axis")
        left, right = self._slopes(self.axes[0], v, 0)
        state = SplineState(v, left, right, policy.band if self.truncated else 0.0)
        if self.fast and self.rule == "not-a-knot":
            g = self.slope_matrix
            state.tables = (v @ g.T, left @ g.T, right @ g.T)
            if self.truncated:
                state.flags = self._flag_intervals(state)
        return state

    def _flag_intervals(self, state: SplineState):
        """First-sweep intervals whose cubic may leave the band (interior extremum)."""
        v = state.values
        h = self.widths[0][:, None]
        y0, y1 = v[:-1], v[1:]
        cmin, cmax = hermite_interior_extrema(y0, y1, h * state.left, h * state.right)
        lo = np.minimum(y0, y1)
        hi = np.maximum(y0, y1)
        lo = lo - state.band * np.abs(lo)
        hi = hi + state.band * np.abs(hi)
        tol = 1e-12 * (np.max(np.abs(v)) + 1e-300)
        flag = (cmin < lo + tol) | (cmax > hi - tol)
        counts = flag.sum(axis=1)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        indices = np.nonzero(flag)[1]
        return indptr, indices

    def apply(self, plan: SplinePlan, state: SplineState) -> np.ndarray:
        rows = int(np.prod(self.node_shape[1:]))
        step = max(1, _CHUNK_FLOATS // max(rows, 1)) if not self.fast else plan.size
        if plan.size <= step:
            return self._apply_chunk(plan, state)
        out = np.empty(plan.size)
        for a in range(0, plan.size, step):
            sl = slice(a, a + step)
            sub = SplinePlan(plan.interval[sl], [b[:, sl] for b in plan.basis], plan.width[sl])
            out[sl] = self._apply_chunk(sub, state)
        return out

    def _apply_chunk(self, plan: SplinePlan, state: SplineState) -> np.ndarray:
        if self.fast and self.rule == "not-a-knot":
            out = self._apply_2d_notaknot(plan, state)
        elif self.fast:
            return self._apply_2d_monotone(plan, state)
        else:
            out = self._apply_generic(plan, state)
        if self.truncated and self.layout.dim > 1:
            out = self._cell_clamp(plan, state, out)
        return out

    def _cell_clamp(self, plan, state, out):
        """Clamp to the cell's corner band; per-sweep relaxed bands would otherwise compound."""
        corners = np.stack(
            [
                state.values[tuple((plan.interval + offset).T)]
                for offset in itertools.product((0, 1), repeat=self.layout.dim)
            ]
        )
        return _band_clamp(out, corners.min(axis=0), corners.max(axis=0), state.band)

    def _first_sweep(self, plan, state, lines=None):
        """Axis-0 Hermite values of every point on ``lines`` (all lines when None)."""
        r0 = plan.interval[:, 0]
        v = state.values
        if lines is None:
            idx, idx1, extra = (r0,), (r0 + 1,), v.ndim - 1
        else:
            idx, idx1, extra = (r0[:, None], lines), ((r0 + 1)[:, None], lines), 1
        y0, y1 = v[idx], v[idx1]
        shape = (-1,) + (1,) * extra
        w = plan.width[:, 0].reshape(shape)
        b = plan.basis[0].reshape((4,) + shape)
        raw = hermite_combine(b, y0, y1, w * state.left[idx], w * state.right[idx])
        if self.truncated:
            raw = _band_clamp(raw, np.minimum(y0, y1), np.maximum(y0, y1), state.band)
        return raw

    def _last_sweep(self, plan, axis, ua, ub, sa, sb, band):
        w = plan.width[:, axis]
        if self.rule == "monotone":
            sa, sb = limit_slopes((ub - ua) / w, sa, sb)
        raw = hermite_combine(plan.basis[axis], ua, ub, w * sa, w * sb)
        if self.truncated:
            raw = _band_clamp(raw, np.minimum(ua, ub), np.maximum(ua, ub), band)
        return raw

    def _apply_generic(self, plan, state):
        u = self._first_sweep(plan, state)
        p = np.arange(plan.size)
        for k in range(1, self.layout.dim):
            rk = plan.interval[:, k]
            s = notaknot_slopes(self.axes[k], u, axis=1) if self.rule == "not-a-knot" else (
                three_point_slopes(self.axes[k], u, axis=1)
            )
            ua, ub = u[p, rk], u[p, rk + 1]
            sa, sb = s[p, rk], s[p, rk + 1]
            if u.ndim > 2:
                shape = (-1,) + (1,) * (u.ndim - 2)
                basis = plan.basis[k].reshape((4,) + shape)
                w = plan.width[:, k].reshape(shape)
                if self.rule == "monotone":
                    sa, sb = limit_slopes((ub - ua) / w, sa, sb)
                u = hermite_combine(basis, ua, ub, w * sa, w * sb)
                if self.truncated:
                    u = _band_clamp(u, np.minimum(ua, ub), np.maximum(ua, ub), state.band)
            else:
                u = self._last_sweep(plan, k, ua, ub, sa, sb, state.band)
        return u

    def _apply_2d_notaknot(self, plan, state):
        r0, r1 = plan.interval[:, 0], plan.interval[:, 1]
        b0 = plan.basis[0]
        w0 = plan.width[:, 0]
        av, al, ar = state.tables
        g = self.slope_matrix

        def contracted(i):
            return b0[0] * av[r0, i] + b0[1] * w0 * al[r0, i] + b0[2] * av[r0 + 1, i] + (
                b0[3] * w0 * ar[r0, i]
            )

        sa, sb = contracted(r1), contracted(r1 + 1)
        lines = np.stack([r1, r1 + 1], axis=1)
        u = self._first_sweep(plan, state, lines)
        if state.flags is not None:
            sa, sb = self._clamp_corrections(plan, state, sa, sb)
        return self._last_sweep(plan, 1, u[:, 0], u[:, 1], sa, sb, state.band)

    def _clamp_corrections(self, plan, state, sa, sb):
        """Add ``G (clamp(H) - H)`` over the flagged lines of every point's row."""
        indptr, indices = state.flags
        r0, r1 = plan.interval[:, 0], plan.interval[:, 1]
        counts = indptr[r0 + 1] - indptr[r0]
        total = int(counts.sum())
        if total == 0:
            return sa, sb
        pt = np.repeat(np.arange(plan.size), counts)
        start = np.repeat(indptr[r0] - np.cumsum(counts) + counts, counts)
        j = indices[start + np.arange(total)]
        k0 = r0[pt]
        v = state.values
        y0, y1 = v[k0, j], v[k0 + 1, j]
        w = plan.width[pt, 0]
        b = plan.basis[0][:, pt]
        raw = hermite_combine(b, y0, y1, w * state.left[k0, j], w * state.right[k0, j])
        delta = _band_clamp(raw, np.minimum(y0, y1), np.maximum(y0, y1), state.band) - raw
        g = self.slope_matrix
        n = plan.size
        sa = sa + np.bincount(pt, weights=g[r1[pt], j] * delta, minlength=n)
        sb = sb + np.bincount(pt, weights=g[r1[pt] + 1, j] * delta, minlength=n)
        return sa, sb

    def _apply_2d_monotone(self, plan, state):
        r1 = plan.interval[:, 1]
        n1 = self.node_shape[1]
        x1 = self.axes[1]
        if n1 == 2:
            u = self._first_sweep(plan, state, np.stack([r1, r1 + 1], axis=1))
            sec = (u[:, 1] - u[:, 0]) / plan.width[:, 1]
            return self._last_sweep(plan, 1, u[:, 0], u[:, 1], sec, sec, 0.0)
        lines = np.clip(r1[:, None] + np.arange(-1, 3), 0, n1 - 1)
        u = self._first_sweep(plan, state, lines)
        xs = x1[lines]
        sa = np.where(
            r1 == 0,
            _three_point(xs[:, 1:4], u[:, 1:4], 0),
            _three_point(xs[:, 0:3], u[:, 0:3], 1),
        )
        sb = np.where(
            r1 + 1 == n1 - 1,
            _three_point(xs[:, 0:3], u[:, 0:3], 2),
            _three_point(xs[:, 1:4], u[:, 1:4], 1),
        )
        return self._last_sweep(plan, 1, u[:, 1], u[:, 2], sa, sb, 0.0)


def _three_point(x, y, at):
    """Second-order derivative estimate from three points, at point ``at`` in {0, 1, 2}."""
    h0 = x[:, 1] - x[:, 0]
    h1 = x[:, 2] - x[:, 1]
    # clipped stencils repeat a line at the ends; those lanes are discarded by the caller
    with np.errstate(divide="ignore", invalid="ignore"):
        d0 = (y[:, 1] - y[:, 0]) / h0
        d1 = (y[:, 2] - y[:, 1]) / h1
        if at == 1:
            return (h0 * d1 + h1 * d0) / (h0 + h1)
        if at == 0:
            return ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1)
        return ((2.0 * h1 + h0) * d1 - h1 * d0) / (h1 + h0)


@functools.lru_cache(maxsize=64)
def get_operator(kind: ApproximatorKind, layout: GridLayout, box: CellBox | None = None):
    box = box or CellBox.full(layout)
    if kind.node_family != layout.family:
        raise ValueError(f"{kind.label} needs {kind.node_family}, layout has {layout.family}")
    if kind.cell_local:
        return CellOperator(kind, layout, box)
    return SplineOperator(kind, layout, box)


class Approximator:
    """Reconstruction ``T v`` of one field, evaluable anywhere in the domain.

    Construction does the per-field work (cell ranges, slope tables); after that
    the object is read-only and can be shared between threads.
    """

    def __init__(
        self,
        kind: ApproximatorKind,
        field: Field,
        truncation: TruncationPolicy | None = None,
        operator=None,
    ):
        self.kind = kind
        self.field = field
        self.truncation = truncation or TruncationPolicy()
        self.operator = operator or get_operator(kind, field.layout, field.box)
        if self.operator.box != field.box:
            raise ValueError("operator and field cover different cell blocks")
        self.state = self.operator.prepare(field.values, self.truncation)

    @property
    def layout(self) -> GridLayout:
        return self.field.layout

    def plan(self, points):
        """Interpolation plan for repeated evaluation at the same points."""
        return self.operator.plan(points)

    def evaluate_plan(self, plan) -> np.ndarray:
        return self.operator.apply(plan, self.state)

    def evaluate(self, points):
        _, lead = _as_points(self.layout, points)
        out = self.evaluate_plan(self.plan(points)).reshape(lead)
        return float(out) if out.ndim == 0 else out

    __call__ = evaluate

    def at_nodes(self) -> np.ndarray:
        """Reconstruction at the field's own nodes (the stored values when interpolating)."""
        if self.kind.interpolating:
            return self.field.values.copy()
        sl = self.field.box.node_slices(self.layout.degree)
        pts = np.stack(np.meshgrid(*(ax[s] for ax, s in zip(self.layout.node_axes, sl)),
                                   indexing="ij"), axis=-1)
        return self.evaluate(pts)


def tensor_eval(approx: Approximator, points):
    """Untruncated reconstruction: the tensor composition of the 1-d interpolants.

    For truncated kinds this skips the per-cell clamp; other kinds evaluate as usual.
    """
    _, lead = _as_points(approx.layout, points)
    op = approx.operator
    plan = op.plan(points)
    if isinstance(op, CellOperator):
        state = CellState(approx.state.values, None, None, 0.0)
        out = op.apply(plan, state)
    elif op.truncated:
        plain = get_operator(ApproximatorKind.cubic_spline(), approx.layout, approx.field.box)
        out = plain.apply(plan, plain.prepare(approx.field.values, approx.truncation))
    else:
        out = op.apply(plan, approx.state)
    out = out.reshape(lead)
    return float(out) if out.ndim == 0 else out
