"""Domain decomposition with one halo exchange per time step.

The cell grid is tiled by rectangular blocks, one per worker.  Before every
step each worker assembles a read-only buffer covering its block plus a halo
from the previous level (the exchange), then updates only the nodes it owns.
Workers are threads sharing one address space; the :class:`ExchangePlan` lists
the copies a message-passing deployment would send.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .approx import Approximator, ApproximatorKind, CellBox, Field, HaloError, TruncationPolicy
from .grid import GridLayout, locate_cell

__all__ = [
    "Partition",
    "Transfer",
    "ExchangePlan",
    "partition_grid",
    "halo_width",
    "build_exchange_plan",
    "owned_nodes",
    "ParallelRunner",
]

# extra halo cells for not-a-knot splines: end effects decay like (2 - sqrt 3)^k
SPLINE_PADDING = 12
_PROBE_POINTS = 17
_SCAN_POINTS = 2_000_000


@dataclass(frozen=True)
class Partition:
    """Rectangular blocks tiling the cell grid, listed in C order of the block grid."""

    cells_per_dim: tuple[int, ...]
    grid: tuple[int, ...]  # blocks per dimension
    blocks: tuple[CellBox, ...]

    @property
    def workers(self) -> int:
        return len(self.blocks)


def _split(n: int, parts: int) -> list[int]:
    base, extra = divmod(n, parts)
    return [base + 1] * extra + [base] * (parts - extra)


def _factorizations(p: int, d: int):
    if d == 1:
        yield (p,)
        return
    for f in range(1, p + 1):
        if p % f == 0:
            for rest in _factorizations(p // f, d - 1):
                yield (f,) + rest


def partition_grid(cells_per_dim, workers: int) -> Partition:
    """Near-equal blocks from the factorization of ``workers`` that balances them best.

    Ties go to the smallest total block perimeter, then to the first factorization
    in lexicographic order, so the result is deterministic.
    """
    cells = tuple(int(c) for c in np.atleast_1d(cells_per_dim))
    workers = int(workers)
    if workers < 1:
        raise ValueError("need at least one worker")
    if workers > math.prod(cells):
        raise ValueError(f"{workers} workers exceed the {math.prod(cells)} cells of the grid")
    best = None
    for grid in _factorizations(workers, len(cells)):
        if any(p > n for p, n in zip(grid, cells)):
            continue
        largest = [math.ceil(n / p) for n, p in zip(cells, grid)]
        key = (math.prod(largest), sum(largest), grid)
        if best is None or key < best[0]:
            best = (key, grid)
    if best is None:
        raise ValueError(f"{workers} workers cannot be laid out as blocks of a {cells} grid")
    grid = best[1]
    edges = []
    for n, p in zip(cells, grid):
        edges.append(np.concatenate([[0], np.cumsum(_split(n, p))]))
    blocks = []
    for idx in itertools.product(*(range(p) for p in grid)):
        lo = tuple(int(e[i]) for e, i in zip(edges, idx))
        hi = tuple(int(e[i + 1]) for e, i in zip(edges, idx))
        blocks.append(CellBox(lo, hi))
    return Partition(cells, grid, tuple(blocks))


def halo_width(problem, h: float, dx, kind: ApproximatorKind, points=None, t: float = 0.0):
    """Halo in cells per dimension: the reach of the feet plus the operator stencil.

    Coefficient maxima are taken over ``points`` (a probe grid of the domain by
    default) and the control envelope.  Feet moved by the boundary treatment can
    reach further; :class:`ParallelRunner` adds those by scanning them.
    """
    dx = np.broadcast_to(np.asarray(dx, dtype=float), (problem.dim,))
    if points is None:
        axes = [np.linspace(a, b, _PROBE_POINTS) for a, b in zip(problem.domain.lower, problem.domain.upper)]
        points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, problem.dim)
    x = np.asarray(points, dtype=float).reshape(-1, 1, problem.dim)
    a = np.asarray(problem.controls.envelope, dtype=float)[None]
    b, sig, _, _ = problem.coefficients(t, x, a)
    reach = np.max(np.abs(sig), axis=(0, 1, 3)) * math.sqrt(h * problem.brownian_dim)
    if b is not None:
        reach = reach + np.max(np.abs(b), axis=(0, 1)) * h
    if not np.all(np.isfinite(reach)):
        raise ValueError("coefficient maxima are unbounded; halo width cannot be determined")
    cells = np.ceil(reach / dx - 1e-12).astype(int)
    return tuple(int(c) + kind.stencil_margin for c in cells)


@dataclass(frozen=True)
class Transfer:
    source: int
    cells: CellBox


@dataclass(frozen=True)
class ExchangePlan:
    """Per worker, the local cell box and the blocks of data it receives."""

    boxes: tuple[CellBox, ...]
    receives: tuple[tuple[Transfer, ...], ...]

    @property
    def empty(self) -> bool:
        return all(len(r) == 0 for r in self.receives)

    def execute(self, worker: int, layout: GridLayout, owner_values: np.ndarray, own: CellBox):
        """Local buffer of ``worker``: its own block plus every planned receive.

        ``owner_values`` is the global node array in which each node holds the
        value written by its owner.
        """
        n = layout.degree
        box = self.boxes[worker]
        buf = np.empty(box.node_shape(n))
        for cells in [own] + [tr.cells for tr in self.receives[worker]]:
            src = tuple(slice(a * n, b * n + 1) for a, b in zip(cells.lo, cells.hi))
            dst = tuple(slice((a - lo) * n, (b - lo) * n + 1) for a, b, lo in zip(cells.lo, cells.hi, box.lo))
            buf[dst] = owner_values[src]
        return buf


def build_exchange_plan(partition: Partition, halo=0, boxes=None) -> ExchangePlan:
    """Minimal receives: the overlap of each worker's box with every other block."""
    if boxes is None:
        boxes = [b.grow(halo, partition.cells_per_dim) for b in partition.blocks]
    receives = []
    for w, box in enumerate(boxes):
        got = []
        for s, block in enumerate(partition.blocks):
            if s == w:
                continue
            cut = box.intersect(block)
            if cut is not None:
                got.append(Transfer(s, cut))
        receives.append(tuple(got))
    return ExchangePlan(tuple(boxes), tuple(receives))


def owned_nodes(layout: GridLayout, block: CellBox) -> np.ndarray:
    """Global flat indices of the nodes a block owns (lower faces in, upper faces out).

    Upper faces on the domain boundary belong to the last block.
    """
    n = layout.degree
    ranges = []
    for a, b, total in zip(block.lo, block.hi, layout.cells_per_dim):
        stop = b * n + 1 if b == total else b * n
        ranges.append(np.arange(a * n, stop))
    mesh = np.meshgrid(*ranges, indexing="ij")
    return np.ravel_multi_index(tuple(m.ravel() for m in mesh), layout.node_shape)


def _feet_cells(problem, layout: GridLayout, h: float, nodes: np.ndarray, t: float):
    """Bounding cell box of every resolved foot of ``nodes`` over the control envelope."""
    from .scheme import resolved_feet

    a = np.asarray(problem.controls.envelope, dtype=float)[None]
    per_node = max(1, a.shape[1] * 2 * problem.brownian_dim)
    step = max(1, _SCAN_POINTS // per_node)
    lo = np.full(layout.dim, np.iinfo(np.int64).max)
    hi = np.full(layout.dim, -1)
    for s in range(0, nodes.size, step):
        x = layout.node_points(nodes[s : s + step])
        pts, _, _, _ = resolved_feet(problem, h, t, x, a)
        cell, _ = locate_cell(layout, pts.reshape(-1, layout.dim))
        lo = np.minimum(lo, cell.min(axis=0))
        hi = np.maximum(hi, cell.max(axis=0))
    return CellBox(tuple(lo), tuple(hi + 1))


class ParallelRunner:
    """Advances a field with ``workers`` blocks and one exchange per step."""

    def __init__(
        self,
        problem,
        layout: GridLayout,
        kind: ApproximatorKind,
        h: float,
        workers: int,
        truncation: TruncationPolicy | None = None,
    ):
        from .scheme import StepEngine

        self.problem = problem
        self.layout = layout
        self.kind = kind
        self.h = float(h)
        self.truncation = truncation or TruncationPolicy(0.0, h)
        self.partition = partition_grid(layout.cells_per_dim, workers)
        halo = halo_width(problem, h, layout.dx, kind)
        if kind.name in ("spline", "tspline"):
            halo = tuple(w + SPLINE_PADDING for w in halo)
        self.halo = halo
        limit = layout.cells_per_dim
        self.nodes = [owned_nodes(layout, b) for b in self.partition.blocks]
        boxes = []
        for block, nodes in zip(self.partition.blocks, self.nodes):
            box = block.grow(halo, limit)
            if workers > 1:
                reach = _feet_cells(problem, layout, self.h, nodes, 0.0)
                box = box.union(reach.grow(kind.stencil_margin, limit))
            boxes.append(box)
        self.plan = build_exchange_plan(self.partition, boxes=boxes)
        self.engines = [
            StepEngine(problem, layout, kind, self.h, nodes, box)
            for nodes, box in zip(self.nodes, boxes)
        ]
        self.exchanges = 0

    @property
    def workers(self) -> int:
        return self.partition.workers

    def _work(self, w: int, values: np.ndarray, t: float):
        engine = self.engines[w]
        buf = self.plan.execute(w, self.layout, values, self.partition.blocks[w])
        field = Field(self.layout, buf, t, self.plan.boxes[w])
        approx = Approximator(self.kind, field, self.truncation, engine.operator)
        try:
            return engine.step(approx, t)
        except HaloError as exc:
            raise HaloError(f"worker {w}: {exc}") from exc

    def run(self, values: np.ndarray, time_grid, snapshot_every: int = 0):
        from .scheme import RunResult, _check_finite

        layout = self.layout
        current = np.array(values, dtype=float).reshape(layout.node_shape)
        snaps = []
        choice = np.empty(layout.num_nodes, dtype=np.int64)
        start = time.perf_counter()
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            for n in range(time_grid.steps):
                t = time_grid.time(n)
                # the exchange: every worker reads its box of the previous level
                self.exchanges += 1
                futures = [pool.submit(self._work, w, current, t) for w in range(self.workers)]
                new = np.empty(layout.num_nodes)
                for w, fut in enumerate(futures):
                    out, idx = fut.result()
                    new[self.nodes[w]] = out
                    choice[self.nodes[w]] = idx
                _check_finite(new, np.arange(layout.num_nodes), layout, n + 1)
                current = new.reshape(layout.node_shape)
                if snapshot_every and (n + 1) % snapshot_every == 0:
                    snaps.append(Field(layout, current.copy(), time_grid.time(n + 1)))
        elapsed = time.perf_counter() - start
        return RunResult(
            Field(layout, current, time_grid.horizon),
            time_grid.steps,
            self.exchanges,
            snaps,
            choice,
            elapsed,
        )
