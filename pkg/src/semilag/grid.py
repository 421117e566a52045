"""Structured hypercube grids with per-cell tensorized node families.

A domain box is split into ``cells_per_dim`` cells of side ``dx``.  Every cell
carries the tensor product of a reference node family on ``[-1, 1]``; nodes
that sit on a shared face are stored once, so along one dimension there are
``cells * N + 1`` global nodes.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DomainBox",
    "NodeKind",
    "NodeFamily",
    "GridLayout",
    "reference_nodes",
    "locate_cell",
    "node_coordinate",
]


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned box ``[lower, upper]`` in ``d`` dimensions."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lower) == 0 or len(lower) != len(upper):
            raise ValueError("lower and upper must be non-empty and of equal length")
        if any(not lo < hi for lo, hi in zip(lower, upper)):
            raise ValueError(f"degenerate box: lower={lower}, upper={upper}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper)

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Componentwise closure test, vectorized over leading axes."""
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo) & (x <= self.hi), axis=-1)

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)


class NodeKind(enum.Enum):
    UNIFORM = "uniform"
    LOBATTO_CHEBYSHEV = "chebyshev"
    LOBATTO_LEGENDRE = "legendre"


@dataclass(frozen=True)
class NodeFamily:
    kind: NodeKind
    degree: int

    def __post_init__(self):
        if int(self.degree) < 1:
            raise ValueError(f"node family degree must be >= 1, got {self.degree}")
        object.__setattr__(self, "degree", int(self.degree))

    @property
    def nodes(self) -> np.ndarray:
        return reference_nodes(self)


def _legendre_and_derivs(n: int, x: np.ndarray):
    """P_n, P_n' and P_n'' by the three-term recurrence."""
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    # Legendre ODE: (1 - x^2) P'' - 2x P' + n(n+1) P = 0
    dp = n * (p_prev - x * p) / (1.0 - x * x)
    d2p = (2.0 * x * dp - n * (n + 1) * p) / (1.0 - x * x)
    return p, dp, d2p


def _lobatto_legendre(n: int) -> np.ndarray:
    if n == 1:
        return np.array([-1.0, 1.0])
    # interior nodes are the roots of P_n'; Newton from the Chebyshev guesses
    x = -np.cos(np.pi * np.arange(1, n) / n)
    for _ in range(100):
        _, dp, d2p = _legendre_and_derivs(n, x)
        step = dp / d2p
        x = x - step
        if np.max(np.abs(step)) < 1e-16:
            break
    _, dp, _ = _legendre_and_derivs(n, x)
    if np.max(np.abs(dp)) > 1e-14 * n * n:
        raise ArithmeticError(f"Legendre-Lobatto Newton iteration stalled for N={n}")
    # enforce exact symmetry
    x = 0.5 * (x - x[::-1])
    return np.concatenate(([-1.0], x, [1.0]))


@functools.lru_cache(maxsize=None)
def _reference_nodes_cached(kind: NodeKind, n: int) -> tuple[float, ...]:
    j = np.arange(n + 1)
    if kind is NodeKind.UNIFORM:
        xi = -1.0 + 2.0 * j / n
        xi = 0.5 * (xi - xi[::-1])
    elif kind is NodeKind.LOBATTO_CHEBYSHEV:
        xi = -np.cos(np.pi * j / n)
        xi = 0.5 * (xi - xi[::-1])
    elif kind is NodeKind.LOBATTO_LEGENDRE:
        xi = _lobatto_legendre(n)
    else:  # pragma: no cover
        raise ValueError(kind)
    xi[0], xi[-1] = -1.0, 1.0
    return tuple(float(v) for v in xi)


def reference_nodes(family: NodeFamily) -> np.ndarray:
    """The ``N + 1`` reference nodes of ``family`` on ``[-1, 1]``, sorted."""
    return np.array(_reference_nodes_cached(family.kind, family.degree))


@dataclass(frozen=True, eq=False)
class GridLayout:
    """Cells, node family and global node numbering over a domain box.

    Global node ``g`` along a dimension belongs to cell ``min(g // N, cells - 1)``;
    the node array has shape ``tuple(cells * N + 1)``.  Layouts are immutable and
    compared by identity.
    """

    domain: DomainBox
    cells_per_dim: tuple[int, ...]
    family: NodeFamily
    dx: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cells = tuple(int(c) for c in np.atleast_1d(self.cells_per_dim))
        if len(cells) != self.domain.dim:
            raise ValueError(
                f"cells_per_dim has {len(cells)} entries for a {self.domain.dim}-d domain"
            )
        if any(c < 1 for c in cells):
            raise ValueError(f"cells_per_dim must be positive, got {cells}")
        object.__setattr__(self, "cells_per_dim", cells)
        dx = (self.domain.hi - self.domain.lo) / np.asarray(cells, dtype=float)
        dx.setflags(write=False)
        object.__setattr__(self, "dx", dx)

    @classmethod
    def uniform(cls, lower, upper, cells, family: NodeFamily | None = None) -> "GridLayout":
        lower = np.atleast_1d(lower)
        cells = np.atleast_1d(cells)
        if cells.size == 1 and lower.size > 1:
            cells = np.repeat(cells, lower.size)
        return cls(DomainBox(lower, upper), tuple(cells), family or NodeFamily(NodeKind.UNIFORM, 1))

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def degree(self) -> int:
        return self.family.degree

    @functools.cached_property
    def xi(self) -> np.ndarray:
        return reference_nodes(self.family)

    @property
    def node_shape(self) -> tuple[int, ...]:
        n = self.degree
        return tuple(c * n + 1 for c in self.cells_per_dim)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.node_shape))

    def face_coordinate(self, axis: int, face: np.ndarray | int) -> np.ndarray:
        """Coordinate of cell face ``face`` (0..cells) along ``axis``."""
        face = np.asarray(face)
        x = self.domain.lower[axis] + face * self.dx[axis]
        return np.where(face == self.cells_per_dim[axis], self.domain.upper[axis], x)

    @functools.cached_property
    def node_axes(self) -> tuple[np.ndarray, ...]:
        """Global node coordinates along every dimension."""
        axes = []
        n = self.degree
        for k, cells in enumerate(self.cells_per_dim):
            g = np.arange(cells * n + 1)
            cell = np.minimum(g // n, cells - 1)
            local = g - cell * n
            axes.append(_coordinate_1d(self, k, cell, local))
            axes[-1].setflags(write=False)
        return tuple(axes)

    def node_points(self, flat_index: np.ndarray | None = None) -> np.ndarray:
        """Coordinates of global nodes as an ``(M, d)`` array (C order)."""
        if flat_index is None:
            flat_index = np.arange(self.num_nodes)
        multi = np.unravel_index(np.asarray(flat_index), self.node_shape)
        return np.stack([ax[i] for ax, i in zip(self.node_axes, multi)], axis=-1)

    def node_mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.node_axes, indexing="ij"))

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func`` on every node; ``func`` takes an ``(..., d)`` array."""
        pts = np.stack(self.node_mesh(), axis=-1)
        return np.asarray(func(pts), dtype=float).reshape(self.node_shape)


def _coordinate_1d(layout: GridLayout, axis: int, cell, local) -> np.ndarray:
    cell = np.asarray(cell)
    local = np.asarray(local)
    n = layout.degree
    dx = layout.dx[axis]
    xi = layout.xi[local]
    interior = layout.face_coordinate(axis, cell) + 0.5 * (1.0 + xi) * dx
    # face nodes come from the face formula so both neighbours agree bitwise
    x = np.where(local == 0, layout.face_coordinate(axis, cell), interior)
    return np.where(local == n, layout.face_coordinate(axis, cell + 1), x)


def locate_cell(layout: GridLayout, x) -> tuple[np.ndarray, np.ndarray]:
    """Cell multi-index containing ``x`` and whether ``x`` had to be clipped.

    Cells are lower-closed and upper-open except the last one, which is closed.
    Points outside the domain are assigned the nearest cell.  Works on a single
    point ``(d,)`` or on a batch ``(..., d)``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != layout.dim:
        raise ValueError(f"expected points with {layout.dim} coordinates, got shape {x.shape}")
    lo = layout.domain.lo
    cells = np.asarray(layout.cells_per_dim)
    raw = np.floor((x - lo) / layout.dx).astype(np.int64)
    cell = np.clip(raw, 0, cells - 1)
    clipped = ~layout.domain.contains(x)
    return cell, clipped


def node_coordinate(layout: GridLayout, cell, local) -> np.ndarray:
    """Global coordinate of local node ``local`` of cell ``cell``."""
    cell = np.atleast_1d(np.asarray(cell, dtype=np.int64))
    local = np.atleast_1d(np.asarray(local, dtype=np.int64))
    if cell.shape[-1] != layout.dim or local.shape[-1] != layout.dim:
        raise ValueError("cell and local indices need one entry per dimension")
    cells = np.asarray(layout.cells_per_dim)
    if np.any(cell < 0) or np.any(cell >= cells):
        raise IndexError(f"cell index {cell} out of range for {tuple(cells)} cells")
    if np.any(local < 0) or np.any(local > layout.degree):
        raise IndexError(f"local index {local} out of range for degree {layout.degree}")
    return np.stack(
        [_coordinate_1d(layout, k, cell[..., k], local[..., k]) for k in range(layout.dim)],
        axis=-1,
    )


def global_node_index(layout: GridLayout, cell, local) -> np.ndarray:
    """Per-dimension global node index ``cell * N + local``."""
    return np.asarray(cell) * layout.degree + np.asarray(local)
