"""Approximator kinds, truncation policy and nodal fields."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ..grid import DomainBox, GridLayout, NodeFamily, NodeKind

__all__ = [
    "ApproximatorKind",
    "TruncationPolicy",
    "CellBox",
    "Field",
    "truncate",
    "DomainError",
    "HaloError",
]


class DomainError(ValueError):
    """A reconstruction was requested outside the resolution domain."""


class HaloError(RuntimeError):
    """A reconstruction touched grid data that is not held locally."""


_CELL_LOCAL = ("lagrange", "bernstein")
_SPLINES = ("spline", "tspline", "mpcsl")


@dataclass(frozen=True)
class ApproximatorKind:
    """Which reconstruction operator to use.

    ``name`` is one of ``lagrange`` (truncated tensorized Lagrange), ``bernstein``,
    ``spline`` (plain not-a-knot cubic spline), ``tspline`` (truncated cubic
    spline) or ``mpcsl`` (locally limited monotone cubic spline).  The linear
    interpolator is the degree-1 uniform Lagrange kind.
    """

    name: str
    family: NodeKind = NodeKind.UNIFORM
    degree: int = 1

    def __post_init__(self):
        if self.name not in _CELL_LOCAL + _SPLINES:
            raise ValueError(f"unknown approximator kind {self.name!r}")
        if int(self.degree) < 1:
            raise ValueError("degree must be >= 1")
        if self.name in _SPLINES and (self.degree != 1 or self.family is not NodeKind.UNIFORM):
            raise ValueError("spline kinds live on the cell vertices (uniform, degree 1)")
        if self.name == "bernstein" and self.family is not NodeKind.UNIFORM:
            raise ValueError("Bernstein approximation samples the uniform i/N grid")

    # constructors
    @classmethod
    def linear(cls) -> "ApproximatorKind":
        return cls("lagrange", NodeKind.UNIFORM, 1)

    @classmethod
    def trunc_lagrange(cls, family: NodeKind, degree: int) -> "ApproximatorKind":
        return cls("lagrange", family, degree)

    @classmethod
    def cubic_spline(cls) -> "ApproximatorKind":
        return cls("spline")

    @classmethod
    def trunc_cubic_spline(cls) -> "ApproximatorKind":
        return cls("tspline")

    @classmethod
    def monotone_cubic_spline(cls) -> "ApproximatorKind":
        return cls("mpcsl")

    @classmethod
    def bernstein(cls, degree: int) -> "ApproximatorKind":
        return cls("bernstein", NodeKind.UNIFORM, degree)

    @classmethod
    def parse(cls, text: str) -> "ApproximatorKind":
        """Parse table-style names such as ``LEGEND 2``, ``tcheb3``, ``CUBIC`` or ``bern2``."""
        key = re.sub(r"[\s_\-]+", "", text.strip().lower())
        m = re.fullmatch(r"([a-z]+)(\d*)", key)
        if not m:
            raise ValueError(f"cannot parse scheme name {text!r}")
        word, num = m.group(1), m.group(2)
        deg = int(num) if num else None
        if word in ("lin", "linear") and deg in (None, 1):
            return cls.linear()
        if word in ("legend", "legendre") and deg:
            return cls.trunc_lagrange(NodeKind.LOBATTO_LEGENDRE, deg)
        if word in ("tcheb", "cheb", "chebyshev") and deg:
            return cls.trunc_lagrange(NodeKind.LOBATTO_CHEBYSHEV, deg)
        if word in ("bern", "bernstein") and deg:
            return cls.bernstein(deg)
        if word in ("cubic", "tspline", "tcubic") and deg is None:
            return cls.trunc_cubic_spline()
        if word in ("spline", "cubicspline") and deg is None:
            return cls.cubic_spline()
        if word in ("mpcsl", "monotone") and deg is None:
            return cls.monotone_cubic_spline()
        raise ValueError(f"unknown scheme name {text!r}")

    @property
    def label(self) -> str:
        if self.name == "lagrange":
            if self.family is NodeKind.UNIFORM and self.degree == 1:
                return "LINEAR"
            prefix = {
                NodeKind.LOBATTO_LEGENDRE: "LEGEND",
                NodeKind.LOBATTO_CHEBYSHEV: "TCHEB",
                NodeKind.UNIFORM: "TUNIF",
            }[self.family]
            return f"{prefix} {self.degree}"
        if self.name == "bernstein":
            return f"BERN {self.degree}"
        return {"spline": "SPLINE", "tspline": "CUBIC", "mpcsl": "MPCSL"}[self.name]

    @property
    def node_family(self) -> NodeFamily:
        return NodeFamily(self.family, self.degree)

    @property
    def is_spline(self) -> bool:
        return self.name in _SPLINES

    @property
    def cell_local(self) -> bool:
        return self.name in _CELL_LOCAL

    @property
    def truncated(self) -> bool:
        """Whether the per-cell clamp is applied (it is a no-op for degree 1)."""
        return self.name == "tspline" or (self.name == "lagrange" and self.degree > 1)

    @property
    def interpolating(self) -> bool:
        return self.name != "bernstein"

    @property
    def stencil_margin(self) -> int:
        """Extra cells of data needed around a cell that contains a foot."""
        return 2 if self.is_spline else 1

    def layout(self, domain: DomainBox, cells) -> GridLayout:
        return GridLayout(domain, tuple(np.broadcast_to(cells, (domain.dim,))), self.node_family)


@dataclass(frozen=True)
class TruncationPolicy:
    """Relaxed clamp ``[min - k h |min|, max + k h |max|]``; ``k_tilde = 0`` is the strict clamp."""

    k_tilde: float = 0.0
    h: float = 1.0

    def __post_init__(self):
        if self.k_tilde < 0.0:
            raise ValueError("k_tilde must be nonnegative")
        if self.h <= 0.0:
            raise ValueError("time step must be positive")
        if self.k_tilde * self.h >= 1.0:
            raise ValueError(f"k_tilde * h must be < 1, got {self.k_tilde * self.h}")

    @property
    def band(self) -> float:
        return self.k_tilde * self.h


def truncate(raw, cell_min, cell_max, policy: TruncationPolicy | float = 0.0):
    """Clamp ``raw`` into the (possibly relaxed) nodal range of its cell."""
    band = policy.band if isinstance(policy, TruncationPolicy) else float(policy)
    cell_min = np.asarray(cell_min, dtype=float)
    cell_max = np.asarray(cell_max, dtype=float)
    lo = cell_min - band * np.abs(cell_min)
    hi = cell_max + band * np.abs(cell_max)
    out = np.minimum(np.maximum(raw, lo), hi)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class CellBox:
    """Half-open block of cells ``[lo, hi)`` per dimension."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(int(v) for v in self.lo)
        hi = tuple(int(v) for v in self.hi)
        if len(lo) != len(hi) or any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"empty cell box {lo}..{hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def full(cls, layout: GridLayout) -> "CellBox":
        return cls((0,) * layout.dim, layout.cells_per_dim)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    def node_slices(self, degree: int) -> tuple[slice, ...]:
        return tuple(slice(a * degree, b * degree + 1) for a, b in zip(self.lo, self.hi))

    def node_shape(self, degree: int) -> tuple[int, ...]:
        return tuple((b - a) * degree + 1 for a, b in zip(self.lo, self.hi))

    def contains_cells(self, cell: np.ndarray) -> np.ndarray:
        return np.all((cell >= np.asarray(self.lo)) & (cell < np.asarray(self.hi)), axis=-1)

    def intersect(self, other: "CellBox") -> "CellBox | None":
        lo = tuple(max(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(min(a, b) for a, b in zip(self.hi, other.hi))
        if any(a >= b for a, b in zip(lo, hi)):
            return None
        return CellBox(lo, hi)

    def grow(self, width, limit: tuple[int, ...]) -> "CellBox":
        width = np.broadcast_to(np.asarray(width, dtype=int), (len(self.lo),))
        lo = tuple(max(0, a - int(w)) for a, w in zip(self.lo, width))
        hi = tuple(min(n, b + int(w)) for b, w, n in zip(self.hi, width, limit))
        return CellBox(lo, hi)

    def union(self, other: "CellBox") -> "CellBox":
        return CellBox(
            tuple(min(a, b) for a, b in zip(self.lo, other.lo)),
            tuple(max(a, b) for a, b in zip(self.hi, other.hi)),
        )


@dataclass(eq=False)
class Field:
    """Nodal values of one time level, optionally restricted to a block of cells."""

    layout: GridLayout
    values: np.ndarray
    time: float = 0.0
    box: CellBox | None = None

    def __post_init__(self):
        if self.box is None:
            self.box = CellBox.full(self.layout)
        self.values = np.asarray(self.values, dtype=float)
        expected = self.box.node_shape(self.layout.degree)
        if self.values.shape != expected:
            if self.values.size == int(np.prod(expected)):
                self.values = self.values.reshape(expected)
            else:
                raise ValueError(f"field has shape {self.values.shape}, layout expects {expected}")

    @classmethod
    def sample(cls, layout: GridLayout, func, time: float = 0.0) -> "Field":
        return cls(layout, layout.sample(func), time)

    def check_finite(self):
        if not np.all(np.isfinite(self.values)):
            bad = np.argwhere(~np.isfinite(self.values))[0]
            raise FloatingPointError(f"non-finite nodal value at node {tuple(bad)}")
