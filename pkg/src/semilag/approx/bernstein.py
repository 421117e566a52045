"""Bernstein polynomial approximation on the unit cell."""

from __future__ import annotations

import numpy as np
from scipy.special import comb


def bernstein_basis(n: int, x) -> np.ndarray:
    """P_{n,i}(x) = C(n, i) x^i (1 - x)^(n - i), shape ``x.shape + (n + 1,)``."""
    if n < 1:
        raise ValueError("Bernstein degree must be >= 1")
    x = np.asarray(x, dtype=float)[..., None]
    i = np.arange(n + 1)
    return comb(n, i, exact=False) * x**i * (1.0 - x) ** (n - i)


def bernstein_eval(n: int, cell_values, x) -> float:
    """Tensorized Bernstein approximation of samples on the uniform ``i / n`` grid.

    ``cell_values`` has shape ``(n + 1,) * d`` and ``x`` is a point of ``[0, 1]^d``.
    """
    values = np.asarray(cell_values, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if values.shape != (n + 1,) * x.size:
        raise ValueError(f"expected cell values of shape {(n + 1,) * x.size}, got {values.shape}")
    out = values
    for xk in x[::-1]:
        out = out @ bernstein_basis(n, xk)
    return float(out)
