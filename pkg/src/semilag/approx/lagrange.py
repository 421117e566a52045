"""Barycentric Lagrange interpolation on a fixed node set."""

from __future__ import annotations

import numpy as np

# reference-coordinate distance under which a point is treated as the node itself
NODE_SNAP = 1e-13


def barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    """w_j = 1 / prod_{k != j} (x_j - x_k)."""
    nodes = np.asarray(nodes, dtype=float)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0.0):
        raise ValueError("interpolation nodes must be distinct")
    return 1.0 / np.prod(diff, axis=1)


def lagrange_basis(nodes: np.ndarray, x, weights: np.ndarray | None = None) -> np.ndarray:
    """Values of the Lagrange cardinal functions at ``x``.

    Returns an array of shape ``x.shape + (len(nodes),)``.  Points within
    ``NODE_SNAP`` of a node get the exact Kronecker row, so interpolation
    reproduces nodal data bit for bit.
    """
    nodes = np.asarray(nodes, dtype=float)
    if weights is None:
        weights = barycentric_weights(nodes)
    x = np.asarray(x, dtype=float)
    diff = x[..., None] - nodes
    hit = np.abs(diff) <= NODE_SNAP
    on_node = hit.any(axis=-1)
    safe = np.where(hit, 1.0, diff)
    terms = weights / safe
    basis = terms / terms.sum(axis=-1, keepdims=True)
    if on_node.any():
        first = np.argmax(hit, axis=-1)
        kron = np.zeros_like(basis)
        np.put_along_axis(kron, first[..., None], 1.0, axis=-1)
        basis = np.where(on_node[..., None], kron, basis)
    return basis


def lagrange_eval_1d(nodes, values, x):
    """Evaluate the interpolating polynomial through ``(nodes, values)`` at ``x``."""
    values = np.asarray(values, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    if nodes.shape != values.shape:
        raise ValueError("nodes and values must have the same length")
    basis = lagrange_basis(nodes, x)
    out = basis @ values
    return float(out) if np.ndim(out) == 0 else out
