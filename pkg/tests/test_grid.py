import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import legendre as npleg

from semilag.grid import (
    DomainBox,
    GridLayout,
    NodeFamily,
    NodeKind,
    locate_cell,
    node_coordinate,
    reference_nodes,
)
from semilag.grid import global_node_index


# ---------------------------------------------------------------- reference nodes
def test_chebyshev_two():
    np.testing.assert_array_equal(reference_nodes(NodeFamily(NodeKind.LOBATTO_CHEBYSHEV, 2)), [-1, 0, 1])


def test_chebyshev_three():
    np.testing.assert_allclose(
        reference_nodes(NodeFamily(NodeKind.LOBATTO_CHEBYSHEV, 3)), [-1, -0.5, 0.5, 1], atol=1e-15
    )


def test_legendre_three():
    xi = reference_nodes(NodeFamily(NodeKind.LOBATTO_LEGENDRE, 3))
    np.testing.assert_allclose(xi, [-1, -1 / np.sqrt(5), 1 / np.sqrt(5), 1], atol=1e-15)


@pytest.mark.parametrize("n", range(2, 13))
def test_legendre_matches_numpy_roots(n):
    # interior Lobatto nodes are the roots of P_n'
    coef = np.zeros(n + 1)
    coef[-1] = 1.0
    roots = np.sort(npleg.legroots(npleg.legder(coef)))
    xi = reference_nodes(NodeFamily(NodeKind.LOBATTO_LEGENDRE, n))
    np.testing.assert_allclose(xi[1:-1], roots, atol=1e-13)
    assert xi[0] == -1.0 and xi[-1] == 1.0


@pytest.mark.parametrize("kind", list(NodeKind))
@pytest.mark.parametrize("n", [1, 2, 3, 4, 7])
def test_nodes_sorted_and_symmetric(kind, n):
    xi = reference_nodes(NodeFamily(kind, n))
    assert xi.size == n + 1
    assert np.all(np.diff(xi) > 0)
    np.testing.assert_array_equal(xi, -xi[::-1])


def test_family_rejects_degree_zero():
    with pytest.raises(ValueError):
        NodeFamily(NodeKind.UNIFORM, 0)


# ---------------------------------------------------------------- layout
def test_domain_rejects_inverted_box():
    with pytest.raises(ValueError):
        DomainBox((1.0,), (0.0,))


def test_layout_shapes():
    lay = GridLayout(DomainBox((0.0, -1.0), (2.0, 1.0)), (4, 3), NodeFamily(NodeKind.LOBATTO_LEGENDRE, 2))
    assert lay.node_shape == (9, 7)
    assert lay.num_nodes == 63
    np.testing.assert_allclose(lay.dx, [0.5, 2 / 3])


def test_layout_rejects_bad_cells():
    with pytest.raises(ValueError):
        GridLayout(DomainBox((0.0,), (1.0,)), (0,), NodeFamily(NodeKind.UNIFORM, 1))
    with pytest.raises(ValueError):
        GridLayout(DomainBox((0.0,), (1.0,)), (2, 2), NodeFamily(NodeKind.UNIFORM, 1))


# ---------------------------------------------------------------- locate_cell
@pytest.mark.parametrize(
    "x, cell, clipped",
    [(0.3, 1, False), (1.0, 3, False), (1.2, 3, True), (0.0, 0, False), (0.25, 1, False), (-0.1, 0, True)],
)
def test_locate_cell_examples(x, cell, clipped):
    lay = GridLayout.uniform(0.0, 1.0, 4)
    c, clip = locate_cell(lay, np.array([x]))
    assert int(c[0]) == cell
    assert bool(clip) is clipped


@settings(max_examples=200, deadline=None)
@given(
    st.integers(1, 30),
    st.floats(-5.0, 5.0, allow_nan=False),
    st.floats(0.1, 10.0, allow_nan=False),
    st.floats(0.0, 1.0),
)
def test_located_cell_contains_point(cells, lo, width, frac):
    lay = GridLayout.uniform(lo, lo + width, cells)
    x = lo + frac * width
    c, clipped = locate_cell(lay, np.array([x]))
    c = int(c[0])
    assert 0 <= c < cells
    assert not clipped
    a = lay.face_coordinate(0, c)
    b = lay.face_coordinate(0, c + 1)
    assert a - 1e-12 * width <= x <= b + 1e-12 * width


# ---------------------------------------------------------------- node coordinates
@pytest.fixture
def cheb2():
    return GridLayout(DomainBox((0.0,), (2.0,)), (2,), NodeFamily(NodeKind.LOBATTO_CHEBYSHEV, 2))


def test_node_coordinate_examples(cheb2):
    assert node_coordinate(cheb2, [0], [1])[0] == 0.5
    assert node_coordinate(cheb2, [0], [2])[0] == 1.0
    assert node_coordinate(cheb2, [1], [0])[0] == 1.0
    assert node_coordinate(cheb2, [1], [2])[0] == 2.0
    assert global_node_index(cheb2, 0, 2) == global_node_index(cheb2, 1, 0)


def test_node_coordinate_out_of_range(cheb2):
    with pytest.raises(IndexError):
        node_coordinate(cheb2, [2], [0])
    with pytest.raises(IndexError):
        node_coordinate(cheb2, [0], [3])


@pytest.mark.parametrize("kind", list(NodeKind))
def test_shared_faces_are_bitwise_equal(kind):
    lay = GridLayout(DomainBox((-np.pi,), (np.e,)), (7,), NodeFamily(kind, 3))
    for c in range(6):
        a = node_coordinate(lay, [c], [3])
        b = node_coordinate(lay, [c + 1], [0])
        assert a.tobytes() == b.tobytes()
    # and the global node axis agrees with both
    ax = lay.node_axes[0]
    assert np.all(np.diff(ax) > 0)
    assert ax[0] == -np.pi and ax[-1] == np.e


def test_sample_uses_node_mesh():
    lay = GridLayout(DomainBox((0.0, 0.0), (1.0, 2.0)), (2, 3), NodeFamily(NodeKind.LOBATTO_LEGENDRE, 2))
    vals = lay.sample(lambda x: x[..., 0] + 10 * x[..., 1])
    xs, ys = lay.node_mesh()
    np.testing.assert_array_equal(vals, xs + 10 * ys)
    pts = lay.node_points()
    np.testing.assert_array_equal(vals.ravel(), pts[:, 0] + 10 * pts[:, 1])
