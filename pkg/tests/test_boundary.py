import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semilag.boundary import (
    Method,
    MomentMatchError,
    match_moments_1d,
    resolve_feet,
    resolve_feet_batch,
)
from semilag.grid import DomainBox

UNIT = DomainBox((0.0,), (1.0,))
SQUARE = DomainBox((0.0, 0.0), (1.0, 1.0))


def _moments(center, res, col):
    """Per-column first and second moments about ``center`` along the column."""
    pts = res.points.reshape(-1, 2, center.size)
    w = res.weights.reshape(-1, 2) * len(res.methods)
    d = pts - center
    first = (w[..., None] * d).sum(axis=1)
    second = (w[..., None, None] * d[..., :, None] * d[..., None, :]).sum(axis=1)
    return first, second


# ---------------------------------------------------------------- match_moments_1d
@pytest.mark.parametrize(
    "s2h, up, expected",
    [(0.01, 0.05, (0.05, 0.2, 0.8, 0.2)), (0.04, 0.1, (0.1, 0.4, 0.8, 0.2)), (0.01, 0.1, (0.1, 0.1, 0.5, 0.5))],
)
def test_match_moments_examples(s2h, up, expected):
    out = match_moments_1d(s2h, up)
    np.testing.assert_allclose(out, expected, rtol=1e-14)
    dp, dm, pp, pm = out
    assert pp * dp - pm * dm == pytest.approx(0.0, abs=1e-16)
    assert pp * dp**2 + pm * dm**2 == pytest.approx(s2h, rel=1e-14)


@pytest.mark.parametrize("up", [0.0, -0.1])
def test_match_moments_center_on_boundary(up):
    with pytest.raises(MomentMatchError):
        match_moments_1d(0.01, up)


def test_match_moments_no_room_opposite():
    with pytest.raises(MomentMatchError):
        match_moments_1d(0.01, 0.05, available_down=0.1)


# ---------------------------------------------------------------- resolve_feet
def test_interior_feet_unmodified():
    res = resolve_feet([0.5], [[0.1]], UNIT)
    assert res.methods == (Method.UNMODIFIED,)
    np.testing.assert_allclose(res.points[:, 0], [0.6, 0.4])
    np.testing.assert_allclose(res.weights, [0.5, 0.5])


def test_near_upper_edge_moment_matched():
    # sigma^2 h = 0.01, room above is 0.05
    res = resolve_feet([0.95], [[0.1]], UNIT)
    assert res.method is Method.MOMENT_MATCHED
    np.testing.assert_allclose(res.points[:, 0], [1.0, 0.75], atol=1e-15)
    np.testing.assert_allclose(res.weights, [0.8, 0.2], rtol=1e-14)


def test_near_lower_edge_negative_column():
    res = resolve_feet([0.05], [[-0.1]], UNIT)
    assert res.method is Method.MOMENT_MATCHED
    # the "+" foot is the one that exits here
    np.testing.assert_allclose(res.points[:, 0], [0.0, 0.25], atol=1e-15)
    np.testing.assert_allclose(res.weights, [0.8, 0.2], rtol=1e-14)


def test_no_room_is_projected():
    res = resolve_feet([0.5], [[0.7]], UNIT)
    assert res.method is Method.PROJECTED
    np.testing.assert_allclose(res.points[:, 0], [1.0, 0.0])
    np.testing.assert_allclose(res.weights, [0.5, 0.5])


def test_center_on_boundary_is_projected():
    res = resolve_feet([1.0], [[0.1]], UNIT)
    assert res.method is Method.PROJECTED
    np.testing.assert_allclose(res.points[:, 0], [1.0, 0.9])


def test_corner_projected():
    res = resolve_feet([0.0, 0.0], [[-0.2, -0.2], [0.3, -0.1]], SQUARE)
    assert res.method is Method.PROJECTED
    assert np.all((res.points >= 0) & (res.points <= 1))


def test_several_columns_split_weights():
    res = resolve_feet([0.5, 0.5], [[0.1, 0.0], [0.0, 0.1], [0.05, 0.05]], SQUARE)
    assert res.points.shape == (6, 2)
    np.testing.assert_allclose(res.weights, 1 / 6)


@settings(max_examples=400, deadline=None)
@given(
    st.floats(0.0, 1.0),
    st.floats(0.0, 1.0),
    st.floats(-0.6, 0.6),
    st.floats(-0.6, 0.6),
    st.floats(-0.3, 0.3),
    st.floats(-0.3, 0.3),
)
def test_resolution_invariants(cx, cy, ax, ay, bx, by):
    center = np.array([cx, cy])
    cols = np.array([[ax, ay], [bx, by]])
    res = resolve_feet(center, cols, SQUARE)
    assert np.all(res.weights > 0)
    assert res.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all((res.points >= 0.0) & (res.points <= 1.0))
    first, second = _moments(center, res, cols)
    for k, m in enumerate(res.methods):
        if m is Method.PROJECTED:
            continue
        # zero mean and the unmodified covariance v v^T along each column
        np.testing.assert_allclose(first[k], 0.0, atol=1e-13)
        np.testing.assert_allclose(second[k], np.outer(cols[k], cols[k]), atol=1e-13)


def test_batch_agrees_with_single():
    rng = np.random.default_rng(0)
    centers = rng.random((50, 3, 2))
    cols = rng.normal(scale=0.2, size=(50, 3, 2, 2))
    pts, w, m = resolve_feet_batch(centers, cols, SQUARE)
    assert pts.shape == (50, 3, 4, 2) and w.shape == (50, 3, 4) and m.shape == (50, 3, 2)
    for i in range(50):
        for j in range(3):
            one = resolve_feet(centers[i, j], cols[i, j], SQUARE)
            np.testing.assert_array_equal(one.points, pts[i, j])
            np.testing.assert_array_equal(one.weights, w[i, j])
