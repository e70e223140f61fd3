import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apnet.projection import DimensionMismatch, ProjectionBounds, proj, proj_matrix


def bounds3(nu=0.1):
    return ProjectionBounds(theta_min=-np.ones(3), theta_max=np.ones(3), nu=nu)


def test_interior_passthrough():
    b = bounds3()
    theta = np.array([0.0, 0.5, -0.5])
    y = np.array([3.0, -2.0, 7.0])
    assert np.array_equal(proj(theta, y, b), y)


def test_saturated_component_zeroed():
    b = bounds3()
    theta = np.array([1.0, 0.0, 0.0])
    y = np.array([3.0, 1.0, 1.0])
    out = proj(theta, y, b)
    assert out[0] == 0.0
    assert np.array_equal(out[1:], y[1:])


def test_half_layer_scaling():
    # theta at theta_max - nu/2 with y = 2 gives ((nu/2)/nu) * 2 = 1
    b = bounds3(nu=0.2)
    theta = np.array([1.0 - 0.1, 0.0, 0.0])
    out = proj(theta, np.array([2.0, 0.0, 0.0]), b)
    assert abs(out[0] - 1.0) < 1e-15


def test_inward_direction_untouched_at_boundary():
    b = bounds3()
    theta = np.array([1.0, -1.0, 0.0])
    y = np.array([-4.0, 5.0, 1.0])
    assert np.array_equal(proj(theta, y, b), y)


def test_magnitude_never_grows():
    rng = np.random.default_rng(7)
    b = bounds3()
    for _ in range(200):
        theta = rng.uniform(-1, 1, 3)
        y = rng.normal(size=3)
        out = proj(theta, y, b)
        assert np.all(np.abs(out) <= np.abs(y) + 1e-15)


def test_dimension_mismatch():
    b = bounds3()
    with pytest.raises(DimensionMismatch):
        proj(np.zeros(2), np.zeros(2), b)


def test_inner_hypercube_must_be_nonempty():
    with pytest.raises(ValueError):
        ProjectionBounds(theta_min=-np.ones(2), theta_max=np.ones(2), nu=1.0)


def test_symmetric_constructor():
    b = ProjectionBounds.symmetric(5.0, 4, nu_fraction=0.05)
    assert np.array_equal(b.theta_min, -5.0 * np.ones(4))
    assert np.array_equal(b.theta_max, 5.0 * np.ones(4))
    assert b.nu == pytest.approx(0.5)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_projection_inequality(seed):
    # (theta - theta*)^T (proj(theta, y) - y) <= 0 for theta* in the inner cube
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 8))
    b = ProjectionBounds.symmetric(float(rng.uniform(0.5, 5.0)), n)
    theta = rng.uniform(b.theta_min, b.theta_max)
    theta_star = rng.uniform(b.theta_min + b.nu, b.theta_max - b.nu)
    y = rng.normal(scale=3.0, size=n)
    lhs = (theta - theta_star) @ (proj(theta, y, b) - y)
    assert lhs <= 1e-12


def test_forward_invariance_under_integration():
    # integrate theta' = proj(theta, y(t)) with bounded piecewise-constant y
    rng = np.random.default_rng(42)
    b = ProjectionBounds.symmetric(1.0, 4, nu_fraction=0.05)
    theta = rng.uniform(-0.9, 0.9, size=4)
    dt = 1e-3
    for k in range(10_000):
        if k % 250 == 0:
            y = rng.normal(scale=20.0, size=4)
        theta = theta + dt * proj(theta, y, b)
        outside = np.maximum(theta - b.theta_max, b.theta_min - theta)
        assert outside.max() < 1e-6
        theta = b.clamp(theta)


def test_continuity_at_layer_edges():
    b = bounds3(nu=0.1)
    y = np.array([2.0, 0.0, 0.0])
    edge = 1.0 - 0.1
    eps = 1e-9
    below = proj(np.array([edge - eps, 0, 0]), y, b)[0]
    above = proj(np.array([edge + eps, 0, 0]), y, b)[0]
    assert abs(below - above) < 1e-6


def test_matrix_form_matches_columnwise():
    rng = np.random.default_rng(3)
    b = bounds3()
    theta_mat = rng.uniform(-1, 1, size=(3, 5))
    y_mat = rng.normal(size=(3, 5))
    out = proj_matrix(theta_mat, y_mat, b)
    for j in range(5):
        assert np.array_equal(out[:, j], proj(theta_mat[:, j], y_mat[:, j], b))


def test_matrix_saturated_column():
    b = bounds3()
    theta_mat = np.column_stack([np.ones(3), np.zeros(3)])
    y_mat = np.ones((3, 2))
    out = proj_matrix(theta_mat, y_mat, b)
    assert np.array_equal(out[:, 0], np.zeros(3))
    assert np.array_equal(out[:, 1], np.ones(3))
