"""Componentwise boundary-layer projection for adaptive parameter updates.

Keeps adapted parameters inside a hypercube by tapering the update
direction to zero across a thin layer at each face. The taper makes the
right-hand side continuous, so explicit integrators handle it; any
leftover per-step overshoot is clamped by callers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_NU_FRACTION = 0.05


class DimensionMismatch(ValueError):
    """Operands do not share the bounds' dimension."""


@dataclass(frozen=True)
class ProjectionBounds:
    """Hypercube [theta_min, theta_max] with boundary-layer width nu.

    The inner hypercube shrunk by nu on every face must be nonempty:
    theta_min_i + 2 nu < theta_max_i.
    """

    theta_min: np.ndarray
    theta_max: np.ndarray
    nu: float

    def __post_init__(self):
        tmin = np.atleast_1d(np.asarray(self.theta_min, dtype=float))
        tmax = np.atleast_1d(np.asarray(self.theta_max, dtype=float))
        object.__setattr__(self, "theta_min", tmin)
        object.__setattr__(self, "theta_max", tmax)
        if tmin.shape != tmax.shape:
            raise DimensionMismatch(f"bounds shapes differ: {tmin.shape} vs {tmax.shape}")
        if self.nu <= 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if np.any(tmin + 2.0 * self.nu >= tmax):
            raise ValueError("inner hypercube empty: need theta_min + 2 nu < theta_max")

    @property
    def dim(self) -> int:
        return self.theta_min.shape[0]

    @classmethod
    def symmetric(cls, magnitude: float, n: int, nu_fraction: float = DEFAULT_NU_FRACTION) -> "ProjectionBounds":
        """Hypercube [-magnitude, +magnitude]^n with nu a fraction of the width."""
        if magnitude <= 0:
            raise ValueError(f"magnitude must be positive, got {magnitude}")
        mag = float(magnitude)
        return cls(
            theta_min=np.full(n, -mag),
            theta_max=np.full(n, mag),
            nu=nu_fraction * 2.0 * mag,
        )

    def clamp(self, theta: np.ndarray) -> np.ndarray:
        """Pull a point back onto the hypercube (integration overshoot)."""
        return np.clip(theta, self.theta_min, self.theta_max)


def proj(theta, y, bounds: ProjectionBounds) -> np.ndarray:
    """Componentwise projection of update direction y at parameter theta.

    Near the top face with outward y the direction scales by
    (theta_max - theta)/nu; near the bottom face with outward y by
    (theta - theta_min)/nu; elsewhere y passes through. Output magnitude
    never exceeds |y| per component, and the map satisfies
    (theta - theta*)^T (proj(theta, y) - y) <= 0 for any theta* in the
    inner hypercube.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if theta.shape != y.shape or theta.shape[0] != bounds.dim:
        raise DimensionMismatch(
            f"theta {theta.shape}, y {y.shape}, bounds dim {bounds.dim} must agree"
        )
    # The formula is defined on the hypercube; entry clamping absorbs
    # numerical drift from explicit integration.
    th = np.clip(theta, bounds.theta_min, bounds.theta_max)
    upper = (th > bounds.theta_max - bounds.nu) & (y > 0)
    lower = (th < bounds.theta_min + bounds.nu) & (y < 0)
    out = y.copy()
    out[upper] = (bounds.theta_max[upper] - th[upper]) / bounds.nu * y[upper]
    out[lower] = (th[lower] - bounds.theta_min[lower]) / bounds.nu * y[lower]
    return out


def proj_matrix(theta_mat, y_mat, bounds: ProjectionBounds) -> np.ndarray:
    """Columnwise projection: column j of the result is proj(Theta[:, j], Y[:, j])."""
    theta_mat = np.asarray(theta_mat, dtype=float)
    y_mat = np.asarray(y_mat, dtype=float)
    if theta_mat.shape != y_mat.shape or theta_mat.shape[0] != bounds.dim:
        raise DimensionMismatch(
            f"Theta {theta_mat.shape}, Y {y_mat.shape}, bounds dim {bounds.dim} must agree"
        )
    out = np.empty_like(y_mat)
    for j in range(theta_mat.shape[1]):
        out[:, j] = proj(theta_mat[:, j], y_mat[:, j], bounds)
    return out
