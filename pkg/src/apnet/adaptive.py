"""Adaptive layer estimating and canceling information-exchange uncertainty.

Each agent sees only a corrupted copy of its state. Corrective signals v/w
rebuilt from the uncertainty estimates enter the controller and integral
action; a projection-bounded estimator adapts those estimates from the
innovation of a state observer. A constant-uncertainty variant drops the
projection and converges exactly.

Per-agent functions below are the reference implementations mirrored by
the vectorized kernels.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .graph import Graph
from .network import ActivationMatrices, NetworkParams, NetworkState
from .projection import DEFAULT_NU_FRACTION, ProjectionBounds, proj


@dataclass(frozen=True)
class AdaptiveParams:
    """Estimator gains: adaptation rate, observer gain, projection bound.

    constant_mode selects the unprojected update law used when the
    uncertainties are known to be time-invariant.
    """

    gamma_rate: float
    mu: float
    delta_hat_max: float
    nu_fraction: float = DEFAULT_NU_FRACTION
    constant_mode: bool = False

    def __post_init__(self):
        for name in ("gamma_rate", "mu", "delta_hat_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0 < self.nu_fraction < 0.5):
            raise ValueError("nu_fraction must lie in (0, 0.5)")

    def bounds(self, n: int) -> ProjectionBounds:
        return ProjectionBounds.symmetric(self.delta_hat_max, n, self.nu_fraction)


@dataclass
class AdaptiveState:
    """Estimator states: uncertainty estimates, state estimates, integral estimates."""

    delta_hat: np.ndarray
    x_hat: np.ndarray
    p_hat: np.ndarray

    @classmethod
    def initial(cls, x_measured, delta_hat0=None) -> "AdaptiveState":
        """Start the observer at the only information available: the measurement."""
        x_measured = np.asarray(x_measured, dtype=float).copy()
        n = x_measured.shape[0]
        dh = np.zeros(n) if delta_hat0 is None else np.asarray(delta_hat0, dtype=float).copy()
        return cls(delta_hat=dh, x_hat=x_measured, p_hat=np.zeros(n))

    def innovation(self, x_tilde: np.ndarray) -> np.ndarray:
        """e_x = x_tilde - x_hat - delta_hat."""
        return x_tilde - self.x_hat - self.delta_hat


@dataclass(frozen=True)
class UncertaintyModel:
    """Per-agent additive corruption trajectories with declared bounds.

    delta_fn(t) returns the length-N corruption vector. magnitude_bounds and
    rate_bounds declare per-agent ceilings on |Delta_i| and |dDelta_i/dt|;
    assumption_check spot-verifies them by sampling.
    """

    kind: str
    delta_fn: Callable[[float], np.ndarray]
    magnitude_bounds: np.ndarray
    rate_bounds: np.ndarray

    @property
    def node_count(self) -> int:
        return self.magnitude_bounds.shape[0]

    def magnitude_norm(self) -> float:
        """Euclidean bound on the stacked corruption vector."""
        return float(np.linalg.norm(self.magnitude_bounds))

    def rate_norm(self) -> float:
        return float(np.linalg.norm(self.rate_bounds))

    def assumption_check(self, horizon: float, samples: int = 500) -> bool:
        ts = np.linspace(0.0, horizon, samples)
        h = max(horizon / samples / 100.0, 1e-7)
        tol = 1e-9
        for t in ts:
            d = self.delta_fn(float(t))
            if np.any(np.abs(d) > self.magnitude_bounds + tol):
                return False
            rate = (self.delta_fn(float(t) + h) - d) / h
            if np.any(np.abs(rate) > self.rate_bounds * (1 + 1e-6) + tol):
                return False
        return True

    @classmethod
    def zero(cls, n: int) -> "UncertaintyModel":
        z = np.zeros(n)
        return cls("constant", lambda t: z, z.copy(), z.copy())

    @classmethod
    def constant(cls, values) -> "UncertaintyModel":
        vals = np.asarray(values, dtype=float).copy()
        return cls("constant", lambda t: vals, np.abs(vals), np.zeros_like(vals))

    @classmethod
    def sinusoidal(cls, amplitudes, omegas, phases) -> "UncertaintyModel":
        amp = np.asarray(amplitudes, dtype=float).copy()
        omg = np.asarray(omegas, dtype=float).copy()
        phs = np.asarray(phases, dtype=float).copy()
        return cls(
            "sinusoidal",
            lambda t: amp * np.sin(omg * t + phs),
            np.abs(amp),
            np.abs(amp) * np.abs(omg),
        )

    @classmethod
    def piecewise_smoothed(cls, levels: np.ndarray, period: float, transition: float) -> "UncertaintyModel":
        """Hold each level for `period`, blending between levels with a C1 smoothstep.

        levels has shape (segments, N). Raw random steps would violate the
        bounded-derivative assumption; the smoothstep keeps it.
        """
        levels = np.asarray(levels, dtype=float)
        if transition <= 0 or transition > period:
            raise ValueError("need 0 < transition <= period")
        seg, _ = levels.shape

        def delta_fn(t: float) -> np.ndarray:
            k = min(int(t // period), seg - 1)
            frac = t - k * period
            if k >= seg - 1 or frac < period - transition:
                return levels[k].copy()
            u = (frac - (period - transition)) / transition
            s = u * u * (3.0 - 2.0 * u)
            return (1.0 - s) * levels[k] + s * levels[k + 1]

        steps = np.abs(np.diff(levels, axis=0))
        max_step = steps.max(axis=0) if seg > 1 else np.zeros(levels.shape[1])
        # smoothstep peak slope is 1.5/transition
        return cls(
            "piecewise",
            delta_fn,
            np.abs(levels).max(axis=0),
            1.5 * max_step / transition,
        )


def corrupt_measurement(x_i: float, delta_i: float) -> float:
    """x_tilde = x + Delta."""
    return x_i + delta_i


def corrective_v(
    i: int,
    delta_hat: np.ndarray,
    g: Graph,
    act: ActivationMatrices,
    params: NetworkParams,
) -> float:
    """Control-side corrective signal rebuilt from the uncertainty estimates.

    v_i = k0 dh_i + alpha [sum_j (dh_i - dh_j) + beta_i dh_i]
          + alpha sum_h k_ih dh_i

    Mirrors every corruption path in the control law, including the sensing
    term, so a perfect estimate cancels the corruption exactly.
    """
    nbrs = g.neighbors(i)
    disagreement = float(np.sum(delta_hat[i] - delta_hat[nbrs]))
    return (
        params.k0 * delta_hat[i]
        + params.alpha * (disagreement + params.beta[i] * delta_hat[i])
        + params.alpha * act.k1[i] * delta_hat[i]
    )


def corrective_w(i: int, delta_hat: np.ndarray, g: Graph, gamma: float) -> float:
    """Integral-side corrective signal: w_i = gamma sum_j (dh_i - dh_j).

    Vectorized this is gamma L dh, so the corrective signals sum to zero.
    """
    nbrs = g.neighbors(i)
    return gamma * float(np.sum(delta_hat[i] - delta_hat[nbrs]))


def adaptive_control(
    i: int,
    x_tilde: np.ndarray,
    adaptive: AdaptiveState,
    net: NetworkState,
    g: Graph,
    act: ActivationMatrices,
    c: np.ndarray,
    params: NetworkParams,
) -> float:
    """Nominal control law evaluated on the corrupted measurements, plus v_i.

    With a perfect estimate the corruption terms cancel and this equals the
    nominal control on the true state.
    """
    nbrs = g.neighbors(i)
    disagreement = float(np.sum(x_tilde[i] - x_tilde[nbrs]))
    sensed = float(act.k1[i] * x_tilde[i] - act.K2[i] @ c)
    return (
        -params.k0 * x_tilde[i]
        - params.alpha * (disagreement + params.beta[i] * x_tilde[i])
        + net.p[i]
        - params.alpha * sensed
        + corrective_v(i, adaptive.delta_hat, g, act, params)
    )


def adaptive_integral_rate(
    i: int,
    x_tilde: np.ndarray,
    adaptive: AdaptiveState,
    net: NetworkState,
    g: Graph,
    params: NetworkParams,
) -> float:
    """dp_i/dt = -gamma [sum_j (xt_i - xt_j) + sigma p_i] + w_i."""
    nbrs = g.neighbors(i)
    disagreement = float(np.sum(x_tilde[i] - x_tilde[nbrs]))
    return -params.gamma * (disagreement + params.sigma * net.p[i]) + corrective_w(
        i, adaptive.delta_hat, g, params.gamma
    )


def uncertainty_update_rate(
    i: int,
    e_x_i: float,
    delta_hat_i: float,
    params: AdaptiveParams,
    a: float,
    bounds: ProjectionBounds,
) -> float:
    """Estimate update: Gamma Proj(dh_i, -a e_x_i), or -Gamma a e_x_i unprojected
    in constant mode."""
    if params.constant_mode:
        return -params.gamma_rate * a * e_x_i
    y = proj(
        np.array([delta_hat_i]),
        np.array([-a * e_x_i]),
        ProjectionBounds(bounds.theta_min[i : i + 1], bounds.theta_max[i : i + 1], bounds.nu),
    )
    return params.gamma_rate * float(y[0])


def state_estimate_rate(
    i: int,
    x_tilde: np.ndarray,
    adaptive: AdaptiveState,
    g: Graph,
    act: ActivationMatrices,
    c: np.ndarray,
    net_params: NetworkParams,
    ad_params: AdaptiveParams,
) -> float:
    """Observer dynamics for x_hat_i; the innovation gain is Gamma a + mu.

    dxh_i = a0 xh_i - alpha [sum_j (xh_i - xh_j) + beta_i xh_i] + ph_i
            - alpha sum_h k_ih (xh_i - c_h) + (Gamma a + mu) e_x_i
    """
    xh = adaptive.x_hat
    nbrs = g.neighbors(i)
    disagreement = float(np.sum(xh[i] - xh[nbrs]))
    sensed = float(act.k1[i] * xh[i] - act.K2[i] @ c)
    e_x_i = x_tilde[i] - xh[i] - adaptive.delta_hat[i]
    return (
        net_params.a0 * xh[i]
        - net_params.alpha * (disagreement + net_params.beta[i] * xh[i])
        + adaptive.p_hat[i]
        - net_params.alpha * sensed
        + (ad_params.gamma_rate * net_params.a + ad_params.mu) * e_x_i
    )


def integral_estimate_rate(
    i: int,
    adaptive: AdaptiveState,
    g: Graph,
    params: NetworkParams,
) -> float:
    """dph_i = -gamma [sum_j (xh_i - xh_j) + sigma ph_i].

    Copies the true integral action's structure on the observer states, so
    p_hat stays the incidence image of the edge filter it estimates.
    """
    xh = adaptive.x_hat
    nbrs = g.neighbors(i)
    return -params.gamma * (
        float(np.sum(xh[i] - xh[nbrs])) + params.sigma * adaptive.p_hat[i]
    )
