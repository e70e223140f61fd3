"""Nominal active-passive multiagent network.

Scalar integrator agents on a connected graph run a distributed controller
with leaky integral action. Agents near an exogenous input sense it through
a smooth radial kernel and become active; the rest stay passive. All agents
track the kernel-weighted average of the applied inputs.

Per-agent operations here are the reference implementations; the simulation
engine advances the equivalent vectorized form through the kernels package
and is cross-checked against these in the tests.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .graph import Graph


class NoActiveAgents(RuntimeError):
    """Input average is undefined while no agent senses any input."""


# 1^T K2 1 below this counts as "no active agent"; kernel weights are
# exactly zero beyond the sensing radius so real activity clears it easily.
_ACTIVITY_EPS = 1e-12


@dataclass(frozen=True)
class NetworkParams:
    """Design parameters of the distributed controller.

    a is the open-loop pole (a != 0); k0 shifts it so a0 = a - k0 <= 0.
    alpha couples neighbors, gamma/sigma shape the leaky integral action,
    beta grounds at least one agent, and sensing_radius bounds input
    visibility.
    """

    a: float
    k0: float
    alpha: float
    gamma: float
    sigma: float
    beta: np.ndarray
    sensing_radius: float

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        if self.a == 0:
            raise ValueError("a must be nonzero")
        if self.a - self.k0 > 0:
            raise ValueError(f"need a - k0 <= 0, got a0 = {self.a - self.k0}")
        for name in ("alpha", "gamma", "sigma", "sensing_radius"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if np.any(self.beta < 0) or not np.any(self.beta > 0):
            raise ValueError("beta must be nonnegative with at least one positive entry")

    @property
    def a0(self) -> float:
        return self.a - self.k0

    @property
    def node_count(self) -> int:
        return self.beta.shape[0]


@dataclass(frozen=True)
class ExogenousInput:
    """One external signal: a moving source position and a scalar value.

    value_bound / rate_bound declare |c(t)| and |dc/dt| ceilings used by the
    ultimate-bound monitors; they are spot-checked by sampling.
    """

    index: int
    position_fn: Callable[[float], np.ndarray]
    value_fn: Callable[[float], float]
    value_bound: float
    rate_bound: float

    @classmethod
    def static(cls, index: int, position, value: float) -> "ExogenousInput":
        pos = np.asarray(position, dtype=float)
        return cls(
            index=index,
            position_fn=lambda t: pos,
            value_fn=lambda t: float(value),
            value_bound=abs(float(value)),
            rate_bound=0.0,
        )


@dataclass
class NetworkState:
    """True agent states x and integral actions p at time t; p(0) = 0."""

    x: np.ndarray
    p: np.ndarray
    t: float = 0.0

    @classmethod
    def initial(cls, x0) -> "NetworkState":
        x0 = np.asarray(x0, dtype=float).copy()
        return cls(x=x0, p=np.zeros_like(x0), t=0.0)


@dataclass(frozen=True)
class ActivationMatrices:
    """Sensing weights: K2[i, h] is agent i's kernel weight on input h.

    K2 is zero-padded to N columns; k1 holds its row sums, so agent i is
    active exactly when k1[i] > 0.
    """

    k1: np.ndarray
    K2: np.ndarray

    @property
    def K1(self) -> np.ndarray:
        return np.diag(self.k1)

    @property
    def active(self) -> np.ndarray:
        return self.k1 > 0.0


def sensing_kernel(distance: float, sensing_radius: float) -> float:
    """Cosine taper from 1 at the agent to 0 at the sensing radius.

    C1-smooth and monotone nonincreasing on [0, R_s], identically zero
    beyond.
    """
    if distance >= sensing_radius:
        return 0.0
    return 0.5 * (1.0 + np.cos(np.pi * distance / sensing_radius))


def sensing_kernel_vec(distances: np.ndarray, sensing_radius: float) -> np.ndarray:
    d = np.asarray(distances, dtype=float)
    inside = d < sensing_radius
    out = np.zeros_like(d)
    out[inside] = 0.5 * (1.0 + np.cos(np.pi * d[inside] / sensing_radius))
    return out


def activation_matrices(agent_positions, input_positions, sensing_radius: float) -> ActivationMatrices:
    """Kernel weights of every agent on every input, zero-padded to N columns."""
    agents = np.asarray(agent_positions, dtype=float)
    n = agents.shape[0]
    k2 = np.zeros((n, n))
    inputs = np.asarray(input_positions, dtype=float).reshape(-1, 2)
    m = inputs.shape[0]
    if m > 0:
        dists = np.linalg.norm(agents[:, None, :] - inputs[None, :, :], axis=2)
        k2[:, :m] = sensing_kernel_vec(dists, sensing_radius)
    return ActivationMatrices(k1=k2.sum(axis=1), K2=k2)


def input_average(K2: np.ndarray, c: np.ndarray) -> float:
    """Kernel-weighted average of applied inputs: (1^T K2 c) / (1^T K2 1)."""
    denom = float(K2.sum())
    if denom <= _ACTIVITY_EPS:
        raise NoActiveAgents("no agent currently senses any input")
    return float(np.ones(K2.shape[0]) @ K2 @ c) / denom


def nominal_control(
    i: int,
    state: NetworkState,
    g: Graph,
    act: ActivationMatrices,
    c: np.ndarray,
    params: NetworkParams,
) -> float:
    """Distributed control of agent i from its own and neighbor states.

    u_i = -k0 x_i - alpha [sum_j (x_i - x_j) + beta_i x_i] + p_i
          - alpha sum_h k_ih (x_i - c_h)
    """
    x = state.x
    nbrs = g.neighbors(i)
    disagreement = float(np.sum(x[i] - x[nbrs]))
    sensed = float(act.k1[i] * x[i] - act.K2[i] @ c)
    return (
        -params.k0 * x[i]
        - params.alpha * (disagreement + params.beta[i] * x[i])
        + state.p[i]
        - params.alpha * sensed
    )


def integral_rate(i: int, state: NetworkState, g: Graph, params: NetworkParams) -> float:
    """dp_i/dt = -gamma [sum_j (x_i - x_j) + sigma p_i]."""
    x = state.x
    nbrs = g.neighbors(i)
    disagreement = float(np.sum(x[i] - x[nbrs]))
    return -params.gamma * (disagreement + params.sigma * state.p[i])


def consensus_error(x: np.ndarray, epsilon: float) -> np.ndarray:
    """delta = x - epsilon 1."""
    return np.asarray(x, dtype=float) - float(epsilon)


def nominal_rhs(
    x: np.ndarray,
    p: np.ndarray,
    g: Graph,
    act: ActivationMatrices,
    c: np.ndarray,
    params: NetworkParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized closed-loop dynamics; must match the per-agent forms exactly.

    dx = a0 x - alpha L x - alpha beta x + p - alpha K1 x + alpha K2 c
    dp = -gamma L x - gamma sigma p
    """
    lx = g.laplacian @ x
    dx = (
        params.a0 * x
        - params.alpha * lx
        - params.alpha * params.beta * x
        + p
        - params.alpha * act.k1 * x
        + params.alpha * (act.K2 @ c)
    )
    dp = -params.gamma * lx - params.gamma * params.sigma * p
    return dx, dp


def pad_input_values(values: np.ndarray, n: int) -> np.ndarray:
    """Zero-pad the m input values to the length-N vector the compact form uses."""
    values = np.atleast_1d(np.asarray(values, dtype=float))
    out = np.zeros(n)
    out[: values.shape[0]] = values
    return out
