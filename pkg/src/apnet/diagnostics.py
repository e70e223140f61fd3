"""Ultimate-bound evaluation and Lyapunov monitoring for recorded runs.

The consensus-error bound combines declared input-model ceilings with two
trace-measured forcing maxima; the estimation-error bounds come from the
closed-form constants of the adaptive analysis. Both are checked against
post-transient trace maxima, with the transient cutoff defined as the
first time the Lyapunov value enters its bound-implied level set and stays
for a full second.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adaptive import AdaptiveParams, UncertaintyModel
from .graph import Graph
from .network import NetworkParams


class InvalidSpectrum(ValueError):
    """A matrix the analysis requires to be positive definite is not."""


def regularized_matrix(params: NetworkParams, g: Graph) -> np.ndarray:
    """F = L + diag(beta); positive definite for valid beta."""
    return g.laplacian + np.diag(params.beta)


def stability_matrix(params: NetworkParams, g: Graph) -> np.ndarray:
    """H = alpha F - a0 I; positive definite when a0 <= 0 and beta is valid."""
    return params.alpha * regularized_matrix(params, g) - params.a0 * np.eye(g.node_count)


def theorem1_bound(
    params: NetworkParams,
    g: Graph,
    eps_bar: float,
    c_d_bar: float,
    p1_bar: float,
    p2_bar: float,
) -> float:
    """Ultimate bound on ||delta||^2 for the nominal loop.

    [eps_bar ||beta|| (alpha^2 ||beta|| + 2 N alpha c_d_bar) + N^2 c_d_bar^2
     + |a0| N eps_bar] / (alpha^2 lambda_min(F)^2)
    + (alpha^2 / (gamma^3 sigma^2)) (gamma sigma p1_bar + p2_bar)^2
    """
    f_mat = regularized_matrix(params, g)
    lam = float(np.linalg.eigvalsh(f_mat)[0])
    if lam <= 0:
        raise InvalidSpectrum("lambda_min(L + diag(beta)) <= 0; beta violates its contract")
    n = g.node_count
    beta_norm = float(np.max(np.abs(params.beta)))
    alpha, gamma, sigma = params.alpha, params.gamma, params.sigma
    first = (
        eps_bar * beta_norm * (alpha**2 * beta_norm + 2.0 * n * alpha * c_d_bar)
        + n**2 * c_d_bar**2
        + abs(params.a0) * n * eps_bar
    ) / (alpha**2 * lam**2)
    second = (alpha**2 / (gamma**3 * sigma**2)) * (gamma * sigma * p1_bar + p2_bar) ** 2
    return first + second


@dataclass(frozen=True)
class Theorem2Constants:
    gamma0: float
    gamma1: float
    alpha0: float
    alpha1: float
    alpha2: float
    eta1: float
    eta2: float


@dataclass
class BoundReport:
    """Bound values, observed post-transient maxima, and verdicts."""

    bounds: dict
    observed: dict = field(default_factory=dict)
    satisfied: dict = field(default_factory=dict)
    constants: Theorem2Constants | None = None
    transient_cutoff: float = 0.0

    def all_satisfied(self) -> bool:
        return all(self.satisfied.values())


def theorem2_constants(
    adaptive: AdaptiveParams,
    network: NetworkParams,
    g: Graph,
    delta_bar: float,
    delta_d_bar: float,
) -> Theorem2Constants:
    h_mu = stability_matrix(network, g) + adaptive.mu * np.eye(g.node_count)
    alpha1 = float(np.linalg.eigvalsh(h_mu)[0])
    if alpha1 <= 0:
        raise InvalidSpectrum("lambda_min(H + mu I) <= 0; estimator analysis needs it positive")
    gamma = network.gamma
    gamma0 = 0.5 * min(1.0, 1.0 / gamma)
    gamma1 = 0.5 * max(1.0, 1.0 / gamma)
    alpha0 = min(alpha1, network.sigma)
    alpha2 = delta_d_bar
    eta2 = delta_bar + adaptive.delta_hat_max
    inv_rate = 1.0 / adaptive.gamma_rate
    eta1 = alpha2 / (2.0 * alpha0) + np.sqrt(
        alpha2**2 / (4.0 * alpha0**2) + 2.0 * inv_rate * alpha2 * eta2 / alpha0
    )
    return Theorem2Constants(gamma0, gamma1, alpha0, alpha1, alpha2, float(eta1), eta2)


def theorem2_bounds(
    adaptive: AdaptiveParams,
    network: NetworkParams,
    g: Graph,
    delta_bar: float,
    delta_d_bar: float,
) -> tuple[dict, Theorem2Constants]:
    """Ultimate bounds on ||e_x||, ||e_z||, ||delta_tilde||."""
    k = theorem2_constants(adaptive, network, g, delta_bar, delta_d_bar)
    inv_rate = 1.0 / adaptive.gamma_rate
    es_bound = float(np.sqrt(k.gamma1 / k.gamma0 * k.eta1**2 + inv_rate / k.gamma0 * k.eta2**2))
    dt_bound = float(np.sqrt(k.gamma1 * adaptive.gamma_rate * k.eta1**2 + k.eta2**2))
    return {"e_x": es_bound, "e_z": es_bound, "delta_tilde": dt_bound}, k


def lyapunov_level(constants: Theorem2Constants, adaptive: AdaptiveParams) -> float:
    """Lyapunov value on the boundary of the ultimate-bound set."""
    return constants.gamma1 * constants.eta1**2 + (1.0 / adaptive.gamma_rate) * constants.eta2**2


def lyapunov_series(trace, channel: int) -> tuple[np.ndarray, np.ndarray]:
    """Recorded Lyapunov values and their central-difference derivative."""
    v = np.asarray(trace["lyapunov"])[:, channel]
    t = np.asarray(trace["t"])
    vdot = np.gradient(v, t)
    return v, vdot


def transient_cutoff_time(
    t: np.ndarray, v: np.ndarray, level: float, hold: float = 1.0
) -> float:
    """First time v enters the level set and stays for `hold` seconds.

    Falls back to the final time minus hold if the level is never held.
    """
    below = v <= level
    if t.shape[0] < 2:
        return float(t[0]) if t.shape[0] else 0.0
    dt = t[1] - t[0]
    need = max(1, int(round(hold / dt)))
    run = 0
    for k, ok in enumerate(below):
        run = run + 1 if ok else 0
        if run >= need:
            return float(t[k - need + 1])
    return float(max(t[-1] - hold, t[0]))


def norms_over_time(trace, key: str, channel: int) -> np.ndarray:
    arr = np.asarray(trace[key])  # (T, N, C)
    return np.linalg.norm(arr[:, :, channel], axis=1)


def check_theorem2(
    trace,
    channel: int,
    adaptive: AdaptiveParams,
    network: NetworkParams,
    g: Graph,
    uncertainty: UncertaintyModel,
    hold: float = 1.0,
) -> BoundReport:
    """Compare post-transient trace maxima against the estimation bounds."""
    bounds, constants = theorem2_bounds(
        adaptive, network, g, uncertainty.magnitude_norm(), uncertainty.rate_norm()
    )
    t = np.asarray(trace["t"])
    v, _ = lyapunov_series(trace, channel)
    level = lyapunov_level(constants, adaptive)
    cutoff = transient_cutoff_time(t, v, level, hold)
    tail = t >= cutoff
    report = BoundReport(bounds=bounds, constants=constants, transient_cutoff=cutoff)
    for key in ("e_x", "e_z", "delta_tilde"):
        observed = float(norms_over_time(trace, key, channel)[tail].max())
        report.observed[key] = observed
        report.satisfied[key] = observed <= bounds[key]
    return report


def check_theorem1(
    trace,
    channel: int,
    network: NetworkParams,
    g: Graph,
    eps_bar: float,
    c_d_bar: float,
    hold: float = 1.0,
) -> BoundReport:
    """Compare post-transient ||delta||^2 against the consensus bound.

    The forcing maxima p1/p2 are running maxima measured from the trace,
    since they depend on the time-varying activation pattern.
    """
    t = np.asarray(trace["t"])
    kcc = np.asarray(trace["kcc"])[:, :, channel]  # (T, M)
    p1 = float(np.linalg.norm(kcc, axis=1).max())
    if t.shape[0] >= 3:
        dkcc = np.gradient(kcc, t, axis=0)
        p2 = float(np.linalg.norm(dkcc, axis=1).max())
    else:
        p2 = 0.0
    bound = theorem1_bound(network, g, eps_bar, c_d_bar, p1, p2)

    delta = np.asarray(trace["delta"])[:, :, channel]
    dnorm2 = np.einsum("tn,tn->t", delta, delta)
    finite = np.isfinite(dnorm2)
    # transient: first entry into the bound set held for `hold` seconds
    cutoff = transient_cutoff_time(t[finite], dnorm2[finite], bound, hold)
    tail = (t >= cutoff) & finite
    observed = float(dnorm2[tail].max()) if tail.any() else float("inf")
    report = BoundReport(
        bounds={"delta_sq": bound, "p1": p1, "p2": p2},
        observed={"delta_sq": observed},
        satisfied={"delta_sq": observed <= bound},
        transient_cutoff=cutoff,
    )
    return report


def vdot_negative_fraction_outside(
    trace, channel: int, constants: Theorem2Constants
) -> tuple[float, int]:
    """Fraction of sampled instants outside the proof's compact set with
    decreasing Lyapunov value, and how many such instants exist.

    Outside means ||(e_x, e_z)|| > eta1 or ||delta_tilde|| > eta2.
    """
    ex = norms_over_time(trace, "e_x", channel)
    ez = norms_over_time(trace, "e_z", channel)
    dtil = norms_over_time(trace, "delta_tilde", channel)
    es = np.sqrt(ex**2 + ez**2)
    _, vdot = lyapunov_series(trace, channel)
    outside = (es > constants.eta1) | (dtil > constants.eta2)
    # central differences at the ends are one-sided; skip boundary samples
    outside[0] = outside[-1] = False
    count = int(outside.sum())
    if count == 0:
        return 1.0, 0
    return float((vdot[outside] < 0).mean()), count
