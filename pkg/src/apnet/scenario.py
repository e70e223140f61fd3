"""Scenario files: everything a reproducible run needs, in one JSON document.

A scenario names the graph, the per-channel controller/estimator gains and
uncertainty models, the domain and coverage parameters, the target motion
(scripted waypoints, an external feed, or a replayed command log), step
sizes, duration, and the RNG seed. Identical scenario + seed must
reproduce a run bit for bit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adaptive import AdaptiveParams
from .coverage import CoverageParams, Domain2D
from .network import NetworkParams
from .trajectory import Waypoint, WaypointTrack


class InvalidConfig(ValueError):
    """Scenario document fails validation."""


TARGET_INPUT_KINDS = ("target_x", "target_y", "target_speed")


@dataclass(frozen=True)
class StaticInputSpec:
    """Fixed-position inputs with constant or sinusoidal values."""

    positions: np.ndarray  # (m, 2)
    offsets: np.ndarray    # (m,)
    amplitudes: np.ndarray
    omegas: np.ndarray
    phases: np.ndarray

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    def values(self, times: np.ndarray) -> np.ndarray:
        """Input values at the given times, shape (T, m)."""
        t = np.asarray(times, dtype=float)[:, None]
        return self.offsets + self.amplitudes * np.sin(self.omegas * t + self.phases)

    def value_bound(self) -> float:
        return float(np.linalg.norm(np.abs(self.offsets) + np.abs(self.amplitudes)))

    def rate_bound(self) -> float:
        return float(np.linalg.norm(np.abs(self.amplitudes * self.omegas)))


@dataclass(frozen=True)
class UncertaintySpec:
    kind: str  # "none" | "constant" | "sinusoidal" | "piecewise"
    bounds: tuple[float, float] = (0.0, 0.0)
    seed: int = 0
    omega: tuple[float, float] = (0.5, 0.5)
    period: float = 10.0
    transition: float = 1.0
    segments: int = 8


@dataclass(frozen=True)
class ChannelConfig:
    name: str
    input_kind: str  # one of TARGET_INPUT_KINDS or "static"
    network: NetworkParams
    adaptive: AdaptiveParams | None = None
    uncertainty: UncertaintySpec = UncertaintySpec("none")
    static_input: StaticInputSpec | None = None

    def __post_init__(self):
        if self.input_kind not in TARGET_INPUT_KINDS + ("static",):
            raise InvalidConfig(f"unknown input kind {self.input_kind!r}")
        if self.input_kind == "static" and self.static_input is None:
            raise InvalidConfig(f"channel {self.name}: static input needs positions/values")
        if self.adaptive is None and self.uncertainty.kind != "none":
            raise InvalidConfig(
                f"channel {self.name}: uncertainty without the adaptive layer is not supported"
            )


@dataclass(frozen=True)
class TargetConfig:
    mode: str  # "waypoints" | "external" | "replay" | "none"
    start: np.ndarray | None = None
    waypoints: tuple[Waypoint, ...] = ()
    v_max: float = 5.0
    commands: tuple[tuple[int, float, float, int], ...] = ()

    def build_track(self) -> WaypointTrack | None:
        if self.mode == "waypoints":
            return WaypointTrack(list(self.waypoints))
        return None


@dataclass(frozen=True)
class InitConfig:
    x0: float | np.ndarray = 0.0
    x_hat_offset: float | np.ndarray = 0.0
    delta_hat0: float | np.ndarray = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    seed: int
    dt: float
    duration: float
    graph_nodes: int
    graph_edges: tuple[tuple[int, int], ...]
    channels: tuple[ChannelConfig, ...]
    agent_positions: np.ndarray | None = None
    domain: Domain2D | None = None
    target: TargetConfig = TargetConfig("none")
    coverage: CoverageParams | None = None
    coverage_dt: float = 0.05
    record_stride: int = 1
    init: InitConfig = field(default_factory=InitConfig)
    validate_stages: bool = False

    def __post_init__(self):
        if self.dt <= 0:
            raise InvalidConfig("dt must be positive")
        if self.duration < self.dt:
            raise InvalidConfig("duration must cover at least one step")
        if self.record_stride < 1:
            raise InvalidConfig("record_stride must be >= 1")
        if not self.channels:
            raise InvalidConfig("at least one channel is required")
        n = self.graph_nodes
        for ch in self.channels:
            if ch.network.node_count != n:
                raise InvalidConfig(
                    f"channel {ch.name}: beta length {ch.network.node_count} != node count {n}"
                )
        needs_target = any(ch.input_kind in TARGET_INPUT_KINDS for ch in self.channels)
        if needs_target and self.target.mode == "none":
            raise InvalidConfig("target-driven channels need a target section")
        if needs_target and any(ch.input_kind == "static" for ch in self.channels):
            raise InvalidConfig("channels must share input geometry: all target or all static")
        if self.agent_positions is not None and self.agent_positions.shape != (n, 2):
            raise InvalidConfig(f"agent positions must be ({n}, 2)")
        if self.coverage is not None:
            if self.domain is None:
                raise InvalidConfig("coverage needs a domain")
            if self.agent_positions is None:
                raise InvalidConfig("coverage needs initial agent positions")
            ratio = self.coverage_dt / self.dt
            if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
                raise InvalidConfig("coverage_dt must be a positive multiple of dt")

    @property
    def total_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def coverage_stride(self) -> int:
        return int(round(self.coverage_dt / self.dt))

    @property
    def channel_names(self) -> tuple[str, ...]:
        return tuple(ch.name for ch in self.channels)


def load_scenario(path_or_dict) -> ScenarioConfig:
    """Parse and validate a scenario JSON document (path, str, or dict)."""
    if isinstance(path_or_dict, dict):
        doc = path_or_dict
    else:
        doc = json.loads(Path(path_or_dict).read_text())
    return scenario_from_dict(doc)


def scenario_from_dict(doc: dict) -> ScenarioConfig:
    try:
        graph_doc = doc["graph"]
        nodes = int(graph_doc["nodes"])
        edges = tuple((int(a), int(b)) for a, b in graph_doc["edges"])
    except (KeyError, TypeError) as exc:
        raise InvalidConfig(f"graph section malformed: {exc}") from exc

    channels = []
    for name, ch_doc in doc.get("channels", {}).items():
        channels.append(_parse_channel(name, ch_doc, nodes))
    if not channels:
        raise InvalidConfig("no channels defined")

    agent_positions = None
    agents_doc = doc.get("agents")
    if agents_doc and "positions" in agents_doc:
        agent_positions = np.asarray(agents_doc["positions"], dtype=float)

    domain = None
    if "domain" in doc:
        b = doc["domain"]["bounds"]
        domain = Domain2D(
            float(b[0]), float(b[1]), float(b[2]), float(b[3]),
            int(doc["domain"].get("grid_resolution", 64)),
        )

    target = TargetConfig("none")
    if "target" in doc:
        tdoc = doc["target"]
        mode = tdoc.get("mode", "waypoints")
        if mode == "waypoints":
            wps = [
                Waypoint(
                    position=np.asarray(w["position"], dtype=float),
                    travel=float(w.get("travel", 0.0)),
                    dwell=float(w.get("dwell", 0.0)),
                )
                for w in tdoc["waypoints"]
            ]
            target = TargetConfig("waypoints", waypoints=tuple(wps))
        elif mode in ("external", "replay"):
            commands = tuple(
                (int(c[0]), float(c[1]), float(c[2]), int(c[3]))
                for c in tdoc.get("commands", ())
            )
            start = np.asarray(tdoc.get("start", [0.0, 0.0]), dtype=float)
            target = TargetConfig(
                mode, start=start, v_max=float(tdoc.get("v_max", 5.0)), commands=commands
            )
        else:
            raise InvalidConfig(f"unknown target mode {mode!r}")

    coverage = None
    if "coverage" in doc:
        cdoc = doc["coverage"]
        coverage = CoverageParams(
            grid_resolution=int(cdoc.get("grid_resolution", 64)),
            bump_radius=float(cdoc.get("bump_radius", 1.5)),
            decay=float(cdoc.get("decay", 0.02)),
            phi_max=float(cdoc.get("phi_max", 1e3)),
            kappa=float(cdoc.get("kappa", 1.0)),
            speed_limit=float(cdoc.get("speed_limit", 1.5)),
            dgdo_mode=cdoc.get("dGdO_mode", cdoc.get("dgdo_mode", "zero")),
        )
        if domain is not None and coverage.grid_resolution != domain.grid_resolution:
            domain = Domain2D(
                domain.x_lo, domain.x_hi, domain.y_lo, domain.y_hi, coverage.grid_resolution
            )

    init_doc = doc.get("init", {})
    init = InitConfig(
        x0=_scalar_or_array(init_doc.get("x", 0.0)),
        x_hat_offset=_scalar_or_array(init_doc.get("x_hat_offset", 0.0)),
        delta_hat0=_scalar_or_array(init_doc.get("delta_hat", 0.0)),
    )

    return ScenarioConfig(
        name=doc.get("name", "scenario"),
        seed=int(doc.get("seed", 0)),
        dt=float(doc["dt"]),
        duration=float(doc["duration"]),
        graph_nodes=nodes,
        graph_edges=edges,
        channels=tuple(channels),
        agent_positions=agent_positions,
        domain=domain,
        target=target,
        coverage=coverage,
        coverage_dt=float(doc.get("coverage", {}).get("dt", 0.05)),
        record_stride=int(doc.get("record_stride", 1)),
        init=init,
        validate_stages=bool(doc.get("validate_stages", False)),
    )


def _scalar_or_array(value):
    if isinstance(value, (list, tuple)):
        return np.asarray(value, dtype=float)
    return float(value)


def _parse_channel(name: str, ch_doc: dict, nodes: int) -> ChannelConfig:
    net_doc = dict(ch_doc["network"])
    beta = net_doc.get("beta", 0.001)
    if isinstance(beta, (int, float)):
        beta = np.full(nodes, float(beta))
    else:
        beta = np.asarray(beta, dtype=float)
    network = NetworkParams(
        a=float(net_doc["a"]),
        k0=float(net_doc["k0"]),
        alpha=float(net_doc["alpha"]),
        gamma=float(net_doc["gamma"]),
        sigma=float(net_doc["sigma"]),
        beta=beta,
        sensing_radius=float(net_doc["sensing_radius"]),
    )

    adaptive = None
    if ch_doc.get("adaptive"):
        a_doc = ch_doc["adaptive"]
        adaptive = AdaptiveParams(
            gamma_rate=float(a_doc["gamma_rate"]),
            mu=float(a_doc["mu"]),
            delta_hat_max=float(a_doc["delta_hat_max"]),
            nu_fraction=float(a_doc.get("nu_fraction", 0.05)),
            constant_mode=bool(a_doc.get("constant_mode", False)),
        )

    uncertainty = UncertaintySpec("none")
    if ch_doc.get("uncertainty"):
        u_doc = ch_doc["uncertainty"]
        uncertainty = UncertaintySpec(
            kind=u_doc["kind"],
            bounds=tuple(float(v) for v in u_doc.get("bounds", (0.0, 0.0))),
            seed=int(u_doc.get("seed", 0)),
            omega=_pair(u_doc.get("omega", 0.5)),
            period=float(u_doc.get("period", 10.0)),
            transition=float(u_doc.get("transition", 1.0)),
            segments=int(u_doc.get("segments", 8)),
        )

    input_spec = ch_doc.get("input", "target_x")
    static_input = None
    if isinstance(input_spec, dict):
        positions = np.asarray(input_spec["positions"], dtype=float).reshape(-1, 2)
        m = positions.shape[0]
        offsets = _broadcast(input_spec.get("values", input_spec.get("offset", 0.0)), m)
        amplitudes = _broadcast(input_spec.get("amplitude", 0.0), m)
        omegas = _broadcast(input_spec.get("omega", 0.0), m)
        phases = _broadcast(input_spec.get("phase", 0.0), m)
        static_input = StaticInputSpec(positions, offsets, amplitudes, omegas, phases)
        input_kind = "static"
    else:
        input_kind = str(input_spec)

    return ChannelConfig(
        name=name,
        input_kind=input_kind,
        network=network,
        adaptive=adaptive,
        uncertainty=uncertainty,
        static_input=static_input,
    )


def _broadcast(value, m: int) -> np.ndarray:
    if isinstance(value, (int, float)):
        return np.full(m, float(value))
    arr = np.asarray(value, dtype=float)
    if arr.shape != (m,):
        raise InvalidConfig(f"expected {m} values, got shape {arr.shape}")
    return arr


def _pair(value) -> tuple[float, float]:
    if isinstance(value, (int, float)):
        return (float(value), float(value))
    return (float(value[0]), float(value[1]))


def build_uncertainty(spec: UncertaintySpec, n: int, master_seed: int):
    """Materialize an uncertainty model, drawing per-agent parameters."""
    from .adaptive import UncertaintyModel

    if spec.kind == "none":
        return UncertaintyModel.zero(n)
    rng = np.random.default_rng((master_seed, spec.seed))
    lo, hi = spec.bounds
    if spec.kind == "constant":
        return UncertaintyModel.constant(rng.uniform(lo, hi, size=n))
    if spec.kind == "sinusoidal":
        amps = rng.uniform(lo, hi, size=n)
        omegas = rng.uniform(spec.omega[0], spec.omega[1], size=n)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=n)
        return UncertaintyModel.sinusoidal(amps, omegas, phases)
    if spec.kind == "piecewise":
        levels = rng.uniform(lo, hi, size=(spec.segments, n))
        return UncertaintyModel.piecewise_smoothed(levels, spec.period, spec.transition)
    raise InvalidConfig(f"unknown uncertainty kind {spec.kind!r}")
