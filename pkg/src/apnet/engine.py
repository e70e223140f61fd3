"""Deterministic fixed-step simulation of the coupled network + coverage system.

The consensus/adaptive channels advance with classical RK4 at the base
step, re-evaluating sensing weights, input values, and true uncertainties
at every stage. The coverage layer (density deposit, tessellation,
per-sensor control) runs on its own coarser clock by explicit splitting:
sensor positions are frozen for each consensus block and jump at coverage
boundaries. Identical scenario + seed reproduces the trace bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .adaptive import UncertaintyModel
from .coverage import (
    CoverageParams,
    DensityField,
    SensorFleet,
    all_centroids,
    centroid_cost,
    coverage_cost,
    density_step,
    fleet_step,
    voronoi_partition,
)
from .graph import Graph, build_graph
from .scenario import ScenarioConfig, build_uncertainty
from .trajectory import ExternalTrack, WaypointTrack, interp_boundaries, stage_times


class NonFiniteState(RuntimeError):
    """A state component left the finite range; names the offender."""


@dataclass
class Trace:
    """Recorded run: one row per recorded step, finalized into arrays."""

    channel_names: tuple[str, ...]
    node_count: int
    edge_count: int
    record_dt: float
    rows: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def append(self, **signals):
        for key, value in signals.items():
            self.rows.setdefault(key, []).append(value)

    def finalize(self):
        self.rows = {k: np.asarray(v) for k, v in self.rows.items()}
        return self

    def __getitem__(self, key):
        return self.rows[key]

    def __contains__(self, key):
        return key in self.rows

    @property
    def length(self) -> int:
        first = next(iter(self.rows.values()), [])
        return len(first)


class Engine:
    """Owns the full simulation state and advances it block by block."""

    def __init__(self, config: ScenarioConfig, backend: str | None = None):
        self.config = config
        self.backend_name, self._advance = kernels.select_backend(backend)
        self.graph: Graph = build_graph(config.graph_nodes, config.graph_edges)
        n = self.graph.node_count
        m_edges = self.graph.edge_count
        self.channel_names = config.channel_names
        c = len(self.channel_names)

        # constant matrices, C-contiguous for the compiled kernel
        self._lap = np.ascontiguousarray(self.graph.laplacian)
        self._bt = np.ascontiguousarray(self.graph.incidence.T)
        self._pbl = np.ascontiguousarray(self.graph.incidence.T @ self.graph.laplacian_pinv)

        # per-channel parameter arrays
        def gather(fn):
            return np.array([fn(ch) for ch in config.channels], dtype=float)

        self._a = gather(lambda ch: ch.network.a)
        self._k0 = gather(lambda ch: ch.network.k0)
        self._alpha = gather(lambda ch: ch.network.alpha)
        self._gamma = gather(lambda ch: ch.network.gamma)
        self._sigma = gather(lambda ch: ch.network.sigma)
        self._beta = np.ascontiguousarray(
            np.column_stack([ch.network.beta for ch in config.channels])
        )
        self._gamma_rate = gather(lambda ch: ch.adaptive.gamma_rate if ch.adaptive else 1.0)
        self._mu = gather(lambda ch: ch.adaptive.mu if ch.adaptive else 1.0)
        self._dmax = gather(lambda ch: ch.adaptive.delta_hat_max if ch.adaptive else 1.0)
        self._nu = gather(
            lambda ch: 2.0 * ch.adaptive.delta_hat_max * ch.adaptive.nu_fraction
            if ch.adaptive
            else 1.0
        )
        self._adaptive_mask = gather(lambda ch: 0.0 if ch.adaptive is None else 1.0)
        self._project_mask = gather(
            lambda ch: 0.0 if (ch.adaptive is None or ch.adaptive.constant_mode) else 1.0
        )
        self._sensing_radius = config.channels[0].network.sensing_radius
        for ch in config.channels:
            if ch.network.sensing_radius != self._sensing_radius:
                raise ValueError("channels must share the sensing radius (one geometry)")

        # uncertainty models, seeded per channel
        self.uncertainty: list[UncertaintyModel] = [
            build_uncertainty(ch.uncertainty, n, config.seed) for ch in config.channels
        ]

        # input geometry
        self._target_driven = config.channels[0].input_kind != "static"
        if self._target_driven:
            self._m_inputs = 1
            self._static_positions = None
        else:
            base = config.channels[0].static_input
            for ch in config.channels[1:]:
                if not np.array_equal(ch.static_input.positions, base.positions):
                    raise ValueError("static channels must share input positions")
            self._m_inputs = base.count
            self._static_positions = base.positions

        # target track
        self.track = None
        if config.target.mode == "waypoints":
            self.track = config.target.build_track()
        elif config.target.mode in ("external", "replay"):
            self.track = ExternalTrack(config.target.start, config.target.v_max, config.dt)
            self._pending_replay = list(config.target.commands)
        else:
            self._pending_replay = []
        if config.target.mode == "replay":
            self._replay_mode = True
        else:
            self._replay_mode = False
            if config.target.mode != "external":
                self._pending_replay = []

        # agent positions / coverage state
        if config.agent_positions is not None:
            positions = np.asarray(config.agent_positions, dtype=float)
        else:
            positions = np.zeros((n, 2))
        self.coverage_enabled = config.coverage is not None
        if self.coverage_enabled:
            cov: CoverageParams = config.coverage
            self.fleet = SensorFleet(positions, cov.speed_limit)
            self.density = DensityField(config.domain, cov.bump_radius, cov.decay, cov.phi_max)
            self._prev_centroids = None
            self._cov_params = cov
        else:
            self.fleet = SensorFleet(positions, 1.0)
            self.density = None
        self.partition = None
        self.centroids = None
        self._cov_diag = {"slack_min": 0.0, "clamped": np.zeros(n, dtype=bool)}
        self._H = np.nan
        self._J = np.nan

        # channel states
        self.X = np.zeros((n, c))
        x0 = config.init.x0
        self.X += np.asarray(x0, dtype=float).reshape(-1, 1) if np.ndim(x0) else float(x0)
        self.P = np.zeros((n, c))
        delta0 = np.column_stack([model.delta_fn(0.0) for model in self.uncertainty])
        xt0 = self.X + delta0 * self._adaptive_mask
        offset = config.init.x_hat_offset
        offset = np.asarray(offset, dtype=float).reshape(-1, 1) if np.ndim(offset) else float(offset)
        self.XH = (xt0 + offset) * self._adaptive_mask
        self.PH = np.zeros((n, c))
        dh0 = config.init.delta_hat0
        dh0 = np.asarray(dh0, dtype=float).reshape(-1, 1) if np.ndim(dh0) else float(dh0)
        self.DH = (np.zeros((n, c)) + dh0) * self._adaptive_mask
        self.Z = np.zeros((m_edges, c))
        self.ZH = np.zeros((m_edges, c))
        for arr_name in ("X", "P", "XH", "PH", "DH", "Z", "ZH"):
            setattr(self, arr_name, np.ascontiguousarray(getattr(self, arr_name)))

        self.step_index = 0
        self._started = False
        self.frame_callback = None
        self.eps_last = np.full(c, np.nan)
        self._last_target = self._target_now()
        self.trace = Trace(
            channel_names=self.channel_names,
            node_count=n,
            edge_count=m_edges,
            record_dt=config.dt * config.record_stride,
            meta={
                "scenario": config.name,
                "seed": config.seed,
                "backend": self.backend_name,
                "dt": config.dt,
            },
        )

    # ---------------------------------------------------------------- time
    @property
    def t(self) -> float:
        return self.step_index * self.config.dt

    @property
    def total_steps(self) -> int:
        return self.config.total_steps

    @property
    def done(self) -> bool:
        return self.step_index >= self.total_steps

    # ------------------------------------------------------------- exogenous
    def _target_now(self):
        if self.track is None:
            return np.zeros(2), 0.0
        if isinstance(self.track, WaypointTrack):
            pos, _, speed = self.track.sample([self.t])
            return pos[0], float(speed[0])
        return self.track._pos.copy(), self.track._speed()

    def ingest_command(self, x: float, y: float, seq: int) -> None:
        """External target command, applied from the next block onward."""
        if not isinstance(self.track, ExternalTrack):
            raise RuntimeError("scenario target mode is not external")
        self.track.command(x, y, seq)

    def _block_exogenous(self, n_steps: int):
        """Stage-time sensing weights, input values, and uncertainties."""
        times = stage_times(self.t, self.config.dt, n_steps)
        s2 = times.shape[0]
        n = self.graph.node_count
        c = len(self.channel_names)
        agents = self.fleet.positions

        if self._target_driven:
            if isinstance(self.track, WaypointTrack):
                pos, _, speed = self.track.sample(times)
            else:
                boundary_pos, boundary_speed = self.track.advance_steps(n_steps)
                pos = interp_boundaries(boundary_pos, n_steps)
                speed = interp_boundaries(boundary_speed, n_steps)
            self._last_target = (pos[-1].copy(), float(speed[-1]))
            dists = np.linalg.norm(agents[None, :, :] - pos[:, None, :], axis=2)
            k2 = np.zeros((s2, n, 1))
            inside = dists < self._sensing_radius
            k2[..., 0][inside] = 0.5 * (
                1.0 + np.cos(np.pi * dists[inside] / self._sensing_radius)
            )
            c_stages = np.empty((s2, 1, c))
            for j, ch in enumerate(self.config.channels):
                if ch.input_kind == "target_x":
                    c_stages[:, 0, j] = pos[:, 0]
                elif ch.input_kind == "target_y":
                    c_stages[:, 0, j] = pos[:, 1]
                else:
                    c_stages[:, 0, j] = speed
        else:
            m = self._m_inputs
            dists = np.linalg.norm(
                agents[:, None, :] - self._static_positions[None, :, :], axis=2
            )
            k2_one = np.zeros((n, m))
            inside = dists < self._sensing_radius
            k2_one[inside] = 0.5 * (1.0 + np.cos(np.pi * dists[inside] / self._sensing_radius))
            k2 = np.broadcast_to(k2_one, (s2, n, m)).copy()
            c_stages = np.empty((s2, m, c))
            for j, ch in enumerate(self.config.channels):
                c_stages[:, :, j] = ch.static_input.values(times)

        delta = np.zeros((s2, n, c))
        for j, model in enumerate(self.uncertainty):
            if self._adaptive_mask[j] > 0 and model.kind != "none":
                if model.kind == "constant":
                    delta[:, :, j] = model.delta_fn(0.0)
                else:
                    for si, tv in enumerate(times):
                        delta[si, :, j] = model.delta_fn(float(tv))
        return k2, c_stages, delta

    # ---------------------------------------------------------------- loop
    def _advance_block(self, n_steps: int):
        k2, cs, ds = self._block_exogenous(n_steps)
        self._advance(
            self.X, self.P, self.XH, self.PH, self.DH,
            self.Z, self.ZH,
            self._lap, self._bt, self._pbl,
            self._beta,
            self._a, self._k0, self._alpha, self._gamma, self._sigma,
            self._gamma_rate, self._mu, self._dmax, self._nu,
            self._adaptive_mask, self._project_mask,
            k2, cs, ds,
            self.config.dt, n_steps,
        )
        self.step_index += n_steps
        self._check_finite()
        self._last_k2 = k2[-1]
        self._last_c = cs[-1]

    def _check_finite(self):
        for name, arr in (("x", self.X), ("p", self.P), ("x_hat", self.XH),
                          ("p_hat", self.PH), ("delta_hat", self.DH),
                          ("z", self.Z), ("z_hat", self.ZH)):
            if not np.all(np.isfinite(arr)):
                bad = np.argwhere(~np.isfinite(arr))[0]
                raise NonFiniteState(
                    f"{name}[{bad[0]}] (channel {self.channel_names[bad[1]]}) "
                    f"non-finite at t={self.t:.6f}"
                )

    def _coverage_substep(self):
        est_pos, est_speed = self.estimated_target()
        density_step(self.density, est_pos, est_speed, self.config.coverage_dt)
        self.partition, self.centroids, diag = fleet_step(
            self.fleet,
            self.density,
            self._cov_params,
            self.config.coverage_dt,
            self._prev_centroids,
            self.config.coverage_dt,
        )
        self._prev_centroids = self.centroids.copy()
        self._cov_diag = diag
        self._H = coverage_cost(self.partition.sites, self.partition, self.density)
        self._J = centroid_cost(self.partition.sites, self.centroids)
        if self.frame_callback is not None:
            self.frame_callback(self)

    def estimated_target(self):
        """Fleet-consensus estimate of the target: mean observer state per channel.

        Nominal channels report the true network state instead.
        """
        pos = np.zeros(2)
        speed = 0.0
        for j, ch in enumerate(self.config.channels):
            value = float(
                (self.XH[:, j] if self._adaptive_mask[j] > 0 else self.X[:, j]).mean()
            )
            if ch.input_kind == "target_x":
                pos[0] = value
            elif ch.input_kind == "target_y":
                pos[1] = value
            elif ch.input_kind == "target_speed":
                speed = abs(value)
        return pos, speed

    def _record(self):
        n = self.graph.node_count
        c = len(self.channel_names)
        t = self.t
        k2_now, c_now = self._current_inputs()
        k1_now = k2_now.sum(axis=1)
        total = float(k2_now.sum())

        delta_true = np.zeros((n, c))
        for j, model in enumerate(self.uncertainty):
            if self._adaptive_mask[j] > 0:
                delta_true[:, j] = model.delta_fn(t)
        xt = self.X + delta_true

        eps = self.eps_last.copy()
        if total > 1e-12:
            for j in range(c):
                eps[j] = float((k2_now @ c_now[:, j]).sum()) / total
        self.eps_last = eps

        ex = (xt - self.XH - self.DH) * self._adaptive_mask
        ez = self.Z - self.ZH
        dtil = (delta_true - self.DH) * self._adaptive_mask
        with np.errstate(over="ignore", invalid="ignore"):
            vlyap = (
                0.5 * (ex * ex).sum(axis=0)
                + 0.5 / self._gamma * (ez * ez).sum(axis=0)
                + (1.0 / self._gamma_rate) * (dtil * dtil).sum(axis=0)
            ) * self._adaptive_mask

        kcc = np.zeros((self.graph.edge_count, c))
        if total > 1e-12:
            lc = np.outer(k1_now, np.ones(n)) / total - np.eye(n)
            base = self._pbl @ lc @ k2_now  # (M, m)
            for j in range(c):
                kcc[:, j] = base @ c_now[:, j]
        self._last_kcc = kcc

        target_pos, target_speed = self._last_target if self.track is not None else (np.full(2, np.nan), np.nan)
        est_pos, est_speed = self.estimated_target()

        self.trace.append(
            t=t,
            x=self.X.copy(), p=self.P.copy(),
            x_hat=self.XH.copy(), p_hat=self.PH.copy(),
            delta_hat=self.DH.copy(), delta_true=delta_true,
            z=self.Z.copy(), z_hat=self.ZH.copy(),
            eps=eps.copy(),
            delta=self.X - eps[None, :],
            e_x=ex, e_z=ez, delta_tilde=dtil, lyapunov=vlyap,
            kcc=kcc,
            k1=k1_now.copy(),
            positions=self.fleet.positions.copy(),
            centroids=self.centroids.copy() if self.centroids is not None else np.full((n, 2), np.nan),
            coverage_H=self._H,
            coverage_J=self._J,
            qp_slack_min=self._cov_diag.get("slack_min", 0.0),
            clamp_count=int(np.sum(self._cov_diag.get("clamped", 0))),
            target_pos=np.asarray(target_pos, dtype=float),
            target_speed=float(target_speed) if np.isfinite(np.asarray(target_speed)).all() else np.nan,
            est_pos=est_pos,
            est_speed=est_speed,
        )

    def _current_inputs(self):
        """Sensing weights (N, m) and input values (m, C) at the current time."""
        n = self.graph.node_count
        c = len(self.channel_names)
        agents = self.fleet.positions
        if self._target_driven:
            pos, speed = (self._last_target if self.track is not None else (np.zeros(2), 0.0))
            dists = np.linalg.norm(agents - pos[None, :], axis=1)
            k2 = np.zeros((n, 1))
            inside = dists < self._sensing_radius
            k2[inside, 0] = 0.5 * (1.0 + np.cos(np.pi * dists[inside] / self._sensing_radius))
            c_now = np.empty((1, c))
            for j, ch in enumerate(self.config.channels):
                if ch.input_kind == "target_x":
                    c_now[0, j] = pos[0]
                elif ch.input_kind == "target_y":
                    c_now[0, j] = pos[1]
                else:
                    c_now[0, j] = speed
            return k2, c_now
        dists = np.linalg.norm(agents[:, None, :] - self._static_positions[None, :, :], axis=2)
        k2 = np.zeros((n, self._m_inputs))
        inside = dists < self._sensing_radius
        k2[inside] = 0.5 * (1.0 + np.cos(np.pi * dists[inside] / self._sensing_radius))
        c_now = np.empty((self._m_inputs, c))
        for j, ch in enumerate(self.config.channels):
            c_now[:, j] = ch.static_input.values(np.array([self.t]))[0]
        return k2, c_now

    def start(self):
        """Initial coverage pass and the t=0 record; idempotent."""
        if self._started:
            return
        self._started = True
        self._apply_replay_commands()
        if self.coverage_enabled:
            self._coverage_substep()
        self._record()

    def advance_steps(self, n_steps: int):
        """Advance up to n_steps, honoring record/coverage/replay boundaries."""
        self.start()
        cfg = self.config
        total = self.total_steps
        cov_stride = cfg.coverage_stride if self.coverage_enabled else 0
        rec_stride = cfg.record_stride
        target = min(self.step_index + n_steps, total)
        while self.step_index < target:
            k = self.step_index
            nexts = [target, total]
            if cov_stride:
                nexts.append((k // cov_stride + 1) * cov_stride)
            nexts.append((k // rec_stride + 1) * rec_stride)
            if self._pending_replay:
                nexts.append(max(self._pending_replay[0][0], k + 1))
            self._advance_block(min(nexts) - k)
            self._apply_replay_commands()
            k = self.step_index
            if cov_stride and k < total and k % cov_stride == 0:
                self._coverage_substep()
            if k % rec_stride == 0 or k == total:
                self._record()

    def run(self, progress=None) -> Trace:
        """Run the configured duration and return the finalized trace."""
        self.start()
        total = self.total_steps
        chunk = max(1, self.config.record_stride)
        while self.step_index < total:
            self.advance_steps(chunk)
            if progress is not None:
                progress(self.step_index, total)
        return self.trace.finalize()

    def _apply_replay_commands(self):
        while self._pending_replay and self._pending_replay[0][0] <= self.step_index:
            _, x, y, seq = self._pending_replay.pop(0)
            self.track.command(x, y, seq)

    # ------------------------------------------------------------ snapshots
    def snapshot(self, max_density: int = 64) -> dict:
        """Self-describing state snapshot for streaming clients."""
        est_pos, est_speed = self.estimated_target()
        target_pos, target_speed = self._last_target if self.track is not None else ((np.nan, np.nan), np.nan)
        polygons = []
        if self.partition is not None:
            polygons = [poly.tolist() for poly in self.partition.polygons]
        density = None
        if self.density is not None:
            density = _downsample(self.density.phi, max_density)
        k2_now, _ = self._current_inputs()
        return {
            "t": self.t,
            "step": self.step_index,
            "agents": {
                "positions": self.fleet.positions.tolist(),
                "active": (k2_now.sum(axis=1) > 0).tolist(),
                "x_hat": {name: self.XH[:, j].tolist() for j, name in enumerate(self.channel_names)},
                "delta_hat": {name: self.DH[:, j].tolist() for j, name in enumerate(self.channel_names)},
            },
            "target": {
                "true": {"position": list(map(float, np.asarray(target_pos))), "speed": float(target_speed)},
                "estimate": {"position": est_pos.tolist(), "speed": est_speed},
            },
            "voronoi": polygons,
            "density": density,
            "metrics": {
                "H": None if not np.isfinite(self._H) else self._H,
                "J": None if not np.isfinite(self._J) else self._J,
            },
        }


def _downsample(phi: np.ndarray, limit: int) -> dict:
    """Area-average the density grid down to at most limit x limit."""
    res = phi.shape[0]
    if res <= limit:
        out = phi
    else:
        factor = int(np.ceil(res / limit))
        pad = (-res) % factor
        padded = np.pad(phi, ((0, pad), (0, pad)), mode="edge")
        side = padded.shape[0] // factor
        out = padded.reshape(side, factor, side, factor).mean(axis=(1, 3))
    return {"w": out.shape[1], "h": out.shape[0], "data": out.ravel().tolist()}


def run_scenario(config: ScenarioConfig, backend: str | None = None, progress=None) -> Trace:
    return Engine(config, backend=backend).run(progress=progress)
