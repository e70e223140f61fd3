"""Command-line entry points: run scenarios, check ultimate bounds, serve live."""
from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from .diagnostics import check_theorem1, check_theorem2
from .engine import Engine
from .scenario import ScenarioConfig, build_uncertainty, load_scenario
from .scenarios import field_scenario, load_bundled
from .traceio import export_metrics
from .trajectory import WaypointTrack


@click.group()
def main():
    """Adaptive active-passive multiagent simulator."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--out", "out_dir", type=click.Path(), default="out",
              help="Directory for trace.csv and summary.json.")
@click.option("--headless", is_flag=True, help="Suppress progress output.")
@click.option("--backend", type=click.Choice(["auto", "numpy", "compiled"]),
              default="auto")
@click.option("--frames", type=int, default=0,
              help="Save every Nth recorded density grid to out/frames (0 = off).")
def simulate(config_path, seed, out_dir, headless, backend, frames):
    """Run a scenario file and export the trace and summary."""
    doc = json.loads(Path(config_path).read_text())
    if seed is not None:
        doc["seed"] = seed
    cfg = load_scenario(doc)
    _run_and_export(cfg, out_dir, headless, backend, frames)


@main.command("verify-bounds")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--backend", type=click.Choice(["auto", "numpy", "compiled"]),
              default="auto")
def verify_bounds(config_path, backend):
    """Run a scenario and check every applicable ultimate bound."""
    cfg = load_scenario(config_path)
    engine = Engine(cfg, backend=None if backend == "auto" else backend)
    trace = engine.run()
    reports = bound_reports(cfg, engine, trace)
    failed = False
    for name, report in reports.items():
        for key, ok in report.satisfied.items():
            status = "PASS" if ok else "FAIL"
            failed = failed or not ok
            click.echo(
                f"[{status}] {name}/{key}: observed {report.observed[key]:.6g}"
                f" <= bound {report.bounds[key]:.6g}"
                f" (transient cutoff {report.transient_cutoff:.2f}s)"
            )
    sys.exit(1 if failed else 0)


@main.command("replicate-sec5")
@click.option("--out", "out_dir", type=click.Path(), default="out/sec5")
@click.option("--duration", type=float, default=None,
              help="Shorten the tour for a quick look (seconds).")
@click.option("--headless", is_flag=True)
@click.option("--backend", type=click.Choice(["auto", "numpy", "compiled"]),
              default="auto")
@click.option("--frames", type=int, default=0)
def replicate_sec5(out_dir, duration, headless, backend, frames):
    """Run the bundled 25-agent field scenario with the published gain set."""
    try:
        doc = load_bundled("sec5_field.json")
    except FileNotFoundError:
        doc = field_scenario()
    if duration is not None:
        doc["duration"] = duration
    cfg = load_scenario(doc)
    _run_and_export(cfg, out_dir, headless, backend, frames)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Scenario with target mode 'external' (default: bundled field).")
@click.option("--host", default="127.0.0.1", envvar="APNET_HOST")
@click.option("--port", default=8000, type=int, envvar="APNET_PORT")
@click.option("--snapshot-rate", default=30.0, type=float, envvar="APNET_SNAPSHOT_RATE")
@click.option("--ratio", default=1.0, type=float, envvar="APNET_REALTIME_RATIO",
              help="Sim seconds per wall second.")
@click.option("--v-max", default=5.0, type=float, envvar="APNET_VMAX")
@click.option("--multi-session", is_flag=True, envvar="APNET_MULTI_SESSION")
def serve(config_path, host, port, snapshot_rate, ratio, v_max, multi_session):
    """Host live sessions over HTTP + websockets for interactive steering."""
    import uvicorn

    from .service import ServiceSettings, create_app

    default_doc = None
    if config_path is not None:
        default_doc = json.loads(Path(config_path).read_text())
    settings = ServiceSettings(
        snapshot_rate=snapshot_rate,
        realtime_ratio=ratio,
        v_max=v_max,
        max_sessions=8 if multi_session else 1,
        default_document=default_doc,
    )
    uvicorn.run(create_app(settings), host=host, port=port, log_level="info")


def bound_reports(cfg: ScenarioConfig, engine: Engine, trace) -> dict:
    """Assemble every bound check the scenario's channels admit."""
    reports = {}
    for j, ch in enumerate(cfg.channels):
        eps_bar, c_d_bar = channel_input_bounds(cfg, ch)
        if ch.adaptive is None:
            reports[f"consensus[{ch.name}]"] = check_theorem1(
                trace, j, ch.network, engine.graph, eps_bar, c_d_bar
            )
        else:
            model = engine.uncertainty[j]
            reports[f"estimation[{ch.name}]"] = check_theorem2(
                trace, j, ch.adaptive, ch.network, engine.graph, model
            )
    return reports


def channel_input_bounds(cfg: ScenarioConfig, ch) -> tuple[float, float]:
    """Declared ceilings on the input average and the input rate vector."""
    if ch.input_kind == "static":
        spec = ch.static_input
        eps_bar = float(np.max(np.abs(spec.offsets) + np.abs(spec.amplitudes)))
        return eps_bar, spec.rate_bound()
    track = cfg.target.build_track()
    if track is None:
        return 1.0, 1.0
    if ch.input_kind == "target_x":
        return float(track.position_bound()[0]), float(track.rate_bound()[0])
    if ch.input_kind == "target_y":
        return float(track.position_bound()[1]), float(track.rate_bound()[1])
    return track.speed_bound(), track.accel_bound()


def _run_and_export(cfg: ScenarioConfig, out_dir, headless, backend, frames):
    engine = Engine(cfg, backend=None if backend == "auto" else backend)
    if frames > 0 and engine.density is not None:
        _install_frame_saver(engine, Path(out_dir) / "frames", frames)
    started = time.perf_counter()
    if headless:
        trace = engine.run()
    else:
        from tqdm import tqdm

        with tqdm(total=cfg.total_steps, unit="step", unit_scale=True) as bar:
            def tick(done, total):
                bar.update(done - bar.n)

            trace = engine.run(progress=tick)
    elapsed = time.perf_counter() - started
    reports = bound_reports(cfg, engine, trace)
    paths = export_metrics(trace, out_dir, reports)
    if not headless:
        click.echo(f"{cfg.total_steps} steps in {elapsed:.1f}s "
                   f"({engine.backend_name} backend)")
    for name, report in reports.items():
        for key, ok in report.satisfied.items():
            click.echo(f"[{'PASS' if ok else 'FAIL'}] {name}/{key}")
    click.echo(f"trace: {paths['trace']}")
    click.echo(f"summary: {paths['summary']}")


def _install_frame_saver(engine: Engine, frames_dir: Path, stride: int):
    """Save a density snapshot PNG every `stride` coverage updates."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    frames_dir.mkdir(parents=True, exist_ok=True)
    counter = {"n": 0}

    def save(eng: Engine):
        if counter["n"] % stride == 0:
            dom = eng.density.domain
            fig, ax = plt.subplots(figsize=(5, 5))
            im = ax.imshow(eng.density.phi, origin="lower",
                           extent=[dom.x_lo, dom.x_hi, dom.y_lo, dom.y_hi],
                           cmap="viridis")
            pos = eng.fleet.positions
            ax.plot(pos[:, 0], pos[:, 1], "r.", markersize=6)
            fig.colorbar(im, ax=ax, shrink=0.8)
            ax.set_title(f"importance density, t = {eng.t:.1f}s")
            fig.savefig(frames_dir / f"density_{counter['n']:06d}.png", dpi=120)
            plt.close(fig)
        counter["n"] += 1

    engine.frame_callback = save


if __name__ == "__main__":
    main()
