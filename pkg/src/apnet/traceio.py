"""Trace export: wide CSV (one row per recorded step) plus a JSON summary.

Column order is fixed and self-documenting: time first, then per-channel
agent-indexed blocks in the order listed in SIGNAL_LAYOUT, then fleet and
target columns. Floats are written with shortest round-tripping repr, so
a reload reproduces values exactly.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .engine import Trace

# (key, kind) with kind in {agents, edges, channel, scalar, fleet, pair}
SIGNAL_LAYOUT = (
    ("x", "agents"),
    ("p", "agents"),
    ("x_hat", "agents"),
    ("p_hat", "agents"),
    ("delta_hat", "agents"),
    ("delta_true", "agents"),
    ("delta", "agents"),
    ("e_x", "agents"),
    ("z", "edges"),
    ("z_hat", "edges"),
    ("e_z", "edges"),
    ("kcc", "edges"),
    ("delta_tilde", "agents"),
    ("eps", "channel"),
    ("lyapunov", "channel"),
    ("k1", "pernode"),
    ("positions", "fleet"),
    ("centroids", "fleet"),
    ("coverage_H", "scalar"),
    ("coverage_J", "scalar"),
    ("qp_slack_min", "scalar"),
    ("clamp_count", "scalar"),
    ("target_pos", "pair"),
    ("target_speed", "scalar"),
    ("est_pos", "pair"),
    ("est_speed", "scalar"),
)


def column_names(trace: Trace) -> list[str]:
    names = ["t"]
    chans = trace.channel_names
    n = trace.node_count
    m = trace.edge_count
    for key, kind in SIGNAL_LAYOUT:
        if kind == "agents":
            names += [f"{key}.{ch}.{i + 1}" for ch in chans for i in range(n)]
        elif kind == "edges":
            names += [f"{key}.{ch}.e{k + 1}" for ch in chans for k in range(m)]
        elif kind == "channel":
            names += [f"{key}.{ch}" for ch in chans]
        elif kind == "pernode":
            names += [f"{key}.{i + 1}" for i in range(n)]
        elif kind == "fleet":
            names += [f"{key}.{i + 1}.{ax}" for i in range(n) for ax in ("x", "y")]
        elif kind == "pair":
            names += [f"{key}.x", f"{key}.y"]
        else:
            names.append(key)
    return names


def _row_values(trace: Trace, idx: int) -> list[float]:
    values = [float(trace["t"][idx])]
    for key, kind in SIGNAL_LAYOUT:
        arr = trace[key][idx]
        if kind in ("agents", "edges"):
            values += [float(v) for v in np.asarray(arr).T.ravel()]
        elif kind in ("channel", "pernode", "pair"):
            values += [float(v) for v in np.ravel(arr)]
        elif kind == "fleet":
            values += [float(v) for v in np.asarray(arr).ravel()]
        else:
            values.append(float(arr))
    return values


def write_csv(trace: Trace, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = column_names(trace)
    with path.open("w") as fh:
        fh.write(",".join(names) + "\n")
        for idx in range(trace.length):
            fh.write(",".join(repr(v) for v in _row_values(trace, idx)) + "\n")
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2) if path.stat().st_size else np.empty((0, 0))
    if data.size == 0:
        return {name: np.empty(0) for name in header}
    return {name: data[:, k] for k, name in enumerate(header)}


def summarize(trace: Trace, bound_reports: dict | None = None) -> dict:
    summary = {
        "meta": dict(trace.meta),
        "channels": list(trace.channel_names),
        "records": trace.length,
        "final_time": float(trace["t"][-1]) if trace.length else 0.0,
    }
    if trace.length:
        summary["final"] = {
            "coverage_H": _maybe(trace["coverage_H"][-1]),
            "coverage_J": _maybe(trace["coverage_J"][-1]),
            "eps": {ch: _maybe(trace["eps"][-1][j]) for j, ch in enumerate(trace.channel_names)},
            "lyapunov": {
                ch: _maybe(trace["lyapunov"][-1][j]) for j, ch in enumerate(trace.channel_names)
            },
        }
    if bound_reports:
        summary["bounds"] = {
            name: _report_dict(report) for name, report in bound_reports.items()
        }
    return summary


def _report_dict(report) -> dict:
    out = {
        "bounds": {k: _maybe(v) for k, v in report.bounds.items()},
        "observed": {k: _maybe(v) for k, v in report.observed.items()},
        "satisfied": {k: bool(v) for k, v in report.satisfied.items()},
        "transient_cutoff": _maybe(report.transient_cutoff),
    }
    if report.constants is not None:
        out["constants"] = {
            k: _maybe(v) for k, v in dataclasses.asdict(report.constants).items()
        }
    return out


def _maybe(value):
    value = float(value)
    return value if np.isfinite(value) else None


def export_metrics(trace: Trace, out_dir, bound_reports: dict | None = None) -> dict[str, Path]:
    """Write trace.csv and summary.json under out_dir; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = write_csv(trace, out_dir / "trace.csv")
    summary = summarize(trace, bound_reports)
    json_path = out_dir / "summary.json"
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True))
    return {"trace": csv_path, "summary": json_path}
