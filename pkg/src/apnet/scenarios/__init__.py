"""Bundled scenario documents.

The default field scenario: 25 mobile sensors on a 5x5 grid graph covering
a 20 m square, three estimation channels (target x, y, speed) with the
published gain set, constant measurement corruption drawn from [0,5] m and
[0,1] m/s, and a scripted three-stop target tour standing in for a hand
-steered pointer.
"""
from __future__ import annotations

import json
from importlib import resources


def grid_graph(side: int) -> tuple[int, list[list[int]]]:
    """1-indexed 4-neighbor grid graph."""
    edges = []
    for iy in range(side):
        for ix in range(side):
            node = 1 + ix + side * iy
            if ix + 1 < side:
                edges.append([node, node + 1])
            if iy + 1 < side:
                edges.append([node, node + side])
    return side * side, edges


def grid_positions(side: int, lo: float, hi: float) -> list[list[float]]:
    span = (hi - lo) / side
    return [
        [lo + span * (ix + 0.5), lo + span * (iy + 0.5)]
        for iy in range(side)
        for ix in range(side)
    ]


def field_scenario(duration: float | None = None, seed: int = 2024) -> dict:
    """The default 25-agent field experiment document."""
    nodes, edges = grid_graph(5)
    position_channel = {
        "network": {"a": 1.0, "k0": 1.0, "alpha": 20.0, "gamma": 22.0,
                    "sigma": 0.0045, "beta": 0.001, "sensing_radius": 3.5},
        "adaptive": {"gamma_rate": 5.0, "mu": 1.5, "delta_hat_max": 6.0,
                     "nu_fraction": 0.05, "constant_mode": False},
    }
    doc = {
        "name": "field-25",
        "seed": seed,
        "dt": 0.001,
        "duration": 110.0 if duration is None else duration,
        "record_stride": 50,
        "graph": {"nodes": nodes, "edges": edges},
        "agents": {"positions": grid_positions(5, 0.0, 20.0)},
        "domain": {"bounds": [0.0, 20.0, 0.0, 20.0], "grid_resolution": 64},
        "target": {
            "mode": "waypoints",
            "waypoints": [
                {"position": [2.0, 2.0], "dwell": 3.0},
                {"position": [5.0, 15.0], "travel": 12.0, "dwell": 25.0},
                {"position": [15.0, 15.0], "travel": 10.0, "dwell": 25.0},
                {"position": [15.0, 5.0], "travel": 10.0, "dwell": 25.0},
            ],
        },
        "coverage": {"dt": 0.05, "grid_resolution": 64, "bump_radius": 1.5,
                     "decay": 0.02, "phi_max": 1000.0, "kappa": 1.0,
                     "speed_limit": 1.5, "dGdO_mode": "zero"},
        "channels": {
            "x": {
                "input": "target_x",
                **json.loads(json.dumps(position_channel)),
                "uncertainty": {"kind": "constant", "bounds": [0.0, 5.0], "seed": 11},
            },
            "y": {
                "input": "target_y",
                **json.loads(json.dumps(position_channel)),
                "uncertainty": {"kind": "constant", "bounds": [0.0, 5.0], "seed": 12},
            },
            "v": {
                "input": "target_speed",
                "network": {"a": 1.0, "k0": 1.0, "alpha": 30.0, "gamma": 30.0,
                            "sigma": 0.0033, "beta": 0.001, "sensing_radius": 3.5},
                "adaptive": {"gamma_rate": 8.0, "mu": 1.5, "delta_hat_max": 1.5,
                             "nu_fraction": 0.05, "constant_mode": False},
                "uncertainty": {"kind": "constant", "bounds": [0.0, 1.0], "seed": 13},
            },
        },
    }
    return doc


def load_bundled(name: str) -> dict:
    text = resources.files(__package__).joinpath(name).read_text()
    return json.loads(text)
