import json

import numpy as np
import pytest

from apnet.diagnostics import check_theorem1
from apnet.engine import Trace, run_scenario
from apnet.graph import build_graph
from apnet.scenario import load_scenario
from apnet.traceio import column_names, export_metrics, read_csv, summarize, write_csv
from test_engine import SIX_EDGES, nominal_doc


def small_trace():
    doc = nominal_doc(duration=0.2)
    return run_scenario(load_scenario(doc)), load_scenario(doc)


def test_csv_roundtrip_exact(tmp_path):
    trace, _ = small_trace()
    path = write_csv(trace, tmp_path / "trace.csv")
    data = read_csv(path)
    names = column_names(trace)
    assert list(data.keys()) == names
    # shortest-repr floats reload exactly
    assert np.array_equal(data["t"], trace["t"])
    col = f"x.x.3"
    assert np.array_equal(data[col], trace["x"][:, 2, 0])


def test_empty_trace_header_only(tmp_path):
    trace = Trace(channel_names=("x",), node_count=6, edge_count=7, record_dt=0.01)
    trace.finalize()
    path = write_csv(trace, tmp_path / "empty.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 1
    assert lines[0].split(",")[0] == "t"


def test_summary_schema(tmp_path):
    trace, cfg = small_trace()
    g = build_graph(6, SIX_EDGES)
    report = check_theorem1(trace, 0, cfg.channels[0].network, g, 3.0, 0.0)
    paths = export_metrics(trace, tmp_path, {"consensus": report})
    summary = json.loads(paths["summary"].read_text())
    assert summary["channels"] == ["x"]
    assert "consensus" in summary["bounds"]
    assert set(summary["bounds"]["consensus"]) >= {"bounds", "observed", "satisfied"}
    assert isinstance(summary["bounds"]["consensus"]["satisfied"]["delta_sq"], bool)
    assert paths["trace"].exists()


def test_column_order_documented_layout():
    trace, _ = small_trace()
    names = column_names(trace)
    assert names[0] == "t"
    assert names[1] == "x.x.1"  # first signal block: x, channel x, agent 1
    # fleet columns come in x/y pairs
    ox = names.index("positions.1.x")
    assert names[ox + 1] == "positions.1.y"


def test_nan_summary_fields(tmp_path):
    trace, _ = small_trace()
    summary = summarize(trace)
    # no coverage layer: H and J are null, not NaN, in JSON
    assert summary["final"]["coverage_H"] is None
    text = json.dumps(summary)
    assert "NaN" not in text
