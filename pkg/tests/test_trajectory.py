import numpy as np
import pytest

from apnet.trajectory import (
    ExternalTrack,
    Waypoint,
    WaypointTrack,
    interp_boundaries,
    stage_times,
)


def tour():
    return WaypointTrack([
        Waypoint(np.array([0.0, 0.0]), travel=0.0, dwell=2.0),
        Waypoint(np.array([4.0, 0.0]), travel=4.0, dwell=3.0),
        Waypoint(np.array([4.0, 3.0]), travel=3.0, dwell=1.0),
    ])


def test_waypoint_track_schedule():
    track = tour()
    assert track.duration == pytest.approx(13.0)
    # dwell [0,2], move [2,6], dwell [6,9], move [9,12], dwell [12,13]
    pos, vel, speed = track.sample([0.0, 1.0, 4.0, 7.0, 13.0, 99.0])
    assert np.allclose(pos[0], [0, 0])
    assert np.allclose(pos[1], [0, 0])      # dwelling
    assert np.allclose(pos[2], [2.0, 0.0])  # smoothstep midpoint of the move
    assert np.allclose(pos[3], [4.0, 0.0])  # second dwell
    assert np.allclose(pos[4], [4.0, 3.0])
    assert np.allclose(pos[5], [4.0, 3.0])  # holds after the tour
    assert speed[1] == 0.0 and speed[3] == 0.0


def test_waypoint_velocity_is_continuous_and_bounded():
    track = tour()
    ts = np.linspace(0, 13, 2601)
    pos, vel, speed = track.sample(ts)
    # C1: velocity zero at segment joins, below the declared ceiling everywhere
    assert speed.max() <= track.speed_bound() * (1 + 1e-9)
    fd = np.linalg.norm(np.diff(pos, axis=0), axis=1) / np.diff(ts)
    assert fd.max() <= track.speed_bound() * (1 + 1e-3)
    # peak speed of a smoothstep move is exactly 1.5 d / T
    assert speed.max() == pytest.approx(1.5 * 4.0 / 4.0, rel=1e-4)


def test_waypoint_bounds_cover_samples():
    track = tour()
    ts = np.linspace(0, 14, 1000)
    pos, vel, _ = track.sample(ts)
    pb = track.position_bound()
    rb = track.rate_bound()
    assert np.all(np.abs(pos) <= pb + 1e-12)
    assert np.all(np.abs(vel) <= rb + 1e-12)


def test_external_track_rate_limit_and_hold():
    track = ExternalTrack([0.0, 0.0], v_max=10.0, dt=0.01)
    track.command(1.0, 0.0, seq=1)
    pos, speed = track.advance_steps(8)
    # 8 steps at <= 0.1 m each
    assert np.all(np.linalg.norm(np.diff(pos, axis=0), axis=1) <= 0.1 + 1e-12)
    assert pos[-1][0] <= 0.8 + 1e-12
    pos2, speed2 = track.advance_steps(5)
    assert pos2[-1] == pytest.approx([1.0, 0.0])  # arrived and holds
    # derived speed approaches v_max during the approach, decays after arrival
    assert speed2[0] > 0.0
    _, speed3 = track.advance_steps(30)
    assert speed3[-1] == 0.0


def test_external_track_speed_window():
    # 1 m commanded jump covered in 0.1 s reads 1 m over the 0.2 s window
    track = ExternalTrack([0.0, 0.0], v_max=10.0, dt=0.01)
    track.command(1.0, 0.0, seq=1)
    _, speed = track.advance_steps(10)  # pursuit arrives in exactly 0.1 s
    assert speed[-1] == pytest.approx(5.0, abs=1e-9)
    # sustained motion at the limit reads exactly v_max
    track2 = ExternalTrack([0.0, 0.0], v_max=5.0, dt=0.01)
    track2.command(100.0, 0.0, seq=1)
    _, speed = track2.advance_steps(40)
    assert speed[-1] == pytest.approx(5.0, rel=1e-9)


def test_external_track_command_log():
    track = ExternalTrack([0.0, 0.0], v_max=1.0, dt=0.1)
    track.command(1.0, 2.0, seq=5)
    track.advance_steps(3)
    track.command(2.0, 1.0, seq=6)
    assert track.command_log == [(0, 1.0, 2.0, 5), (3, 2.0, 1.0, 6)]


def test_stage_times_grid():
    ts = stage_times(1.0, 0.01, 3)
    assert ts.shape == (7,)
    assert ts[0] == 1.0 and ts[-1] == pytest.approx(1.03)
    assert np.allclose(np.diff(ts), 0.005)


def test_interp_boundaries():
    vals = np.array([[0.0, 0.0], [2.0, 4.0], [4.0, 8.0]])
    out = interp_boundaries(vals, 2)
    assert out.shape == (5, 2)
    assert np.allclose(out[:, 0], [0, 1, 2, 3, 4])
    assert np.allclose(out[:, 1], [0, 2, 4, 6, 8])
