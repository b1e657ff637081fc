import pathlib

import numpy as np
import pytest

import icub_avatar as av

ROOT = pathlib.Path(__file__).resolve().parents[2]


def test_model_constants():
    m = av.model()
    assert m["dofs"] == 54
    assert len(av.joint_names()) == 54
    assert all(lo < hi for lo, hi in av.joint_limits())
    groups = [(g["name"], g["dofs"]) for g in m["joint_layout"]["groups"]]
    assert sum(n for _, n in groups) == 54


def test_min_jerk_endpoints_and_midpoint():
    assert av.min_jerk(0.3, 1.7, 2.0, 5.0, 5.0) == (0.3, 0.0, 0.0)
    assert av.min_jerk(0.3, 1.7, 2.0, 5.0, 7.0) == (1.7, 0.0, 0.0)
    assert av.min_jerk(0.0, 1.0, 1.0, 0.0, 0.5)[0] == pytest.approx(0.5, abs=1e-15)


def test_qp_matches_closed_form_projection():
    # min |x - c|^2 over x0 + x1 <= 1: projection onto a half-plane.
    c = np.array([2.0, 1.0])
    r = av.solve_qp(2 * np.eye(2), -2 * c, C=np.array([[1.0, 1.0]]), d=np.array([1.0]))
    assert r["status"] == "optimal"
    expected = c - (c.sum() - 1.0) / 2.0
    np.testing.assert_allclose(r["x"], expected, atol=1e-10)
    assert r["kkt"] <= 1e-8


def test_brake_force_clipped():
    rng = np.random.default_rng(0)
    for _ in range(200):
        assert max(av.finger_brake_forces(list(rng.uniform(-10, 400, 5)))) <= 20.0


def test_pose_preset_within_limits():
    q = av.pose_preset("grasp")
    for v, (lo, hi) in zip(q, av.joint_limits()):
        assert lo - 1e-12 <= v <= hi + 1e-12
    with pytest.raises(ValueError):
        av.pose_preset("moonwalk")


def test_stack_walks_and_routes_touch():
    s = av.make_stack({"links": {"uplink": {"one_way_delay_ms": 10.0, "jitter_ms": 0.0, "loss": 0.0, "seed": 1}}})
    s.send_walk(0.0, 0.2)
    s.run_for(5.0)
    assert s.base_position[0] > 0.3
    assert s.faults == []
    assert s.min_zmp_margin_executed > 0.005
    s.request_touch("left_hand", 0.7)
    s.run_for(0.2)
    assert len(s.haptic_latencies_ms) == 1
    assert s.haptic_latencies_ms[0] <= 50.0
    with pytest.raises(ValueError):
        s.send_walk(0.0, 5.0)


def test_latency_probe():
    s = av.make_stack()
    st = s.measure_latency(probes=20, window_s=1.0)
    assert st["samples"] == 20
    assert st["mean_ms"] == pytest.approx(10.0)


def test_bad_config_raises():
    with pytest.raises(av.SimError):
        av.make_stack({"sim": {"no_such_key": 1}})


def test_venice_scenario():
    report = av.run_scenario(ROOT / "scenarios" / "venice.scn")
    assert report["passed"]
    assert all(c["passed"] for c in report["checkpoints"])
    assert report["zmp"]["min_margin_executed"] >= 0.005
