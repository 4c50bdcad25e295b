import os
import subprocess

import numpy as np
import pytest

import loopsift


def small_config():
    c = loopsift.ScenarioConfig()
    c.frames = 60
    c.width = 32
    c.height = 24
    c.fx = c.fy = 25.0
    c.min_loop_gap = 20
    c.true_loops = 3
    c.false_loops = 2
    return c


def test_pose_round_trip():
    xi = np.array([0.1, -0.2, 0.3, 1.0, 2.0, -0.5])
    p = loopsift.se3_exp(xi)
    np.testing.assert_allclose(loopsift.se3_log(p), xi, atol=1e-9)
    q = loopsift.Pose(p.matrix())
    np.testing.assert_allclose((q * p.inverse()).matrix(), np.eye(4), atol=1e-12)


def test_generate_and_sift():
    s = loopsift.generate(small_config(), 7)
    assert s.frame_count == 60
    assert s.depth(0).shape == (24, 32)
    assert len(s.candidates) == 5
    result = loopsift.sift_scenario(s, k=10)
    false_ids = {c["id"] for c in s.candidates if not c["is_true"]}
    assert not false_ids & set(result["accepted"])
    assert result["final_score"] <= result["baseline_score"]
    assert len(result["trace"]) == 5
    before = loopsift.trajectory_rmse(result["baseline_trajectory"], s.ground_truth)
    after = loopsift.trajectory_rmse(result["final_trajectory"], s.ground_truth)
    assert after <= before


def test_precision_recall_and_errors():
    assert loopsift.precision_recall([], {0: True}) == (100.0, 0.0)
    assert loopsift.precision_recall([0, 1], {0: True, 1: False, 2: True}) == (50.0, 50.0)
    c = small_config()
    c.frames = 0
    with pytest.raises(ValueError):
        loopsift.generate(c, 1)


def test_cli_entry_points(tmp_path):
    out = tmp_path / "scenario"
    args = ["synth", "--out", str(out), "--frames", "60", "--width", "32", "--height", "24",
            "--focal", "25", "--min-loop-gap", "20", "--true-loops", "2", "--false-loops", "1"]
    assert loopsift.run_cli(args) == 0
    assert (out / "candidates.csv").exists()
    cli = os.environ.get("LOOPSIFT_CLI")
    if cli:
        sift_out = tmp_path / "sift"
        done = subprocess.run([cli, "sift", "--input", str(out), "--out", str(sift_out), "--k", "10"],
                              capture_output=True)
        assert done.returncode == 0
        assert (sift_out / "trace.csv").read_text().count("\n") == 4
