import json
import math
import os
import subprocess
from pathlib import Path

import numpy as np
import pytest

import tikmv

ROOT = Path(__file__).resolve().parents[2]
LAMBDA0 = 1 + math.sqrt(2) * math.tanh(math.sqrt(2))


def test_riccati_closed_form():
    grid = tikmv.TimeGrid(1.0, 1000)
    r = tikmv.solve_riccati_smp(tikmv.LQModel.scalar(), grid)
    assert r["lambda"].shape == (1001, 1, 1)
    assert abs(r["lambda"][0, 0, 0] - LAMBDA0) < 1e-6
    assert r["lambda"][-1, 0, 0] == 1.0
    assert np.all(r["theta"] == 0.0)


def test_twoscale_riccati_shapes():
    grid = tikmv.TimeGrid(1.0, 200)
    r = tikmv.solve_riccati_twoscale(tikmv.LQModel.scalar(), 1e-3, grid)
    assert r["lambda"].shape == (201, 1, 2)
    assert abs(r["lambda"][0, 0, 0] - LAMBDA0) < 2e-2
    with pytest.raises(ValueError):
        tikmv.solve_riccati_twoscale(tikmv.LQModel.scalar(), 0.1, grid, method="euler")


def test_simulations_share_noise():
    grid = tikmv.TimeGrid(1.0, 100)
    model = tikmv.LQModel.scalar()
    opt = tikmv.simulate_lq_optimal(model, grid, 64, seed=5)
    assert opt["X"].shape == (64, 101, 1)
    lam = tikmv.solve_riccati_smp(model, grid)["lambda"][:, 0, 0]
    np.testing.assert_allclose(opt["Y"][:, :, 0], lam * opt["X"][:, :, 0], rtol=0, atol=1e-12)
    np.testing.assert_allclose(opt["A"], -opt["Y"], atol=1e-12)

    coarse = tikmv.simulate_lq_twoscale(model, 0.1, grid, 64, seed=5)
    fine = tikmv.simulate_lq_twoscale(model, 0.001, grid, 64, seed=5)
    assert np.all(coarse["X"][:, 0] == opt["X"][:, 0])
    assert tikmv.s2_distance(fine["X"], opt["X"]) < tikmv.s2_distance(coarse["X"], opt["X"])
    assert tikmv.h2_distance(opt["X"], opt["X"]) == 0.0


def test_distances():
    ramp = np.linspace(0, 1, 101).reshape(1, 101, 1)
    zero = np.zeros_like(ramp)
    assert tikmv.s2_distance(ramp, zero) == pytest.approx(1.0)
    assert abs(tikmv.h2_distance(ramp, zero) - 1 / math.sqrt(3)) < 0.02
    assert tikmv.wasserstein2_1d([0, 2], [2, 0]) == 0.0
    assert tikmv.wasserstein2_1d([0], [3]) == pytest.approx(3.0)


def test_run_study(tmp_path):
    cfg = tmp_path / "lq.json"
    cfg.write_text(json.dumps({
        "version": 1,
        "model": {"b1": 1, "b2": 1, "q": 1, "r": 1, "sigma": 1, "q_term": 1},
        "N": 50, "M": 30, "seed": 4, "eps_list": [0.5, 0.05],
    }))
    out = tikmv.run_study(str(cfg))
    cols = out["columns"]
    assert list(cols["eps"]) == [0.5, 0.05]
    assert np.all(np.isfinite(cols["h2_error_A"]))
    assert out["metadata"]["seed"] == "4"
    assert tikmv.run_study(str(cfg), eps=[0.1])["columns"]["eps"].tolist() == [0.1]
    assert tikmv.run_study(str(cfg), kind="frozen")["metadata"]["frozen_source"] == "reference"
    with pytest.raises(ValueError, match="o\\(eps\\)"):
        tikmv.run_study(str(ROOT / "configs/negative/linear_beta.json"))


def test_main_entry(tmp_path):
    code = tikmv.main(["riccati", "--quiet", "--config", str(ROOT / "configs/lq_sweep.json"),
                       "--out", str(tmp_path), "--eps", "0.1"])
    assert code == 0
    assert (tmp_path / "riccati_smp.csv").exists()
    assert tikmv.main(["riccati", "--quiet", "--config", str(tmp_path / "missing.json")]) == 2


@pytest.mark.skipif("TIKMV_CLI" not in os.environ, reason="command line binary not provided")
def test_cli_binary(tmp_path):
    done = subprocess.run([os.environ["TIKMV_CLI"], "riccati", "--quiet", "--config",
                           str(ROOT / "configs/zero_cost.json"), "--out", str(tmp_path)])
    assert done.returncode == 0
    assert (tmp_path / "riccati_smp.csv").read_text().splitlines()[1].startswith("0,0,")
