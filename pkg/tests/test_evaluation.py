import csv
import json

import numpy as np
import pytest

from dt4ier.config import ModelConfig, WorldConfig
from dt4ier.evaluation import (
    DEFAULT_SWEEP, evaluate, format_report, free_rollouts, load_report, predict_sessions, retention_share,
    rtg_sweep, save_report, validate_report,
)
from dt4ier.training import train
from dt4ier.trajectory import build_trajectories
from dt4ier.world import SyntheticWorld


@pytest.fixture(scope="module")
def setup():
    w = SyntheticWorld(WorldConfig(num_users=10, num_items=60, num_topics=2, sessions_per_user=5, N=5, H=5, T=5, seed=4))
    users = w.users()
    feats = {u.user_id: u for u in users}
    trajs = build_trajectories(w.log(users), T=5, H=5, N=5)
    ckpt = train(ModelConfig(T=5, H=5, N=5, d=8, heads=2, batch_size=4, max_steps=3, seed=0), trajs, feats)
    return w, feats, trajs, ckpt


def test_report_structure_and_determinism(setup, tmp_path):
    _, feats, trajs, ckpt = setup
    rep = evaluate(ckpt, trajs, 0.8, feats)
    validate_report(rep)
    assert rep["rho"] == [0.8, 0.8] and rep["mode"] == "teacher"
    assert rep["counts"] == {"trajectories": 10, "sessions": 50}
    assert rep["config_hash"] == ckpt.config.digest()
    assert sum(c["n"] for c in rep["sb_urs_classes"]) == 50
    assert evaluate(ckpt, trajs, 0.8, feats) == rep
    save_report(rep, tmp_path / "r.json")
    assert load_report(tmp_path / "r.json") == rep
    assert "bleu" in format_report(rep)


def test_free_mode_with_world(setup):
    w, feats, trajs, ckpt = setup
    a = evaluate(ckpt, trajs, (1.0, 0.2), feats, mode="free", world=w, seed=3)
    b = evaluate(ckpt, trajs, (1.0, 0.2), feats, mode="free", world=w, seed=3)
    assert a == b and a["mode"] == "free"
    preds = free_rollouts(ckpt, trajs, feats, 1.0, w)
    share = retention_share(preds, w.is_retention)
    assert 0.0 <= share <= 1.0


def test_invalid_inputs(setup):
    _, feats, trajs, ckpt = setup
    with pytest.raises(ValueError):
        evaluate(ckpt, [], 1.0, feats)
    for rho in (0.0, 1.1, (1.0, -0.1)):
        with pytest.raises(ValueError):
            evaluate(ckpt, trajs, rho, feats)
    with pytest.raises(ValueError):
        evaluate(ckpt, trajs, 1.0, feats, mode="beam")
    rep = evaluate(ckpt, trajs, 1.0, feats)
    rep["metrics"]["bleu"] = 2.0
    with pytest.raises(Exception):
        validate_report(rep)


def test_predict_sessions_shapes(setup):
    _, feats, trajs, ckpt = setup
    preds = predict_sessions(ckpt, trajs, feats, rho=None, batch_size=3)
    assert len(preds) == len(trajs)
    assert all(len(p) == tr.length and all(len(x) == 5 for x in p) for p, tr in zip(preds, trajs))


def test_sweep_is_fan_out(setup, tmp_path):
    _, feats, trajs, ckpt = setup
    assert DEFAULT_SWEEP == (0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    rows = rtg_sweep(ckpt, trajs, DEFAULT_SWEEP, feats, csv_path=tmp_path / "s.csv", json_path=tmp_path / "s.json")
    assert len(rows) == 7
    for row in rows[::3]:
        single = evaluate(ckpt, trajs, row["rho"], feats)["metrics"]
        assert {k: v for k, v in row.items() if k != "rho"} == single
    with open(tmp_path / "s.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 7
    plot = json.loads((tmp_path / "s.json").read_text())
    assert plot["x"] == list(DEFAULT_SWEEP) and len(plot["series"]["bleu"]) == 7
    with pytest.raises(ValueError):
        rtg_sweep(ckpt, trajs, [0.0], feats)


def test_retention_share():
    is_ret = np.array([False, True, False, True])
    assert retention_share([[np.array([1, 3]), np.array([2, 0])]], is_ret) == pytest.approx(0.5)
