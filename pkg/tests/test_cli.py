import json

import numpy as np
import pytest

from jointauction import cli
from jointauction import distributions as dm
from jointauction import market as mk
from jointauction.bundlenet import BundleNet, save_checkpoint


def run(args):
    return cli.main([str(a) for a in args])


def test_exact_subcommand(tmp_path, capsys):
    out = tmp_path / "out"
    assert run(["exact", "--setting", "U_2", "--samples", 2000, "--seed", 3, "--out-dir", out]) == 0
    text = capsys.readouterr().out
    assert "optimal" in text and "rvcg" in text
    assert (out / "exact.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3
    assert "config_hash" in manifest and "wall_time_s" in manifest


def test_exact_rejects_multislot(tmp_path, capsys):
    assert run(["exact", "--setting", "U_5x5", "--out-dir", tmp_path]) == 2
    assert "config error" in capsys.readouterr().err


def test_table_subcommand(tmp_path):
    out = tmp_path / "t"
    assert (
        run(
            [
                "table",
                "--settings",
                "U_2,U_3",
                "--mechanisms",
                "optimal,rvcg",
                "--samples",
                1000,
                "--seed",
                1,
                "--out-dir",
                out,
            ]
        )
        == 0
    )
    lines = (out / "table.csv").read_text().strip().splitlines()
    assert lines[0] == "setting,mechanism,revenue,stderr,regret,samples,seed"
    assert len(lines) == 5


def test_train_and_eval_and_forward(tmp_path, capsys):
    cfg = {
        "train_samples": 100,
        "batch_size": 50,
        "passes": 1,
        "inner_steps": 2,
        "hidden": [4],
        "d_y": 4,
        "log_every": 1,
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / "run"
    assert run(["train", "--config", cfg_path, "--seed", 5, "--out-dir", out]) == 0
    assert (out / "checkpoint.npz").exists()
    assert (out / "history.csv").exists()

    ev_out = tmp_path / "ev"
    assert (
        run(
            [
                "eval",
                "--checkpoint",
                out / "checkpoint.npz",
                "--samples",
                200,
                "--regret-samples",
                50,
                "--out-dir",
                ev_out,
            ]
        )
        == 0
    )
    report = json.loads((ev_out / "eval.json").read_text())
    assert report["revenue"] >= 0.0
    assert report["regret_max_edge"] >= 0.0

    inst = mk.sample_instance(
        mk.fixture_shared_supplier(), dm.get_distribution("u01"), (1.0,), 0.0, 4
    )
    inst_path = tmp_path / "inst.json"
    inst_path.write_text(mk.instance_to_json(inst))
    capsys.readouterr()
    assert run(["forward", "--checkpoint", out / "checkpoint.npz", "--instance", inst_path]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert len(rows) == 2 and "pay_retailer" in rows[0]


def test_train_bad_config_key(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"not_a_key": 1}))
    assert run(["train", "--config", cfg_path, "--out-dir", tmp_path]) == 2
    assert "config error" in capsys.readouterr().err


def test_train_missing_config_file(tmp_path, capsys):
    assert run(["train", "--config", tmp_path / "nope.json", "--out-dir", tmp_path]) == 2
    assert "config error" in capsys.readouterr().err


def test_grid_subcommand_exact(tmp_path):
    out = tmp_path / "g"
    assert (
        run(["grid", "--fixed", "0,0.5", "--resolution", 11, "--out-dir", out]) == 0
    )
    blob = np.load(out / "grid_exact_shared_0.npz")
    assert blob["win"].shape == (11, 11)
    assert blob["boundary"].shape == (11,)
    assert (out / "grid_exact_disjoint_0.5.npz").exists()


def test_grid_subcommand_checkpoint(tmp_path):
    ck = tmp_path / "ck.npz"
    save_checkpoint(ck, BundleNet(2, 1, hidden=(4,), d_y=4, seed=0))
    out = tmp_path / "g"
    assert (
        run(
            ["grid", "--checkpoint", ck, "--fixed", "0.25", "--resolution", 7, "--out-dir", out]
        )
        == 0
    )
    blob = np.load(out / "grid_bundlenet_shared_0.25.npz")
    assert blob["win"].shape == (7, 7)


def test_selftest_green(capsys):
    assert run(["selftest"]) == 0
    assert "FAIL" not in capsys.readouterr().out
