import json
import time

import numpy as np
import pytest
import yaml

from pgformer import cli
from pgformer.data import load_scene_file
from pgformer.numerics import module as nn_module
from pgformer.numerics import tensor as tensor_module

TINY_RUN = dict(T=6, K=3, J=9, D=16, L=1, H=2, d_h=8, d_ffn=16, M=2, M_q=2, gcn_hidden=4,
                epochs=2, batch_size=16, horizons=[0.04, 0.12], max_horizon=0.2, eval_stride=4,
                stride=2)


@pytest.fixture(scope="module")
def synth_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    (d / "synth.yaml").write_text(yaml.safe_dump({"n_sequences": 2, "n_frames": 40, "seed": 1}))
    assert cli.main(["synth", "--config", str(d / "synth.yaml"), "--out", str(d / "s.pgm")]) == 0
    return d / "s.pgm"


def _config(tmp_path, data, **kw):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump({**TINY_RUN, "data": str(data), "out": str(tmp_path / "out"), **kw}))
    return path


# ----------------------------------------------------------------------
def test_synth_loadable_and_byte_identical(tmp_path, synth_file):
    scenes, sk = load_scene_file(synth_file)
    assert len(scenes) == 2 and sk.joint_count == 9
    cfg = tmp_path / "synth.yaml"
    cfg.write_text(yaml.safe_dump({"n_sequences": 2, "n_frames": 40}))
    cli.main(["synth", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path / "again.pgm")])
    assert (tmp_path / "again.pgm").read_bytes() == synth_file.read_bytes()


def test_synth_empty_and_bad_paths(tmp_path):
    cfg = tmp_path / "zero.yaml"
    cfg.write_text("n_sequences: 0\n")
    assert cli.main(["synth", "--config", str(cfg), "--out", str(tmp_path / "z.pgm")]) == 0
    assert load_scene_file(tmp_path / "z.pgm")[0] == []
    assert cli.main(["synth", "--out", str(tmp_path / "missing" / "x.pgm")]) == 2
    cfg.write_text("bogus_key: 1\n")
    assert cli.main(["synth", "--config", str(cfg), "--out", str(tmp_path / "y.pgm")]) == 2


def test_usage_errors(tmp_path, synth_file, capsys):
    assert cli.main([]) == 2
    assert cli.main(["train", "--config", str(tmp_path / "nope.yaml")]) == 2
    missing = tmp_path / "absent.pgm"
    assert cli.main(["train", "--config", str(_config(tmp_path, missing))]) == 2
    assert str(missing) in capsys.readouterr().err
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"data": str(synth_file), "learning_rate": 0.1}))
    assert cli.main(["train", "--config", str(bad)]) == 2
    assert "learning_rate" in capsys.readouterr().err


def test_train_deterministic_and_fast(tmp_path, synth_file):
    cfg = _config(tmp_path, synth_file)
    logs = []
    for run in ("a", "b"):
        t0 = time.time()
        assert cli.main(["train", "--config", str(cfg), "--seed", "7", "--out", str(tmp_path / run)]) == 0
        assert time.time() - t0 < 60
        logs.append((tmp_path / run / "loss_log.jsonl").read_text())
        for name in ("best.ckpt", "final.ckpt", "loss_log.txt", "run_config.json"):
            assert (tmp_path / run / name).is_file()
    assert logs[0] == logs[1]
    assert len(logs[0].splitlines()) == 2
    assert json.loads((tmp_path / "a" / "run_config.json").read_text())["seeds"] == [7]


def test_eval_and_predict(tmp_path, synth_file, capsys):
    cfg = _config(tmp_path, synth_file)
    assert cli.main(["train", "--config", str(cfg), "--out", str(tmp_path / "m")]) == 0
    ckpt = str(tmp_path / "m" / "final.ckpt")
    capsys.readouterr()
    out = tmp_path / "ev"
    assert cli.main(["eval", "--checkpoint", ckpt, "--data", str(synth_file), "--out", str(out)]) == 0
    rows = [json.loads(l) for l in (out / "metrics.jsonl").read_text().splitlines()]
    avg = [r for r in rows if r["action"] == "average"]
    assert [r["horizon"] for r in avg] == [0.2, 0.4, 0.6, 1.0]
    assert all(np.isfinite(r["jme"]) and np.isfinite(r["ame"]) for r in rows)
    assert (out / "per_joint.csv").read_text().startswith("person,joint,error_mm")
    assert cli.main(["eval", "--predictor", "ground_truth", "--data", str(synth_file),
                     "--out", str(tmp_path / "gt")]) == 0
    gt_rows = [json.loads(l) for l in (tmp_path / "gt" / "metrics.jsonl").read_text().splitlines()]
    assert all(r["jme"] == 0.0 for r in gt_rows)
    assert cli.main(["eval", "--checkpoint", ckpt, "--data", str(synth_file), "--horizons", "0.2,1.4"]) == 2
    assert "max-horizon" in capsys.readouterr().err
    pred = tmp_path / "pred.pgm"
    assert cli.main(["predict", "--checkpoint", ckpt, "--data", str(synth_file), "--out", str(pred),
                     "--frames", "7"]) == 0
    scenes, _ = load_scene_file(pred)
    assert scenes[0].poses.shape == (2, 7, 9, 3)
    assert cli.main(["eval", "--checkpoint", str(tmp_path / "none.ckpt"), "--data", str(synth_file)]) == 2


def test_eval_skeleton_mismatch(tmp_path, capsys):
    cfg = tmp_path / "s.yaml"
    cfg.write_text("n_sequences: 2\nn_frames: 30\nJ: 5\n")
    cli.main(["synth", "--config", str(cfg), "--out", str(tmp_path / "j5.pgm")])
    cfg.write_text("n_sequences: 2\nn_frames: 30\n")
    cli.main(["synth", "--config", str(cfg), "--out", str(tmp_path / "j9.pgm")])
    assert cli.main(["train", "--config", str(_config(tmp_path, tmp_path / "j9.pgm")),
                     "--out", str(tmp_path / "m")]) == 0
    capsys.readouterr()
    assert cli.main(["eval", "--checkpoint", str(tmp_path / "m" / "final.ckpt"),
                     "--data", str(tmp_path / "j5.pgm")]) == 2
    err = capsys.readouterr().err
    assert "J=9" in err and "J=5" in err


# ----------------------------------------------------------------------
def _groups_in(text):
    return [line.split()[0] for line in text.splitlines() if "max rel err" in line]


def test_gradcheck_negative_control(monkeypatch, capsys):
    original = nn_module.linear

    def corrupted(x, w, b=None):
        out = original(x, w, b)
        return tensor_module._node(out.data, (out,), lambda g: (g * 1.1,))

    monkeypatch.setattr(nn_module, "linear", corrupted)
    assert cli.main(["gradcheck", "--max-entries", "2"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_gradcheck_subsample_lists_groups_once(capsys):
    assert cli.main(["gradcheck", "--max-entries", "2"]) == 0
    groups = _groups_in(capsys.readouterr().out)
    from pgformer.config import PGformerConfig
    from pgformer.model import PGformer, parameter_groups
    expected = list(parameter_groups(PGformer(PGformerConfig.tiny())))
    assert groups == expected and len(set(groups)) == len(groups)
    assert cli.main(["gradcheck", "--size", "huge"]) == 2


# ----------------------------------------------------------------------
def test_ablate_two_by_two(tmp_path, synth_file, capsys):
    cfg = _config(tmp_path, synth_file, epochs=1)
    assert cli.main(["ablate", "--config", str(cfg), "--variants", "bt,xqa", "--seeds", "0,1"]) == 0
    out = capsys.readouterr().out
    runs = [l for l in out.splitlines() if l.startswith("run variant=")]
    assert len(runs) == 4
    assert all("isolation ok" in l for l in runs if "variant=bt " in l)
    table = (tmp_path / "out" / "ablation.txt").read_text()
    assert "±" in table and "std" in table
    rows = [l.split()[0] for l in table.splitlines() if l.split() and l.split()[0] in ("bt", "xqa")]
    assert rows == ["bt", "xqa", "bt", "xqa"]     # JME block then AME block
    curves = (tmp_path / "out" / "curves.csv").read_text().splitlines()
    assert curves[0] == "horizon,metric,variant,seed,value"
    assert len(curves) == 1 + 2 * 2 * 2 * 2       # variants x seeds x horizons x metrics


def test_ablate_single_seed_has_no_std(tmp_path, synth_file, capsys):
    cfg = _config(tmp_path, synth_file, epochs=1)
    assert cli.main(["ablate", "--config", str(cfg), "--variants", "xqa+p", "--seed", "3"]) == 0
    assert "±" not in (tmp_path / "out" / "ablation.txt").read_text()


def test_ablate_unknown_variant(tmp_path, synth_file, capsys):
    cfg = _config(tmp_path, synth_file)
    assert cli.main(["ablate", "--config", str(cfg), "--variants", "bt,warp"]) == 2
    err = capsys.readouterr().err
    assert "warp" in err and "gate_mul" in err
