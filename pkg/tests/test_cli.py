import json

import numpy as np
import pytest

from s2vs import config as cfgmod
from s2vs.cli import COMMANDS, build_parser, main
from s2vs.errors import ConfigError
from s2vs.evaluation import EvalRun

TINY = ["--set", "iterations=3", "--set", "warmup_iterations=1", "--set", "batch_size=4", "--set", "T_B=8",
        "--set", "H_B=32", "--set", "num_videos=4", "--set", "duration_range=(4, 6)", "--set", "motif_count=1",
        "--set", "frame_size=(40, 48)", "--set", "whitening_dim=16"]


def test_presets_load():
    desk = cfgmod.load(cfgmod.preset_path("desk"))
    assert desk.train.iterations == 2000 and desk.train.warmup_iters == 100
    full = cfgmod.load(cfgmod.preset_path("full"))
    assert full.train.iterations == 30000 and full.train.batch_videos == 32
    assert full.train.lr == 5e-5 and full.train.loss.tau == 0.03 and full.train.loss.lam == 3


def test_config_round_trip():
    cfg = cfgmod.load(cfgmod.preset_path("desk"), {"tau": 0.07, "use_hn": False, "lambda_viv": (0.4, 0.6)})
    again = cfgmod.build(cfgmod.parse_text(cfgmod.dump(cfg)))
    assert again == cfg
    assert cfg.train.loss.tau == 0.07 and not cfg.train.loss.use_hn


@pytest.mark.parametrize("text", ["nope = 1", "iterations = 1.5", "use_ss = maybe", "batch_size = 7",
                                  "lambda_viv = 0.3", "iterations"])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        cfgmod.build(cfgmod.parse_text(text))


def test_help_lists_every_key(capsys):
    for name in COMMANDS:
        with pytest.raises(SystemExit):
            build_parser().parse_args([name, "--help"])
        text = capsys.readouterr().out
        for key in cfgmod.KEYS:
            assert key.name in text, (name, key.name)


def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["bogus"]) == 2
    assert main(["score", "--a", "x"]) == 2


def test_library_errors_map_to_exit_codes(tmp_path, capsys):
    assert main(["score", "--ckpt", str(tmp_path / "none.pt"), "--a", "x", "--b", "y"]) == 10
    assert main(["train", "--out", str(tmp_path), "--set", "batch_size=5"]) == 3
    (tmp_path / "bad.pt").write_bytes(b"bad")
    assert main(["score", "--ckpt", str(tmp_path / "bad.pt"), "--a", "x", "--b", "y"]) == 12
    assert "error:" in capsys.readouterr().err


def test_end_to_end(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    assert main(["make-synthetic", "--out", str(corpus), *TINY]) == 0
    for run in ("a", "b"):
        assert main(["train", "--out", str(tmp_path / run), "--corpus", str(corpus), "--seed", "7", *TINY]) == 0
    log_a = (tmp_path / "a" / "train_log.jsonl").read_text()
    assert log_a == (tmp_path / "b" / "train_log.jsonl").read_text()
    assert len(log_a.splitlines()) == 3
    assert "seed = 7" in (tmp_path / "a" / "config.cfg").read_text()
    ckpt = str(tmp_path / "a" / "checkpoint.pt")
    capsys.readouterr()

    vid0, vid1 = str(corpus / "vid0000"), str(corpus / "vid0001")
    assert main(["score", "--ckpt", ckpt, "--a", vid0, "--b", vid1]) == 0
    value = float(capsys.readouterr().out)
    assert 0.0 <= value <= 1.0

    assert main(["extract", "--ckpt", ckpt, "--corpus", str(corpus), "--out", str(tmp_path / "feats")]) == 0
    capsys.readouterr()
    assert main(["score", "--ckpt", ckpt, "--a", str(tmp_path / "feats" / "vid0000.s2vf"),
                 "--b", str(tmp_path / "feats" / "vid0001.s2vf")]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(value, abs=1e-5)

    assert main(["evaluate", "--ckpt", ckpt, "--corpus", str(corpus), "--out", str(tmp_path / "ev")]) == 0
    metrics = json.loads((tmp_path / "ev" / "metrics.json").read_text())
    assert 0 <= metrics["mAP"] <= 100 and 0 <= metrics["uAP"] <= 100
    capsys.readouterr()
    assert main(["evaluate", "--run", str(tmp_path / "ev" / "run.csv")]) == 0
    assert f"{metrics['mAP']:.2f}" in capsys.readouterr().out

    assert main(["dump-simmatrix", "--ckpt", ckpt, "--a", vid0, "--transform", "reverse",
                 "--out", str(tmp_path / "m" / "rev")]) == 0
    assert "anti-diagonal dominance" in capsys.readouterr().out
    assert (tmp_path / "m" / "rev_raw.csv").exists() and (tmp_path / "m" / "rev_filtered.pgm").exists()


@pytest.mark.filterwarnings("ignore:skipping")
def test_normalize_and_hard_subset_commands(tmp_path, capsys):
    run = EvalRun({"a": {"x": 0.9, "y": 0.1}, "b": {"x": 0.3, "y": 0.8}}, {"a": {"x"}, "b": {"x"}})
    run.to_csv(tmp_path / "run.csv")
    EvalRun({"a": {"z1": 0.5, "z2": 0.7}, "b": {"z1": 0.1, "z2": 0.2}}).to_csv(tmp_path / "bg.csv")
    assert main(["normalize", "--run", str(tmp_path / "run.csv"), "--background", str(tmp_path / "bg.csv"),
                 "--k", "1", "--out", str(tmp_path / "norm.csv")]) == 0
    normed = EvalRun.from_csv(tmp_path / "norm.csv")
    assert normed.scores["a"]["x"] == pytest.approx(0.2)
    assert main(["normalize", "--run", str(tmp_path / "run.csv"), "--background", str(tmp_path / "bg.csv"),
                 "--k", "3", "--out", str(tmp_path / "n3.csv")]) == 3
    capsys.readouterr()

    assert main(["hard-subset", "--models", f"{tmp_path / 'run.csv'},{tmp_path / 'run.csv'}",
                 "--out", str(tmp_path / "hard")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["removed"] == 1
    removed = (tmp_path / "hard" / "removed.csv").read_text().splitlines()
    assert removed == ["query_id,candidate_id", "a,x"]
    hard = EvalRun.from_csv(tmp_path / "hard" / "hard_run.csv")
    assert "x" not in hard.scores["a"]
    assert np.isclose(summary["runs"][str(tmp_path / "run.csv")]["hard_mAP"], 50.0)
