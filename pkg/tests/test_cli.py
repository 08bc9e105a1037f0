import csv
import io
import json

import pytest

from dias.cli import main

CFG = {"dim": 6, "epochs": 1, "val_size": 10,
       "batch": {"clusters_M": 2, "per_cluster_P": 4, "kmeans_k": 3, "kmeans_iters": 3}}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(CFG))
    assert main(["--out", str(root / "data"), "--seed", "2", "gen-synth",
                 "--num-pairs", "30", "--d-in", "6", "--latent-dim", "3"]) == 0
    assert main(["--config", str(cfg), "--out", str(root / "run"), "train",
                 "--corpus", str(root / "data" / "corpus.json")]) == 0
    return root


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_train_outputs(workspace):
    run = workspace / "run"
    assert {p.name for p in run.iterdir()} >= {"train_log.jsonl", "state.npz", "eval_report.json", "config.json"}
    assert json.loads((run / "config.json").read_text())["dim"] == 6


def test_eval_json(workspace, capsys):
    assert main(["--out", str(workspace / "ev"), "eval", "--corpus", str(workspace / "data" / "corpus.json"),
                 "--state", str(workspace / "run" / "state.npz"), "--folds", "5"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert list(rep) == ["i2t_r1", "i2t_r5", "i2t_r10", "t2i_r1", "t2i_r5", "t2i_r10", "rsum"]


def test_histogram_csv(workspace, capsys):
    assert main(["histogram", "--corpus", str(workspace / "data" / "corpus.json"),
                 "--state", str(workspace / "run" / "state.npz"), "--bins", "4", "--limit", "10"]) == 0
    out = rows(capsys.readouterr().out)
    assert out[0] == ["bin_start", "bin_end", "count"]
    assert sum(int(r[2]) for r in out[1:]) == 10 * 9


def test_inspect_mask_csv(workspace, capsys):
    assert main(["inspect-mask", "--corpus", str(workspace / "data" / "corpus.json"),
                 "--state", str(workspace / "run" / "state.npz"), "--limit", "4"]) == 0
    out = rows(capsys.readouterr().out)
    assert out[0] == ["i", "j", "residual", "threshold_row", "threshold_col", "selected"]
    assert len(out) == 1 + 16
    assert {r[5] for r in out[1:]} <= {"0", "1"}


def test_gradcheck_exit_code(capsys):
    code = main(["gradcheck", "--n", "3", "--dim", "4"])
    out = rows(capsys.readouterr().out)
    assert {r[0] for r in out[1:]} >= {"triplet", "dim_normalized", "inter_dense", "intra_dense", "total"}
    assert code == (0 if all(r[5] == "1" for r in out[1:]) else 1)


def test_usage_error(tmp_path, capsys):
    assert main(["eval", "--corpus", str(tmp_path / "missing.json"), "--state", "x.npz"]) == 2
    assert "error" in capsys.readouterr().err
