import json

import pytest

from speechscore.cli import run


@pytest.fixture(scope="module")
def corpora(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run(["synth", "--layout", "train", "--n", "10", "--dim", "8", "--seed", "0",
                "--duration-min", "21", "--duration-max", "25",
                "--out", str(root / "tr")]) == 0
    assert run(["synth", "--layout", "test", "--n", "4", "--dim", "8", "--seed", "0",
                "--duration-min", "21", "--duration-max", "25",
                "--out", str(root / "te")]) == 0
    assert run(["synth", "--layout", "paired", "--n", "5", "--dim", "8", "--seed", "0",
                "--duration-min", "21", "--duration-max", "25",
                "--out", str(root / "pa")]) == 0
    return root


def test_synth_record_count(corpora):
    lines = (corpora / "tr" / "manifest.csv").read_text().strip().splitlines()
    assert len(lines) == 11  # header + 10


def test_validate_clean_corpus(corpora):
    assert run(["validate", "--manifest", str(corpora / "tr" / "manifest.csv")]) == 0


def test_validate_corrupt_corpus(corpora, tmp_path):
    import shutil

    shutil.copytree(corpora / "te", tmp_path / "bad")
    embs = sorted(tmp_path.glob("bad/*.emb"))
    embs[0].write_bytes(b"XXXX" + embs[0].read_bytes()[4:])
    assert run(["validate", "--manifest", str(tmp_path / "bad" / "manifest.csv")]) == 2


def test_unknown_flag_exit_1():
    assert run(["kfold", "--bogus"]) == 1


def test_unknown_subcommand_exit_1():
    assert run(["frobnicate"]) == 1


@pytest.fixture(scope="module")
def trained(corpora):
    out = corpora / "run_train"
    code = run(["train", "--manifest", str(corpora / "tr" / "manifest.csv"),
                "--task", "intelligibility", "--epochs", "2", "--hidden", "8",
                "--seed", "0", "--out", str(out)])
    assert code == 0
    return out / "model.bin"


def test_train_outputs(trained, corpora):
    out = trained.parent
    assert trained.exists()
    assert (out / "loss_curve.csv").exists()
    config = json.loads((out / "config.json").read_text())
    assert config["epochs"] == 2
    assert config["seed"] == 0


def test_evaluate(trained, corpora, tmp_path):
    out = tmp_path / "eval"
    assert run(["evaluate", "--model", str(trained),
                "--manifest", str(corpora / "te" / "manifest.csv"),
                "--task", "intelligibility", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert "mse" in summary and "spearman_rho" in summary


def test_kfold_run_directory(corpora, tmp_path):
    out = tmp_path / "run1"
    code = run(["kfold", "--manifest", str(corpora / "tr" / "manifest.csv"),
                "--test-manifest", str(corpora / "te" / "manifest.csv"),
                "--task", "intelligibility", "--k", "3", "--epochs", "1",
                "--batch-size", "1", "--hidden", "8", "--seed", "0",
                "--out", str(out)])
    assert code == 0
    for i in range(3):
        assert (out / "folds" / f"fold_{i}" / "summary.json").exists()
        assert (out / f"loss_curve_{i}.csv").exists()
    agg = json.loads((out / "aggregate.json").read_text())
    assert len(agg["per_fold_mse"]) == 3
    assert (out / "config.json").exists()


def test_kfold_overlapping_corpora_exit_2(corpora, tmp_path):
    code = run(["kfold", "--manifest", str(corpora / "tr" / "manifest.csv"),
                "--test-manifest", str(corpora / "tr" / "manifest.csv"),
                "--task", "intelligibility", "--k", "3", "--epochs", "0",
                "--hidden", "8", "--out", str(tmp_path / "x")])
    assert code == 2


def test_segments(trained, corpora, tmp_path):
    out = tmp_path / "seg"
    assert run(["segments", "--model", str(trained),
                "--manifest", str(corpora / "te" / "manifest.csv"),
                "--duration", "2", "--out", str(out)]) == 0
    files = list(out.glob("segments_*_2.csv"))
    assert len(files) == 4
    lines = files[0].read_text().strip().splitlines()
    assert lines[0] == "segment_index,score"
    assert len(lines) >= 11  # >=21 s of audio at 2 s windows


def test_sweep(trained, corpora, tmp_path):
    out = tmp_path / "sweep"
    assert run(["sweep", "--model", str(trained),
                "--manifest", str(corpora / "te" / "manifest.csv"),
                "--task", "intelligibility", "--durations", "1,2,5,10,20",
                "--out", str(out)]) == 0
    lines = (out / "duration_sweep.csv").read_text().strip().splitlines()
    assert lines[0] == "speaker_id,group,duration_s,segment_mean,global_prediction,target,abs_error"
    assert len(lines) == 1 + 4 * 5


def test_crossdomain(trained, corpora, tmp_path):
    out = tmp_path / "cross"
    assert run(["crossdomain", "--model", str(trained),
                "--manifest", str(corpora / "te" / "manifest.csv"),
                "--task", "severity", "--source-min", "0", "--source-max", "10",
                "--out", str(out)]) == 0
    assert (out / "summary.json").exists()


def test_consistency(trained, corpora, tmp_path):
    out = tmp_path / "cons"
    assert run(["consistency", "--model", str(trained),
                "--manifest", str(corpora / "pa" / "manifest.csv"),
                "--out", str(out)]) == 0
    payload = json.loads((out / "content_consistency.json").read_text())
    assert -1.0 <= payload["spearman_rho"] <= 1.0


def test_config_file_precedence(corpora, tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"epochs": 1, "hidden_dim": 8, "seed": 3}))
    out = tmp_path / "run_cfg"
    code = run(["train", "--manifest", str(corpora / "tr" / "manifest.csv"),
                "--task", "intelligibility", "--config", str(cfg_file),
                "--seed", "4", "--out", str(out)])
    assert code == 0
    config = json.loads((out / "config.json").read_text())
    assert config["epochs"] == 1  # from file
    assert config["seed"] == 4  # flag wins


def test_reproducible_from_config(corpora, tmp_path):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    args = ["train", "--manifest", str(corpora / "tr" / "manifest.csv"),
            "--task", "intelligibility", "--epochs", "2", "--hidden", "8", "--seed", "1"]
    assert run(args + ["--out", str(out1)]) == 0
    assert run(args + ["--out", str(out2)]) == 0
    assert (out1 / "model.bin").read_bytes() == (out2 / "model.bin").read_bytes()
    assert (out1 / "loss_curve.csv").read_bytes() == (out2 / "loss_curve.csv").read_bytes()
