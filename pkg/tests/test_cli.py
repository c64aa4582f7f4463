import json

import pytest

from permvec.cli import main, read_config_file
from permvec.dataset import load_dataset
from permvec.model import autoencoder_specs, init_params, save_checkpoint
from permvec.core_math import Rng


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def data_dir(tmp_path):
    out = tmp_path / "data"
    assert run("generate", "--sets", 12, "--validation-sets", 2, "--seed", 5, "--out", out) == 0
    return out


def test_generate_writes_splits(data_dir, capsys):
    splits = load_dataset(data_dir)
    assert (len(splits.train), len(splits.test), len(splits.validation)) == (8, 2, 2)
    manifest = json.loads((data_dir / "manifest.json").read_text())
    assert manifest["seed"] == 5 and manifest["splits"]["train"]["vectors"] == 8 * 24
    cfg = read_config_file(data_dir / "config.txt")
    assert cfg["sets"] == 12 and cfg["validation_sets"] == 2


def test_generate_is_byte_identical(tmp_path, data_dir):
    again = tmp_path / "again"
    run("generate", "--sets", 12, "--validation-sets", 2, "--seed", 5, "--out", again)
    for f in sorted(data_dir.iterdir()):
        assert (again / f.name).read_bytes() == f.read_bytes(), f.name


def test_generate_too_few_sets_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("generate", "--sets", 2, "--validation-sets", 2, "--out", tmp_path / "d")
    assert exc.value.code == 2


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "settings.txt"
    cfg.write_text("# small run\nsets = 14\nvalidation_sets = 2\nseed = 9\n")
    run("generate", "--config", cfg, "--seed", 3, "--out", tmp_path / "d")
    saved = read_config_file(tmp_path / "d" / "config.txt")
    assert saved["sets"] == 14 and saved["seed"] == 3


def test_bad_config_line_is_usage_error(tmp_path):
    cfg = tmp_path / "settings.txt"
    cfg.write_text("colour = blue\n")
    with pytest.raises(SystemExit) as exc:
        run("generate", "--config", cfg, "--out", tmp_path / "d")
    assert exc.value.code == 2


@pytest.mark.parametrize("alpha", ["-1", "0"])
def test_train_rejects_nonpositive_alpha(data_dir, tmp_path, alpha):
    with pytest.raises(SystemExit) as exc:
        run("train", "--data", data_dir, "--alpha", alpha, "--out", tmp_path / "m")
    assert exc.value.code == 2
    assert not (tmp_path / "m" / "checkpoint.pvec").exists()


@pytest.mark.parametrize("alpha", [None, 1.0])
def test_train_writes_outputs(data_dir, tmp_path, capsys, alpha):
    out = tmp_path / "m"
    extra = [] if alpha is None else ["--alpha", alpha]
    assert run("train", "--data", data_dir, "--steps", 12, "--batch-size", 32, "--out", out, *extra) == 0
    assert (out / "checkpoint.pvec").stat().st_size > 0
    lines = (out / "log.csv").read_text().splitlines()
    assert lines[0] == "step,split,mse,triplet,total,numeric_accuracy,seconds"
    assert sum(",train," in ln for ln in lines) == 12
    printed = capsys.readouterr().out
    assert ("standard" if alpha is None else "enhanced") in printed
    saved = (out / "config.txt").read_text()
    assert "steps = 12" in saved


def test_train_missing_data_exits_1(tmp_path):
    assert run("train", "--data", tmp_path / "nowhere", "--out", tmp_path / "m") == 1


def test_analyze_raw(data_dir, tmp_path, capsys):
    out = tmp_path / "a"
    assert run("analyze", "--data", data_dir, "--raw", "--out", out) == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["verdict"] == "not discernible"
    assert doc["provenance"]["checkpoint"] is None and doc["provenance"]["dataset_seed"] == 5
    assert "verdict=not discernible" in capsys.readouterr().out


def test_analyze_checkpoint(data_dir, tmp_path):
    ckpt = tmp_path / "c.pvec"
    save_checkpoint(init_params(Rng(0)), ckpt)
    out = tmp_path / "a"
    assert run("analyze", "--data", data_dir, "--checkpoint", ckpt, "--out", out) == 0
    assert {p.name for p in out.iterdir()} >= {"report.json", "embeddings.csv", "centroids.csv", "config.txt"}
    assert json.loads((out / "report.json").read_text())["provenance"]["checkpoint"] == str(ckpt)


def test_analyze_missing_checkpoint_exits_1(data_dir, tmp_path, capsys):
    assert run("analyze", "--data", data_dir, "--checkpoint", tmp_path / "none.pvec", "--out", tmp_path / "a") == 1
    assert "error" in capsys.readouterr().err


def test_analyze_dimension_mismatch_exits_1(data_dir, tmp_path):
    specs, n_enc = autoencoder_specs((12, 6, 3))
    ckpt = tmp_path / "c.pvec"
    save_checkpoint(init_params(Rng(0), specs, n_enc), ckpt)
    assert run("analyze", "--data", data_dir, "--checkpoint", ckpt, "--out", tmp_path / "a") == 1


def test_analyze_needs_a_source(data_dir, tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("analyze", "--data", data_dir, "--out", tmp_path / "a")
    assert exc.value.code == 2


def write_log(path, rows):
    lines = ["step,split,mse,triplet,total,numeric_accuracy,seconds"]
    lines += [f"{s},train,{m},0.0,{m},{a},0.000" for s, m, a in rows]
    path.write_text("\n".join(lines) + "\n")


def test_report_constant_log_has_zero_stdev(tmp_path, capsys):
    log = tmp_path / "run" / "log.csv"
    log.parent.mkdir()
    write_log(log, [(s, 0.25, 0.75) for s in range(0, 1200, 10)])
    table = tmp_path / "t.csv"
    assert run("report", log, "--out", table) == 0
    header, row = table.read_text().splitlines()
    cells = dict(zip(header.split(","), row.split(",")))
    assert cells["run"] == "run"
    assert float(cells["mse_mean"]) == 0.25 and float(cells["mse_std"]) == 0.0
    assert float(cells["numeric_accuracy_std"]) == 0.0


def test_report_identical_logs_identical_rows(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    rows = [(s, 0.1 + 0.001 * (s % 7), 0.8) for s in range(0, 1200, 10)]
    write_log(a, rows)
    write_log(b, rows)
    table = tmp_path / "t.csv"
    run("report", a, b, "--out", table)
    _, ra, rb = table.read_text().splitlines()
    assert ra.split(",")[1:] == rb.split(",")[1:]
    assert ra.split(",")[-3] == "1.000"


def test_report_malformed_log_exits_1(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("step,split,mse\n1,train,0.2\n")
    assert run("report", bad) == 1


def test_report_window_without_records_exits_1(tmp_path):
    log = tmp_path / "log.csv"
    write_log(log, [(0, 0.3, 0.5)])
    assert run("report", log, "--window", 600, 1000) == 1
