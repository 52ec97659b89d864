import csv
import hashlib
import json

import numpy as np
import pytest

from rtnmpc.cli import main
from rtnmpc.neural import ResidualDataset, init_mlp, save_dataset, save_model


def data_rows(path, drop_timing=True):
    """CSV body rows with metadata lines and (optionally) timing columns removed."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    keep = [i for i, c in enumerate(rows[0]) if not (drop_timing and (c.endswith("_ms") or c == "freq_hz"))]
    return [[r[i] for i in keep] for r in rows]


def test_bench_rows_and_manifest(tmp_path, capsys):
    out = tmp_path / "b"
    code = main(["bench", "--out", str(out), "--widths", "4,16,64", "--modes", "rtn", "--no-baseline",
                 "--repetitions", "10", "--warmup", "2"])
    assert code == 0
    rows = data_rows(out / "bench.csv", drop_timing=False)
    assert len(rows) == 4
    header = rows[0]
    assert [r[header.index("width")] for r in rows[1:]] == ["4", "16", "64"]
    assert all(r[header.index("equivalence_pass")] == "true" for r in rows[1:])
    manifest = json.loads((out / "manifest.json").read_text())
    digest = hashlib.sha256((out / "bench.csv").read_bytes()).hexdigest()
    assert manifest["outputs"]["bench.csv"] == digest
    assert manifest["command"] == "bench" and manifest["config"]["bench"]["widths"] == [4, 16, 64]
    assert "width" in capsys.readouterr().out


def test_bench_missing_spec_exit_code(tmp_path, capsys):
    assert main(["bench", "--out", str(tmp_path), "--spec", str(tmp_path / "nope.toml")]) == 2
    assert "not found" in capsys.readouterr().err


def test_bad_override_exit_code(tmp_path):
    assert main(["bench", "--out", str(tmp_path), "--set", "widths=4"]) == 2
    assert main(["bench", "--out", str(tmp_path), "--set", "bench.repetitions=3"]) == 2


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["fly"])
    assert exc.value.code == 2


def test_track_is_deterministic(tmp_path, capsys):
    args = ["track", "--traj", "lemniscate", "--speed", "12", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert data_rows(tmp_path / "a" / "flight.csv") == data_rows(tmp_path / "b" / "flight.csv")
    out = capsys.readouterr().out
    assert "mean tracking error" in out and "median phase times" in out
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["config"]["trajectory"]["kind"] == "lemniscate"


def test_train_sidecar_echoes_architecture(tmp_path):
    rng = np.random.default_rng(0)
    ds = ResidualDataset.with_random_split(rng.normal(size=(200, 3)), rng.normal(size=(200, 3)), 0.1, 0, "a")
    data = save_dataset(ds, tmp_path / "d.bin")
    assert main(["train", "--out", str(tmp_path), "--data", str(data), "--arch", "3x32", "--epochs", "2"]) == 0
    meta = json.loads((tmp_path / "model.bin.json").read_text())
    assert meta["layer_sizes"] == [3, 32, 32, 32, 3] and meta["name"] == "N-3-32"
    assert (tmp_path / "model_training.csv").is_file()


def test_train_bad_arch(tmp_path):
    rng = np.random.default_rng(0)
    ds = ResidualDataset.with_random_split(rng.normal(size=(20, 3)), rng.normal(size=(20, 3)), 0.1, 0, "a")
    data = save_dataset(ds, tmp_path / "d.bin")
    assert main(["train", "--out", str(tmp_path), "--data", str(data), "--arch", "deep"]) == 2


def test_track_rejects_variant_mismatch(tmp_path, capsys):
    model = save_model(init_mlp([7, 4, 3], input_variant="a_u"), tmp_path / "m.bin")
    assert main(["track", "--out", str(tmp_path), "--model", str(model)]) == 2
    assert "variant" in capsys.readouterr().err
    assert not (tmp_path / "flight.csv").exists()


def test_collect_writes_dataset(tmp_path):
    code = main(["collect", "--out", str(tmp_path), "--n-points", "300", "--set", "collect.speed_max=4.0"])
    assert code == 0
    meta = json.loads((tmp_path / "dataset.bin.json").read_text())
    assert meta["count"] == 300 and meta["variant"] == "a"
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert "dataset.bin" in manifest["outputs"] and "flight_000.csv" in manifest["outputs"]


def test_info(capsys, tmp_path):
    model = save_model(init_mlp([3, 8, 3]), tmp_path / "m.bin")
    assert main(["info", "--model", str(model)]) == 0
    assert "N-1-8" in capsys.readouterr().out
