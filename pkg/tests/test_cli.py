"""CLI subcommands, driven through main() with captured stdout."""

import json

import numpy as np
import pytest

from survmamba.cli import main


def _run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, out


@pytest.fixture(scope="module")
def tiny_dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = {
        "n_patients": 25, "regions": 2, "patches_per_region": 3,
        "processes": 2, "functions_per_process": 2, "genes_per_function": 2,
        "feature_dim": 4, "beta": 2.0, "noise": 0.1, "censoring_rate": 0.2,
    }
    (root / "spec.json").write_text(json.dumps(spec))
    code = main(["synth", "--spec", str(root / "spec.json"), "--seed", "3", "--out", str(root / "data")])
    assert code == 0
    return root


def test_synth_writes_layout(tiny_dataset_dir):
    data = tiny_dataset_dir / "data"
    assert (data / "manifest.json").exists()
    assert (data / "grouping.json").exists()
    assert (data / "patients" / "P0000.hist.smb").exists()
    manifest = json.loads((data / "manifest.json").read_text())
    assert len(manifest["patients"]) == 25
    assert "bins" in manifest


def test_train_then_eval(tiny_dataset_dir, capsys):
    root = tiny_dataset_dir
    cfg = {
        "d_model": 6, "e_expand": 8, "n_state": 2, "conv_width": 2,
        "genomics_hidden": 4, "align_len": 8, "epochs": 2, "seed": 1,
    }
    (root / "cfg.json").write_text(json.dumps(cfg))
    code, out = _run(capsys, [
        "train", "--data", str(root / "data" / "manifest.json"),
        "--fold", "0", "--config", str(root / "cfg.json"),
        "--out", str(root / "model.smck"),
    ])
    assert code == 0
    assert "epoch   0" in out and "epoch   1" in out
    assert (root / "model.smck").exists()

    code, out = _run(capsys, [
        "eval", "--data", str(root / "data" / "manifest.json"),
        "--fold", "0", "--ckpt", str(root / "model.smck"),
        "--config", str(root / "cfg.json"),
        "--km-out", str(root / "km.tsv"),
    ])
    assert code == 0
    assert "c-index" in out
    km = (root / "km.tsv").read_text()
    assert km.splitlines()[0] == "group\ttime\tsurvival\tat_risk\tevents"
    assert "# logrank chi2=" in km


def test_gradcheck_numerics(capsys):
    code, out = _run(capsys, ["gradcheck", "--module", "numerics"])
    assert code == 0
    assert out.count("PASS") == 5
    assert "FAIL" not in out


def test_scan_bench_lines(capsys):
    code, out = _run(capsys, [
        "scan-bench", "--len", "64,128", "--channels", "2", "--state", "2",
        "--mode", "all", "--reps", "2",
    ])
    assert code == 0
    lines = [ln for ln in out.splitlines() if ln.startswith("RESULT")]
    assert len(lines) == 6  # 3 modes x 2 lengths
    assert any("mode=recurrent len=64" in ln for ln in lines)
    devs = [float(ln.split("max_dev=")[1]) for ln in lines]
    assert max(devs) < 1e-8


def test_km_subcommand(tmp_path, capsys):
    rng = np.random.default_rng(0)
    n = 40
    risks = rng.normal(size=n)
    times = rng.exponential(12.0, size=n) * np.exp(-risks) + 0.05
    events = rng.integers(0, 2, size=n)
    (tmp_path / "risks.txt").write_text("\n".join(repr(float(r)) for r in risks))
    (tmp_path / "outcomes.txt").write_text(
        "\n".join(f"{float(t)!r} {int(e)}" for t, e in zip(times, events))
    )
    code, out = _run(capsys, [
        "km", "--risks", str(tmp_path / "risks.txt"),
        "--outcomes", str(tmp_path / "outcomes.txt"),
    ])
    assert code == 0
    assert out.splitlines()[0] == "group\ttime\tsurvival\tat_risk\tevents"
    assert "low\t" in out and "high\t" in out
    assert "# logrank chi2=" in out


def test_km_length_mismatch(tmp_path, capsys):
    (tmp_path / "r.txt").write_text("1.0\n2.0\n")
    (tmp_path / "o.txt").write_text("1.0 1\n")
    code = main(["km", "--risks", str(tmp_path / "r.txt"), "--outcomes", str(tmp_path / "o.txt")])
    assert code == 2
