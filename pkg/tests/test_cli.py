"""End-to-end command-line behavior: validation, artifacts, determinism."""

import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from genbound import cli


def _base_config(**overrides):
    doc = {
        "network": {
            "input_dim": 3,
            "fc_widths": [8],
            "output_width": 8,
            "norm_exponent": 0.5,
        },
        "train": {"algorithm": "GD", "eta": 0.05, "total_steps": 25},
        "data": {"source": "synthetic", "kind": "regression", "n_train": 48, "n_test": 24, "seed": 0},
        "bound": {"lam": 0.5, "delta": 0.05},
        "seeds": [0],
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and key in doc:
            doc[key].update(value)
        else:
            doc[key] = value
    return doc


def _write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=2))
    return str(path)


def _read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_unknown_key_rejected(tmp_path, capsys):
    doc = _base_config()
    doc["train"]["learning_rate"] = 0.1
    code = cli.main(["train", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "o")])
    assert code == 2
    err = capsys.readouterr().err
    assert "learning_rate" in err and "train" in err


def test_unknown_top_level_key_rejected(tmp_path, capsys):
    doc = _base_config()
    doc["trainer"] = {}
    code = cli.main(["train", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "trainer" in capsys.readouterr().err


def test_malformed_json_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "network": {,}\n}\n')
    code = cli.main(["train", "--config", str(path), "--out", str(tmp_path / "o")])
    assert code == 2
    assert ":2:" in capsys.readouterr().err


def test_invalid_network_rejected(tmp_path, capsys):
    doc = _base_config(network={"input_dim": 13, "conv_kernels": [3], "fc_widths": [3], "output_width": 3, "norm_exponent": 0.5})
    code = cli.main(["train", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_train_writes_artifacts(tmp_path):
    out = tmp_path / "run"
    code = cli.main(["train", "--config", _write(tmp_path, _base_config()), "--out", str(out)])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["algorithm"] == "GD"
    assert report["bound"] > 0
    assert report["diverged"] == [False]
    lines = (out / "trajectory.csv").read_text().strip().splitlines()
    header = lines[0].split(",")
    assert header[:6] == ["t", "eta_t", "Ln_train", "Ln_test", "psi", "CL"]
    assert header[-1] == "bound_prefix"
    assert len(lines) == 1 + 26
    last = lines[-1].split(",")
    assert float(last[header.index("bound_prefix")]) == pytest.approx(report["bound"])
    assert float(last[header.index("CL")]) == pytest.approx(report["cl"])


def test_train_rerun_byte_identical(tmp_path):
    cfg = _write(tmp_path, _base_config(seeds=[0, 1]))
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["train", "--config", cfg, "--out", str(a)]) == 0
    assert cli.main(["train", "--config", cfg, "--out", str(b)]) == 0
    for name in ("trajectory.csv", "trajectory_seed1.csv", "report.json"):
        assert _read_bytes(a / name) == _read_bytes(b / name), name


def test_train_thread_cap_does_not_change_output(tmp_path, monkeypatch):
    cfg = _write(tmp_path, _base_config(seeds=[0, 1, 2]))
    a, b = tmp_path / "a", tmp_path / "b"
    monkeypatch.setenv("GENBOUND_THREADS", "3")
    assert cli.main(["train", "--config", cfg, "--out", str(a)]) == 0
    monkeypatch.setenv("GENBOUND_THREADS", "1")
    assert cli.main(["train", "--config", cfg, "--out", str(b)]) == 0
    assert _read_bytes(a / "report.json") == _read_bytes(b / "report.json")
    monkeypatch.setenv("GENBOUND_THREADS", "zero")
    assert cli.main(["train", "--config", cfg, "--out", str(tmp_path / "c")]) == 2


def test_train_seed_override(tmp_path):
    cfg = _write(tmp_path, _base_config(seeds=[0]))
    out = tmp_path / "s5"
    assert cli.main(["train", "--config", cfg, "--seed", "5", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["seeds"] == [5]


def test_train_eta_auto(tmp_path):
    doc = _base_config(train={"algorithm": "GD", "eta": "auto", "alpha": 1.0, "total_steps": 10, "kappa": 2.0})
    out = tmp_path / "auto"
    assert cli.main(["train", "--config", _write(tmp_path, doc), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["eta_resolved"][0] > 0


def test_train_gf_float_times(tmp_path):
    doc = _base_config(train={"algorithm": "GF", "eta": 0.1, "duration": 0.05, "gf_substep": 0.005})
    out = tmp_path / "gf"
    assert cli.main(["train", "--config", _write(tmp_path, doc), "--out", str(out)]) == 0
    lines = (out / "trajectory.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + 11
    t_last = float(lines[-1].split(",")[0])
    assert t_last == pytest.approx(0.05)


def test_train_svg_chart(tmp_path):
    doc = _base_config(svg=True)
    out = tmp_path / "sv"
    assert cli.main(["train", "--config", _write(tmp_path, doc), "--out", str(out)]) == 0
    svg = (out / "chart.svg").read_text()
    assert svg.startswith("<svg") and "train loss" in svg


def test_bound_recompute_matches_train(tmp_path):
    cfg = _write(tmp_path, _base_config())
    out = tmp_path / "run"
    assert cli.main(["train", "--config", cfg, "--out", str(out)]) == 0
    report_path = tmp_path / "recomputed.json"
    assert cli.main([
        "bound", "--config", cfg, "--trajectory", str(out / "trajectory.csv"), "--out", str(report_path)
    ]) == 0
    original = json.loads((out / "report.json").read_text())
    recomputed = json.loads(report_path.read_text())
    assert recomputed["bound"] == original["bound"]
    assert recomputed["cl"] == original["cl"]
    assert recomputed["init_sq_norms"] == original["init_sq_norms"]


def test_verify_pass_and_fail(tmp_path, capsys):
    out_file = tmp_path / "verify.json"
    # value-bounds yields numpy-scalar violations; the JSON dump must take them
    code = cli.main(["verify", "--suite", "loss-decomposition",
                     "--suite", "value-bounds", "--out", str(out_file)])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert all(line.startswith("PASS") for line in lines)
    payload = json.loads(out_file.read_text())
    assert payload["all_passed"] is True
    assert len(payload["outcomes"]) == 3
    assert cli.main(["verify", "--suite", "homogeneity", "--inject-bug"]) == 1
    out = capsys.readouterr().out
    assert "FAIL" in out


def test_verify_rejects_unknown_suite():
    with pytest.raises(SystemExit):
        cli.main(["verify", "--suite", "bogus"])


def test_compare_table(tmp_path):
    doc = _base_config(
        train={"algorithm": "SGLD", "eta": 0.05, "total_steps": 40, "beta": 100.0},
        compare={"betas": [10, 1000], "loss_bound": 0.25, "lip": 1.0},
    )
    out = tmp_path / "cmp"
    assert cli.main(["compare", "--config", _write(tmp_path, doc), "--out", str(out)]) == 0
    lines = (out / "compare.csv").read_text().strip().splitlines()
    assert lines[0] == "algorithm,beta,cl,bound_cl,bound_info"
    rows = [line.split(",") for line in lines[1:]]
    assert [r[0] for r in rows] == ["SGLD", "SGLD", "GD"]
    infos = [float(r[4]) for r in rows]
    assert infos[0] < infos[1] and math.isinf(infos[2])
    assert all(math.isfinite(float(r[3])) for r in rows)


def test_compare_requires_section(tmp_path, capsys):
    code = cli.main(["compare", "--config", _write(tmp_path, _base_config()), "--out", str(tmp_path / "x")])
    assert code == 2
    assert "compare" in capsys.readouterr().err


def test_sweep_width_preserves_out_scale(tmp_path):
    doc = _base_config(
        network={"input_dim": 3, "fc_widths": [4], "output_width": 4, "norm_exponent": 1.0},
        sweep={"axis": "width", "values": [4, 16]},
    )
    out = tmp_path / "sw"
    assert cli.main(["sweep", "--config", _write(tmp_path, doc), "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().strip().splitlines()
    assert lines[0] == "axis,value,cl,bound,cl_seed_mean,bound_seed_mean"
    assert len(lines) == 3
    for value in (4, 16):
        report = json.loads((out / f"width_{value}" / "report.json").read_text())
        assert report["output_width"] == value
        assert value ** report["norm_exponent"] == pytest.approx(4.0)


def test_sweep_lr_axis(tmp_path):
    doc = _base_config(sweep={"axis": "lr", "values": [0.02, 0.08]})
    out = tmp_path / "swlr"
    assert cli.main(["sweep", "--config", _write(tmp_path, doc), "--out", str(out)]) == 0
    a = json.loads((out / "lr_0.02" / "report.json").read_text())
    b = json.loads((out / "lr_0.08" / "report.json").read_text())
    assert b["cl"] > a["cl"]


def test_sweep_width_rejects_cnn(tmp_path, capsys):
    doc = _base_config(
        network={"input_dim": 11, "conv_kernels": [3], "fc_widths": [3], "output_width": 3, "norm_exponent": 0.5},
        sweep={"axis": "width", "values": [4, 8]},
    )
    assert cli.main(["sweep", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "x")]) == 2
    assert "width" in capsys.readouterr().err


def test_sweep_needs_axis(tmp_path, capsys):
    assert cli.main(["sweep", "--config", _write(tmp_path, _base_config()), "--out", str(tmp_path / "x")]) == 2
    assert "axis" in capsys.readouterr().err


def test_gen_data_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["gen-data", "--kind", "regression", "--n", "32", "--seed", "3", "--out", str(a)]) == 0
    assert cli.main(["gen-data", "--kind", "regression", "--n", "32", "--seed", "3", "--out", str(b)]) == 0
    assert _read_bytes(a) == _read_bytes(b)


def test_gen_data_idx_fixture_loads(tmp_path):
    stem = str(tmp_path / "fix")
    assert cli.main(["gen-data", "--kind", "idx-fixture", "--n", "40", "--seed", "1", "--out", stem]) == 0
    from genbound.data import load_idx

    ds = load_idx(stem + "-images.idx", stem + "-labels.idx", keep=(0, 1), c_y=0.25)
    assert ds.n == 40 and ds.dim == 16


def test_idx_config_source(tmp_path):
    stem = str(tmp_path / "fix")
    assert cli.main(["gen-data", "--kind", "idx-fixture", "--n", "60", "--seed", "2", "--out", stem]) == 0
    doc = _base_config(
        network={"input_dim": 16, "fc_widths": [8], "output_width": 8, "norm_exponent": 0.5},
        data={
            "source": "idx",
            "images": stem + "-images.idx",
            "labels": stem + "-labels.idx",
            "keep": [0, 1],
            "c_y": 0.25,
            "train_fraction": 0.75,
            "seed": 0,
        },
    )
    out = tmp_path / "idxrun"
    assert cli.main(["train", "--config", _write(tmp_path, doc), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["n"] == 45
    assert report["final_ln_test"] is not None


def test_console_script_smoke(tmp_path):
    cfg = _write(tmp_path, _base_config(train={"algorithm": "GD", "eta": 0.05, "total_steps": 5}))
    proc = subprocess.run(
        [sys.executable, "-m", "genbound.cli", "train", "--config", cfg, "--out", str(tmp_path / "o")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "bound" in proc.stdout
