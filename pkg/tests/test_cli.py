from __future__ import annotations

import json
import math
import time

import numpy as np
import pytest

from conicflow.cli import main
from conicflow.config import OUTPUT_ENV
from conicflow.monitors import CSV_COLUMNS
from conicflow.reporting import read_checkpoint, read_csv, write_checkpoint


@pytest.fixture(autouse=True)
def _no_env(monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)


def _synthetic_csv(path, p, T=0.7):
    tau = np.geomspace(1e-3, 0.1, 15)
    t = T - tau
    rows = [",".join(CSV_COLUMNS[:3])]
    rows += [f"{float(a)!r},{float(b)!r},{float(2.0 * b**-p)!r}" for a, b in zip(t, tau)]
    path.write_text("\n".join(rows) + "\n")
    return path


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    for name in ("round-collapse", "cone-p1", "product-contraction"):
        assert name in out


def test_run_round_collapse(tmp_path, capsys):
    assert main(["run", "round-collapse", "--output-dir", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "round-collapse" / "report.json").read_text())
    assert report["status"] == "PASS"
    for r in report["runs"]:
        assert abs(r["T_measured"] - math.log(2)) < 1e-3
    cols = read_csv(tmp_path / "round-collapse" / "eps_0.0125.csv")
    assert list(cols) == list(CSV_COLUMNS)
    assert "PASS" in capsys.readouterr().out


def test_k_above_threshold_is_config_error(tmp_path, capsys):
    assert main(["run", "product-contraction", "--k", "10", "--N", "64", "--output-dir", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "k = 10 violates the positivity threshold k < k_max = 4.25" in err
    assert not (tmp_path / "product-contraction").exists()


@pytest.mark.parametrize(
    "args",
    [
        ["run", "nowhere"],
        ["run", "cone-p1", "--N", "4"],
        ["run", "cone-p1", "--eps-ladder", "0.1,0.2,0.05"],
        ["run", "cone-p1", "--c-cfl", "1.5"],
        ["run", "cone-p1", "--t-stop", "1.0"],
    ],
)
def test_invalid_configs(args, tmp_path):
    assert main(args + ["--output-dir", str(tmp_path)]) == 2


def test_config_file_and_env_output(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": "round-collapse", "N": 64, "eps_ladder": [0.1, 0.05, 0.025], "t_stop": 0.5}))
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["run", "--config", str(cfg), "--output-dir", str(tmp_path / "ignored")]) == 0
    out = tmp_path / "env" / "round-collapse"
    assert sorted(p.name for p in out.glob("*.csv")) == ["eps_0.025.csv", "eps_0.05.csv", "eps_0.1.csv"]
    assert json.loads((out / "report.json").read_text())["config"]["N"] == 64
    assert not (tmp_path / "ignored").exists()


def test_config_file_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": "cone-p1", "resolution": 5}))
    assert main(["run", "--config", str(cfg)]) == 2


def test_runs_are_deterministic(tmp_path):
    base = ["run", "product-contraction", "--N", "64", "--t-stop", "0.5"]
    main(base + ["--output-dir", str(tmp_path / "a")])
    main(base + ["--output-dir", str(tmp_path / "b")])
    main(base + ["--output-dir", str(tmp_path / "c"), "--workers", "2"])
    for csv in (tmp_path / "a" / "product-contraction").glob("*.csv"):
        ref = csv.read_bytes()
        assert (tmp_path / "b" / "product-contraction" / csv.name).read_bytes() == ref
        assert (tmp_path / "c" / "product-contraction" / csv.name).read_bytes() == ref


@pytest.mark.parametrize("p", [1.0, 2.0])
def test_fit_synthetic(tmp_path, capsys, p):
    path = _synthetic_csv(tmp_path / "s.csv", p)
    assert main(["fit", str(path)]) == 0
    first = capsys.readouterr().out.splitlines()[0]
    assert float(first.split("=")[1]) == pytest.approx(p, abs=1e-6)


def test_fit_explicit_window_and_T(tmp_path, capsys):
    path = _synthetic_csv(tmp_path / "s.csv", 1.0)
    assert main(["fit", str(path), "--T", "0.7", "--window", "1e-3", "1e-2", "--min-samples", "4"]) == 0
    assert "column sup_R" in capsys.readouterr().out


@pytest.mark.parametrize(
    "text",
    ["", "a,b\n1,2\n", "t,sup_R\n1,x\n", "t,sup_R\n", "t,sup_R,T_minus_t\n1,2\n"],
)
def test_fit_malformed_csv(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    assert main(["fit", str(path)]) == 2


def test_fit_too_few_samples(tmp_path):
    path = tmp_path / "few.csv"
    path.write_text("t,T_minus_t,sup_R\n0.6,0.1,10\n0.65,0.05,20\n")
    assert main(["fit", str(path)]) == 2


def test_check_only(capsys):
    assert main(["check", "--only", "chi"]) == 0
    assert capsys.readouterr().out.startswith("PASS  chi")


def test_check_mutation_fails(capsys):
    assert main(["check", "--only", "trace_identity", "--mutate", "trace-sign"]) == 1
    assert "failing: trace_identity" in capsys.readouterr().out


def test_full_check_is_fast():
    t0 = time.perf_counter()
    assert main(["check"]) == 0
    assert time.perf_counter() - t0 < 120


def test_checkpoint_roundtrip(tmp_path):
    phi = [np.linspace(0, 1, 7), np.arange(5.0)]
    write_checkpoint(tmp_path / "ck", phi, 0.25, 0.05, [7, 5], "abc")
    back, meta = read_checkpoint(tmp_path / "ck")
    assert meta["t"] == 0.25 and meta["grid"] == [7, 5] and meta["scenario_hash"] == "abc"
    for a, b in zip(phi, back):
        np.testing.assert_array_equal(a, b)


def test_run_writes_checkpoints(tmp_path):
    assert main(["run", "round-collapse", "--N", "64", "--t-stop", "0.3", "--checkpoints", "--output-dir", str(tmp_path)]) == 0
    out = tmp_path / "round-collapse"
    phi, meta = read_checkpoint(out / "eps_0.0125_final")
    assert meta["eps"] == 0.0125 and phi[0].size == 64
