import csv
import json

import numpy as np
import pytest

from steklov_perturb import cli
from steklov_perturb.cli import CSV_COLUMNS, RunConfig, main


def write_config(tmp_path, **fields):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(fields))
    return path


def read_csv(path):
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


BASE = {"d": 3, "rho": {"2": 1.0}, "epsilons": [0.02, 0.01, 0.005], "order": 4, "cutoff": 12}


def test_eigen_ball(tmp_path):
    cfg = write_config(tmp_path, d=3, rho={}, epsilons=[0.1, 0.2], order=3, cutoff=6)
    assert main(["eigen", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "eigen.csv")
    assert list(rows[0]) == CSV_COLUMNS
    for row in rows:
        assert abs(float(row["sigma"]) - int(row["branch"])) < 1e-12
    raw = (tmp_path / "o" / "eigen.csv").read_bytes()
    assert b"\r\n" not in raw


def test_compare_errors_shrink_with_eps(tmp_path):
    cfg = write_config(tmp_path, **BASE)
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "compare.csv")
    err = {}
    for row in rows:
        err.setdefault(int(row["branch"]), {})[float(row["epsilon"])] = float(row["abs_err"])
    for b in range(1, 5):
        e = err[b]
        assert e[0.02] / e[0.01] > 2**4.5 and e[0.01] / e[0.005] > 2**4.5
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["schema"] == 1
    assert summary["result"]["target_order"] == 5


def test_decay_from_norms(tmp_path):
    a = 0.37
    cfg = write_config(tmp_path, d=3, rho={"2": 1.0}, norms=[a**n for n in range(6)])
    assert main(["decay", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    result = json.loads((tmp_path / "o" / "summary.json").read_text())["result"]
    assert abs(result["A_est"] - a) < 1e-12


def test_decay_from_series(tmp_path):
    cfg = write_config(tmp_path, d=3, rho={"2": 0.4}, order=8)
    assert main(["decay", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    result = json.loads((tmp_path / "o" / "summary.json").read_text())["result"]
    assert result["source"] == "series" and np.isfinite(result["A_est"])


@pytest.mark.parametrize("command", ["series", "eigen", "oracle"])
def test_deterministic_outputs(tmp_path, command):
    cfg = write_config(tmp_path, d=2, rho={"1": 0.3, "2": 1.0}, epsilons=[0.01, 0.02], order=3, cutoff=6)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main([command, "--config", str(cfg), "--out", str(out)]) == 0
    names = sorted(p.name for p in outs[0].iterdir() if p.name != "timings.json")
    assert names == sorted(p.name for p in outs[1].iterdir() if p.name != "timings.json")
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_config_echo_round_trip(tmp_path):
    cfg = write_config(tmp_path, **BASE)
    assert main(["series", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    echoed = json.loads((tmp_path / "o" / "summary.json").read_text())["config"]
    assert RunConfig.from_dict(echoed) == cli.load_config(cfg)


@pytest.mark.parametrize(
    "fields",
    [
        {"d": 3},
        {"d": 3, "rho": {"2": 1.0}, "colour": "red"},
        {"d": 1, "rho": {"2": 1.0}},
        {"d": 3, "rho": {"2": 1.0}, "epsilons": [0.5]},
        {"d": 3, "rho": {"2": 1.0}, "order": "four"},
        {"d": 3, "rho": {"2": 1.0}, "trial_degree": 30, "nodes": 40},
    ],
)
def test_config_errors(tmp_path, fields, capsys):
    cfg = write_config(tmp_path, **fields)
    assert main(["series", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "config" in capsys.readouterr().err


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["series", "--config", str(bad)]) == 2
    assert main(["series", "--config", str(tmp_path / "missing.json")]) == 2


def test_capacity_exit(tmp_path, monkeypatch):
    monkeypatch.setenv("STEKLOV_MAX_QUAD", "6")
    # a rho no other test uses, so no cached series bypasses the cap
    cfg = write_config(tmp_path, **{**BASE, "rho": {"2": 0.9, "3": 0.1}})
    assert main(["eigen", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_oracle_exit(tmp_path, monkeypatch):
    def fail(*args, **kwargs):
        raise cli.OracleError("no eigenpair passed the residual filter")

    monkeypatch.setattr(cli, "converged_eigs", fail)
    cfg = write_config(tmp_path, **BASE)
    assert main(["oracle", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 4


def test_all_nan_oracle_exit(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "converged_eigs", lambda *a, **k: np.full(k.get("count", 5), np.nan))
    cfg = write_config(tmp_path, **BASE)
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 4
