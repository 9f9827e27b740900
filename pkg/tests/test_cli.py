import csv
import json

import numpy as np
import pytest

from infovalue.cli import main
from infovalue.model import read_csv, simulate, working_example_discrete, write_csv
from infovalue.prob import RandomSource
from infovalue.report import ConfigError, RunConfig, emit_scenario_tables
from infovalue.voi import analyze


def write_config(path, d):
    path.write_text(json.dumps(d))
    return str(path)


@pytest.fixture
def discrete_config(tmp_path):
    return write_config(tmp_path / "c.json", {
        "problem": "working-example-discrete",
        "analysis": {"n_samples": 100_000, "seed": 42},
    })


def test_run_discrete(tmp_path, discrete_config):
    out = tmp_path / "out"
    assert main(["run", "--config", discrete_config, "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["a_opt"] == "2"
    assert [f["name"] for f in rep["factors"]] == ["M", "R1", "R2", "R3", "CF"]
    assert rep["config_echo"]["analysis"]["seed"] == 42
    text = (out / "report.txt").read_text()
    assert "Information values" in text and "a_opt = 2" in text


def test_same_seed_byte_identical(tmp_path, discrete_config):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["run", "--config", discrete_config, "--out", str(d), "-n", "20000"]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()


def test_unknown_factor(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", {"problem": "working-example-discrete",
                                             "analysis": {"factors": ["M", "Q7"]}})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "Q7" in err and cfg in err


def test_bad_json(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    assert "invalid JSON" in capsys.readouterr().err


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"problem": "working-example-discrete", "analysis": {"estimator": "magic"}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"problem": "nope"})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"problem": "working-example-discrete", "bogus": 1})


def flood_like_csv(path, rows=200, constant=False):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(rows, 14))
    if constant:
        u = np.tile([1.0, 0.5], (rows, 1))
    else:
        u = np.column_stack([-2.0 * x[:, 0] + rng.normal(0, 0.5, rows), 0.3 * x[:, 1]])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(14)] + ["u_a1", "u_a2"])
        w.writerows(np.column_stack([x, u]).tolist())
    return str(path)


def test_ingest_200_rows(tmp_path):
    samples = flood_like_csv(tmp_path / "s.csv")
    out = tmp_path / "o"
    assert main(["ingest-run", "--samples", samples, "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert len(rep["factors"]) == 14
    v = {f["name"]: f["V"] for f in rep["factors"]}
    assert v["x1"] == max(v.values()) and v["x1"] > 0


def test_ingest_constant_utilities(tmp_path):
    samples = flood_like_csv(tmp_path / "s.csv", constant=True)
    out = tmp_path / "o"
    assert main(["ingest-run", "--samples", samples, "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert all(f["V"] == 0 and f["DC"] == 0 for f in rep["factors"])


def test_ingest_schema_errors(tmp_path, capsys):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    assert main(["ingest-run", "--samples", str(empty), "--out", str(tmp_path / "o")]) == 1
    bad = tmp_path / "b.csv"
    bad.write_text("x,u_a1,u_a2\n" + "\n".join(f"{i},1,2" for i in range(30)) + "\n1,zz,2\n")
    assert main(["ingest-run", "--samples", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "row 31, column 2" in capsys.readouterr().err


def test_numeric_failure_exit_code(tmp_path, capsys):
    p = tmp_path / "s.csv"
    p.write_text("x,u_a1,u_a2\n" + "\n".join(f"1.0,{i},{30 - i}" for i in range(30)) + "\n")
    assert main(["ingest-run", "--samples", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "numeric failure" in capsys.readouterr().err


def test_round_trip(tmp_path):
    t = simulate(working_example_discrete(), 5_000, RandomSource(3))
    write_csv(t, tmp_path / "s.csv")
    back = read_csv(tmp_path / "s.csv", t.factor_names, 3)
    a = analyze(t).to_dict()
    b = analyze(back).to_dict()
    assert a["factors"] == b["factors"] and a["evpm"] == b["evpm"]


def test_tables_small_n(capsys):
    assert main(["tables", "--scenario", "working-example-discrete", "--samples", "100", "--seed", "1"]) == 0
    text = capsys.readouterr().out
    assert "Expected results" in text and "SE(V)" in text


def test_tables_continuous():
    text = emit_scenario_tables("working-example-continuous", 5_000, 1)
    assert "a_opt =" in text and "EVPM =" in text and "Sobol'" in text


def test_plot_data(tmp_path):
    cfg = write_config(tmp_path / "c.json", {
        "problem": "working-example-discrete",
        "analysis": {"n_samples": 5_000, "factors": ["M"],
                     "sample_information": [{"factor": "M", "n_s": [0, 1, 5]}]},
        "plot_data": ["conditional_utility", "cvppi", "sample_information", "scatter"],
    })
    out = tmp_path / "o"
    assert main(["plot-data", "--config", cfg, "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["conditional_utility_M.csv", "cvppi_M.csv", "sample_information_M.csv", "scatter_M.csv"]
    rows = list(csv.reader(open(out / "cvppi_M.csv")))
    assert rows[0] == ["M", "cvppi"] and rows[1] == ["-", "EUR"]
    assert all(len(r) == 2 for r in rows[2:])
