import csv
import json

import pytest

from pasmooth import cli
from pasmooth.config import load_config
from pasmooth.surface import ConfigError


def read(path):
    return json.loads(path.read_text())


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nr0 = 0.01\nr1 = 0.004\nsamples = 123\nsuite = cones\n")
    c = load_config(cfg, {"seed": "7"})
    assert c.samples == 123 and c.seed == 7 and c.suite == "cones"
    assert c.model.r0 == pytest.approx(0.01) and c.model.r1 == pytest.approx(0.004)


@pytest.mark.parametrize("text, field", [("r1 = 0.03\n", "r1"), ("bogus = 1\n", "bogus"),
                                         ("alpha = 1.5\n", "alpha"), ("t_grid = 1:0:1\n", "t_grid"),
                                         ("matrix = 2,1;1,1\n", "matrix"), ("samples = x\n", "samples")])
def test_config_errors_name_the_field(tmp_path, text, field):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    with pytest.raises(ConfigError) as info:
        load_config(cfg)
    assert info.value.field == field


def test_invalid_radii_exit_2(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("r1 = 0.03\n")
    assert cli.main(["--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "r1" in capsys.readouterr().err


def test_q_condition_failure_exit_2(tmp_path, capsys):
    cfg = tmp_path / "q.cfg"
    cfg.write_text("q_min = 30\n")
    assert cli.main(["--config", str(cfg), "--suite", "tower", "--out", str(tmp_path)]) == 2
    assert "q_min" in capsys.readouterr().err


def test_conjugacy_suite(tmp_path):
    assert cli.main(["--suite", "conjugacy", "--samples", "500", "--out", str(tmp_path)]) == 0
    rep = read(tmp_path / "conjugacy" / "residual.json")
    run = read(tmp_path / "run.json")
    assert rep["passed"] and rep["seed"] == 0
    assert rep["config_hash"] == run["config_hash"]


def test_seed_changes_hash(tmp_path):
    cli.main(["--suite", "cones", "--samples", "200", "--out", str(tmp_path / "a")])
    cli.main(["--suite", "cones", "--samples", "200", "--seed", "5", "--out", str(tmp_path / "b")])
    a, b = read(tmp_path / "a" / "run.json"), read(tmp_path / "b" / "run.json")
    assert a["config_hash"] != b["config_hash"] and b["seed"] == 5


def test_pressure_suite_writes_curve(tmp_path):
    code = cli.main(["--suite", "pressure", "--t-grid", "-2:1:0.1", "--samples", "4000",
                     "--out", str(tmp_path)])
    rows = list(csv.reader(open(tmp_path / "pressure" / "pressure.csv")))
    assert rows[0][:2] == ["t", "P"] and len(rows) == 32
    run = read(tmp_path / "run.json")
    assert code == (0 if not run["violations"] else 1)


def test_local_verify_writes_one_report_per_check(tmp_path):
    code = cli.main(["--suite", "local-verify", "--samples", "200", "--out", str(tmp_path)])
    names = sorted(p.stem for p in (tmp_path / "local-verify").glob("*.json"))
    assert names == sorted(["liouville", "residence_time", "discrete_residence", "dij_bound",
                            "envelopes", "spread", "angle_product"])
    run = read(tmp_path / "run.json")
    assert code == (1 if run["violations"] else 0)


def test_local_verify_defaults_exit_zero(tmp_path):
    # stated target: the default local suite is violation free
    assert cli.main(["--suite", "local-verify", "--samples", "500", "--out", str(tmp_path)]) == 0


def test_disable_slowdown_runs_linear_map(tmp_path):
    assert cli.main(["--suite", "conjugacy", "--disable-slowdown", "--samples", "300",
                     "--out", str(tmp_path)]) == 0
    assert read(tmp_path / "run.json")["config"]["model"]["slowdown"] is False


def test_numerical_failure_exit_3(tmp_path, monkeypatch):
    from pasmooth.thermo import PressureError

    def boom(run):
        raise PressureError("no bracket")

    monkeypatch.setitem(cli.SUITE_FUNCS, "cones", boom)
    assert cli.main(["--suite", "cones", "--out", str(tmp_path)]) == 3
    assert read(tmp_path / "run.json")["numerical_failure"] == "cones"


def test_bad_suite_name_rejected():
    with pytest.raises(SystemExit):
        cli.main(["--suite", "everything"])
