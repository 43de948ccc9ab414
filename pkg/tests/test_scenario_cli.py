import csv
import json
from pathlib import Path

import pytest

from grasshj import scenario
from grasshj.cli import main
from grasshj.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]
FREE = ROOT / "scenarios" / "free.json"
SUSY = ROOT / "scenarios" / "susy_harmonic.json"


def write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def base(**over):
    data = {"potential": "q", "ics": {"x0": 0, "v0": 1, "q00": 0, "qdot00": 0.3},
            "window": {"t_max": 1.0, "out_stride": 0.1}}
    data.update(over)
    return data


def test_minimal_config(tmp_path):
    cfg = scenario.load_config(write(tmp_path, base()))
    assert cfg.coupling == "susy"
    assert cfg.tolerances["quad_tol"] == 1e-10
    assert cfg.psi0 == 1


def test_parse_error_has_offset(tmp_path):
    with pytest.raises(ConfigError, match="offset 3") as info:
        scenario.load_config(write(tmp_path, base(potential="q +")))
    assert info.value.field == "potential"


def test_zero_velocity(tmp_path):
    data = base()
    data["ics"]["v0"] = 0
    with pytest.raises(ConfigError, match="turning point at t=0") as info:
        scenario.load_config(write(tmp_path, data))
    assert info.value.field == "ics.v0"


@pytest.mark.parametrize("patch, field", [
    ({"window": {"t_max": -1, "out_stride": 0.1}}, "window.t_max"),
    ({"constants": {"w": "x"}}, "constants.w"),
    ({"coupling": "w*q"}, "coupling"),
    ({"tolerances": {"fast": 1}}, "tolerances.fast"),
    ({"colour": 1}, "colour"),
])
def test_validation_names_field(tmp_path, patch, field):
    with pytest.raises(ConfigError) as info:
        scenario.load_config(write(tmp_path, base(**patch)))
    assert info.value.field == field


def test_psi0_must_be_unit(tmp_path):
    data = base()
    data["ics"]["psi0"] = [0.5, 0.5]
    with pytest.raises(ConfigError, match="modulus"):
        scenario.load_config(write(tmp_path, data))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        scenario.load_config(tmp_path / "nope.json")


def test_free_run(tmp_path):
    rep = scenario.run_scenario(scenario.load_config(FREE), output_dir=tmp_path)
    assert rep.exit_code == 0
    assert max(rep.deviations.values()) <= 1e-8
    with open(tmp_path / "trajectory.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == scenario.CSV_COLUMNS
    assert len(rows) == 102
    json.loads((tmp_path / "report.json").read_text())


def test_susy_run_cli(tmp_path):
    assert main(["run", str(SUSY), "--output-dir", str(tmp_path), "--quiet"]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert all(report["checks"].values())
    assert max(report["deviations"].values()) <= 1e-5


def test_deterministic(tmp_path):
    for sub in ("a", "b"):
        main(["run", str(SUSY), "--output-dir", str(tmp_path / sub), "--quiet"])
    for name in ("trajectory.csv", "report.json", "report.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_turning_point_reported(tmp_path, capsys):
    data = base(window={"t_max": 2.0, "out_stride": 0.1})
    code = main(["run", str(write(tmp_path, data)), "--output-dir", str(tmp_path / "o")])
    assert code == 3
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["error_type"] == "WindowExceededError"
    assert not (tmp_path / "o" / "trajectory.csv").exists()


def test_comparison_failure_exit(tmp_path):
    data = base(tolerances={"compare_tol": 1e-20})
    assert main(["run", str(write(tmp_path, data)), "--output-dir", str(tmp_path / "o"),
                 "--quiet"]) == 1


def test_config_error_exit(tmp_path, capsys):
    assert main(["run", str(write(tmp_path, base(potential="q +")))]) == 2
    assert "offset 3" in capsys.readouterr().err


def test_verify(tmp_path, capsys):
    assert main(["verify", str(SUSY)]) == 0
    out = capsys.readouterr().out
    assert "second_class: True" in out and "bracket_convention" in out


def test_sweep_energy(tmp_path):
    assert main(["sweep", str(SUSY), "--param", "E", "--values", "0.3,0.5,1.0",
                 "--output-dir", str(tmp_path), "--quiet"]) == 0
    with open(tmp_path / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["status"] for r in rows] == ["pass"] * 3
    assert sum(1 for p in tmp_path.iterdir() if p.is_dir()) == 3


def test_sweep_marks_invalid_value(tmp_path):
    code = main(["sweep", str(SUSY), "--param", "ics.v0", "--values", "1,0,0.8",
                 "--output-dir", str(tmp_path), "--quiet"])
    assert code == 2
    with open(tmp_path / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["status"] for r in rows] == ["pass", "error", "pass"]


def test_sweep_constant_parallel(tmp_path):
    reports = scenario.sweep(json.loads(SUSY.read_text()), "omega", [0.8, 1.0], tmp_path, jobs=2)
    assert [r["status"] for r in reports] == ["pass", "pass"]


def test_sweep_unknown_param(tmp_path):
    assert main(["sweep", str(SUSY), "--param", "ics.mass", "--values", "1",
                 "--output-dir", str(tmp_path)]) == 2


def test_deviation_grows_with_window(tmp_path):
    # informational trend only: longer windows cannot shrink the maximum
    reports = scenario.sweep(json.loads(SUSY.read_text()), "window.t_max", [0.4, 0.8, 1.2],
                             tmp_path)
    devs = [r["deviations"]["x_hj - x_ode"] for r in reports]
    assert devs[0] <= devs[2] * 10
