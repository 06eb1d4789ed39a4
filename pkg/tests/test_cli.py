import json
import xml.etree.ElementTree as ET

import pytest

from flowshoot.cli import ConfigError, CSV_HEADER, main, parse_config

ZERO_CFG = """\
# straight run through still water
field.vx = 0
field.vy = 0
problem.A = 0, 0
problem.B = -0.7, -0.7
solver.theta_step = 0.05
"""


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_config_roundtrip():
    cfg = parse_config(ZERO_CFG + "solver.tau = 2e-4\nplot.width = 300\nproblem.bound = 1\n")
    assert cfg.field_vx == "0" and cfg.B == (-0.7, -0.7)
    assert cfg.solver == {"theta_step": 0.05, "tau": 2e-4, "bound": 1.0}
    assert cfg.plot_width == 300


@pytest.mark.parametrize(
    "text,match",
    [
        ("field.builtin = steady_parabolic\nfield.vx = 0\nfield.vy = 0\n", "exactly one"),
        ("field.vx = 0\n", "both"),
        ("problem.B = 1\nfield.vx = 0\nfield.vy = 0\n", "two comma"),
        ("field.builtin = steady_parabolic\nsolver.tau = -1\n", "positive"),
        ("field.builtin = steady_parabolic\nsolver.wobble = 1\n", "unknown key"),
        ("field.builtin = steady_parabolic\nfield.builtin = shear_tidal\n", "duplicate"),
        ("field.builtin steady_parabolic\n", "expected 'key = value'"),
        ("", "exactly one"),
    ],
)
def test_parse_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_config_errors_exit_1(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "missing.cfg")]) == 1
    bad = write(tmp_path, "field.vx = sin(\nfield.vy = 0\nproblem.B = 0, -1\n")
    assert main(["solve", str(bad), "--quiet"]) == 1
    unknown = write(tmp_path, "field.builtin = nope\nproblem.B = 0, -1\n", "u.cfg")
    assert main(["check-field", str(unknown)]) == 1
    assert main(["frobnicate"]) == 1
    assert "error" in capsys.readouterr().err


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    d = tmp_path_factory.mktemp("solve")
    cfg = write(d, ZERO_CFG)
    rc = main(["solve", str(cfg), "--out", str(d / "out"), "--quiet"])
    return rc, d, cfg


def test_solve_writes_artifacts(solved):
    rc, d, _ = solved
    assert rc == 0
    out = d / "out"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["optimal_time"] == pytest.approx(0.7, abs=1e-3)
    assert summary["extremal_count"] == len(summary["extremals"]) > 0
    for key in ("problem", "extremals", "optimal_index", "diagnostics", "tool_version"):
        assert key in summary
    e0 = summary["extremals"][0]
    for key in ("theta0", "T", "classification", "lambda", "nontriviality_margin", "singular_risk_measure", "departure_times"):
        assert key in e0
    lines = (out / e0["csv"]).read_text().splitlines()
    assert lines[0].split(",") == CSV_HEADER
    assert {ln.rsplit(",", 1)[1] for ln in lines[1:]} <= {"I", "B+", "B-"}
    ET.fromstring((out / "field.svg").read_text())


def test_json_reals_have_17_significant_digits(solved):
    _, d, _ = solved
    text = (d / "out" / "summary.json").read_text()
    assert '"tau": 0.0001' in text  # 1e-4 printed with %.17g
    assert '"theta_step": 0.050000000000000003' in text


def test_solve_is_byte_reproducible(solved, tmp_path):
    _, d, cfg = solved
    assert main(["solve", str(cfg), "--out", str(tmp_path), "--quiet"]) == 0
    for p in (d / "out").iterdir():
        assert (tmp_path / p.name).read_bytes() == p.read_bytes(), p.name


def test_overrides(tmp_path):
    cfg = write(tmp_path, ZERO_CFG)
    rc = main(["solve", str(cfg), "--out", str(tmp_path / "o"), "--theta-step", "0.2", "--tau", "2e-4", "--tmax", "1.5", "--quiet"])
    assert rc == 0
    prob = json.loads((tmp_path / "o" / "summary.json").read_text())["problem"]
    assert (prob["theta_step"], prob["tau"], prob["t_max"]) == (0.2, 2e-4, 1.5)
    assert main(["solve", str(cfg), "--tau", "-1", "--quiet"]) == 1


def test_no_extremal_exits_2(tmp_path):
    cfg = write(tmp_path, "field.vx = 0\nfield.vy = 3\nproblem.A = 0, 0\nproblem.B = 0, -1\nsolver.theta_step = 0.2\nsolver.t_max = 1\n")
    assert main(["solve", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == 2
    svg = (tmp_path / "o" / "field.svg").read_text()
    assert "no extremals" in svg
    root = ET.fromstring(svg)
    assert not root.findall(".//{http://www.w3.org/2000/svg}polyline")


def test_plot_redraws_from_summary(solved, tmp_path):
    _, d, cfg = solved
    rc = main(["plot", str(cfg), "--from", str(d / "out" / "summary.json"), "--out", str(tmp_path), "--quiet"])
    assert rc == 0
    svg = (tmp_path / "field.svg").read_text()
    root = ET.fromstring(svg)
    lines = root.findall(".//{http://www.w3.org/2000/svg}polyline")
    summary = json.loads((d / "out" / "summary.json").read_text())
    assert len(lines) == summary["extremal_count"]
    assert ">0.70<" in svg
    assert "href" not in svg


def test_plot_missing_artifacts_exit_1(tmp_path):
    cfg = write(tmp_path, ZERO_CFG)
    assert main(["plot", str(cfg), "--from", str(tmp_path / "nope.json"), "--quiet"]) == 1
    (tmp_path / "s.json").write_text(json.dumps({"extremals": [{"csv": "gone.csv", "classification": "Inner", "T": 1.0}]}))
    assert main(["plot", str(cfg), "--from", str(tmp_path / "s.json"), "--quiet"]) == 1


def test_check_field_reports(tmp_path, capsys):
    tidal = write(tmp_path, "field.builtin = tidal_parabolic\n", "t.cfg")
    assert main(["check-field", str(tidal)]) == 0
    out = capsys.readouterr().out
    assert "VIOLATED" in out and "sup |v1| = 1.25" in out

    steady = write(tmp_path, "field.builtin = steady_parabolic\n", "s.cfg")
    assert main(["check-field", str(steady)]) == 0
    out = capsys.readouterr().out
    assert "dv1/dx2 = 0 identically" in out and "x1 in {0}" in out and "holds" in out

    zero = write(tmp_path, "field.vx = 0\nfield.vy = 0\n", "z.cfg")
    assert main(["check-field", str(zero)]) == 0
    out = capsys.readouterr().out
    assert "holds" in out and "notice" in out
