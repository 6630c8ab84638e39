import json
import math
import re
import subprocess
import sys

import numpy as np
import pytest

from spiralemb.cli import dumps, read_report, render_svg, run
from spiralemb.maps_core import RectRegion, identity
from spiralemb.spiral import SpiralParams, spiral_map
from spiralemb.verifier import SampleGrid, VerificationReport, check_symplectic


def _run(tmp_path, *argv):
    out = tmp_path / "out"
    code = run([*argv, "--out", str(out)])
    return code, out


def test_spiral_csv(tmp_path):
    code, out = _run(tmp_path, "spiral", "--A", "1", "--B", "1", "--lambda", "0.05", "--delta", "0",
                     "--r", "0", "--grid", "20")
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "x,y,u,v"
    assert len(lines) == 401
    row = lines[1].split(",")
    assert all(re.fullmatch(r"-?\d\.\d{11}e[+-]\d\d", v) for v in row)
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    expect = spiral_map(SpiralParams(1, 1, 0.05)).apply(data[:, :2])
    assert np.allclose(data[:, 2:], expect, rtol=1e-11, atol=1e-12)


def test_csv_byte_deterministic(tmp_path, monkeypatch):
    _, a = _run(tmp_path / "..", "double-spiral", "--epsilon", "0.1", "--grid", "30")
    first = a.read_bytes()
    monkeypatch.setenv("SPIRALEMB_THREADS", "4")
    _, b = _run(tmp_path, "double-spiral", "--epsilon", "0.1", "--grid", "30")
    assert first == b.read_bytes()


def test_chain_verify_json(tmp_path):
    code, out = _run(tmp_path, "chain-verify", "--epsilon", "0.05", "--samples", "100000",
                     "--grid", "12")
    assert code == 0
    d = json.loads(out.read_text())
    assert {"sup_norm", "bound", "c", "C", "passed"} <= set(d)
    assert d["passed"] is True and d["samples"] >= 100000
    assert d["sup_norm"] <= d["bound"]


def test_plan_family_json(tmp_path):
    code, out = _run(tmp_path, "plan", "--mode", "family", "--epsilon", "0.1")
    assert code == 0
    d = json.loads(out.read_text())
    assert d["S"] == pytest.approx(11.111111, abs=1e-6)
    assert d["R"] == pytest.approx(1.924501, abs=1e-6)


def test_plan_nesting_and_kh(tmp_path):
    code, out = _run(tmp_path, "plan", "--mode", "nesting", "--eps-list", "0.1,0.05,0.02",
                     "--probe", "0.999,50")
    assert code == 0 and json.loads(out.read_text())["passed"] is True
    assert run(["plan", "--mode", "nesting", "--eps-list", "0.05,0.1"]) == 2
    assert run(["plan", "--mode", "kh", "--T", "0.3"]) == 2


def test_verify_failure_exit_one_report_written(tmp_path):
    code, out = _run(tmp_path, "verify", "--check", "symplectic", "--map", "spiral",
                     "--orientation", "-1", "--grid", "10")
    assert code == 1
    d = json.loads(out.read_text())
    assert d["passed"] is False and d["violations"] == 100
    assert d["worst_violation"]["location"] == [0.05, 0.05]


@pytest.mark.parametrize("check,mapname,extra,code", [
    ("symplectic", "beta1", [], 0),
    ("fd", "flow", ["--samples", "200"], 0),
    ("contained", "tuck", [], 0),
    ("avoids", "beta2", [], 0),
    ("avoids", "beta2", ["--radius", "1.0"], 1),
    ("injective", "identity", ["--grid", "20"], 0),
    ("area", "F", ["--samples", "20000"], 0),
    ("contained", "spiral", ["--L", "0.5", "--grid", "50"], 0),
])
def test_verify_matrix(tmp_path, check, mapname, extra, code):
    got, out = _run(tmp_path, "verify", "--check", check, "--map", mapname, "--grid", "60", *extra)
    assert got == code
    assert json.loads(out.read_text())["passed"] is (code == 0)


def test_verify_usage_errors(capsys):
    assert run(["verify", "--check", "injective", "--map", "flow"]) == 2
    assert run(["verify", "--check", "avoids", "--map", "tuck"]) == 2
    assert run(["verify", "--check", "nope", "--map", "spiral"]) == 2
    err = capsys.readouterr().err
    assert "usage" in err


def test_unknown_subcommand_and_flag(capsys):
    assert run(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err
    assert run(["spiral", "--bogus", "1"]) == 2
    assert run([]) == 2


def test_bad_parameter_is_usage_error():
    assert run(["spiral", "--lambda", "-1"]) == 2
    assert run(["chain-verify", "--epsilon", "0.5"]) == 2


def test_unwritable_path_exit_one(tmp_path):
    assert run(["figure", "--name", "spiral", "--out", str(tmp_path / "missing" / "f.svg")]) == 1
    assert run(["plan", "--mode", "kh", "--out", str(tmp_path / "missing" / "p.json")]) == 1


def test_config_file_defaults_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epsilon": 0.05, "T": 2}))
    _, out = _run(tmp_path, "--config", str(cfg), "plan", "--mode", "kh")
    d = json.loads(out.read_text())
    assert d["eps"] == 0.05 and d["T"] == 2.0
    _, out = _run(tmp_path, "plan", "--mode", "kh", "--config", str(cfg), "--T", "3")
    assert json.loads(out.read_text())["T"] == 3.0
    cfg.write_text("[1, 2]")
    assert run(["--config", str(cfg), "plan", "--mode", "kh"]) == 2


def test_square_to_ball_radius(tmp_path):
    code, out = _run(tmp_path, "figure", "--name", "square-to-ball", "--format", "json")
    assert code == 0
    d = json.loads(out.read_text())
    outer = next(c["radius"] for c in d["circles"] if c["role"] == "outer")
    assert outer == pytest.approx(math.sqrt(1.01 / math.pi), rel=1e-14)
    assert abs(outer / (1 / math.sqrt(math.pi)) - 1) < 0.01


@pytest.mark.parametrize("name", ["spiral", "square-to-ball", "double-spiral", "domain-model"])
def test_figures_render(tmp_path, name):
    code, out = _run(tmp_path, "figure", "--name", name, "--epsilon", "0.1")
    assert code == 0
    text = out.read_text()
    assert text.startswith("<?xml") and text.rstrip().endswith("</svg>")
    assert text.count("<polyline") >= 3
    if name != "domain-model":
        r = float(re.search(r'class="outer" cx="0" cy="0" r="([^"]+)"', text).group(1))
        vb = [float(v) for v in re.search(r'viewBox="([^"]+)"', text).group(1).split()]
        assert vb[2] == pytest.approx(2.1 * r, rel=1e-5)


def test_double_spiral_figure_has_inner_circle(tmp_path):
    _, out = _run(tmp_path, "figure", "--name", "double-spiral", "--epsilon", "0.1")
    r = float(re.search(r'class="inner" cx="0" cy="0" r="([^"]+)"', out.read_text()).group(1))
    assert r == pytest.approx(math.sqrt(0.8 / math.pi), rel=1e-5)


def test_render_svg_needs_geometry():
    from spiralemb.maps_core import SpiralembError
    with pytest.raises(SpiralembError):
        render_svg([], [])


def test_json_floats_17_digits_roundtrip(tmp_path):
    rep = check_symplectic(spiral_map(SpiralParams(1, 1, 0.1, orientation=-1)),
                           SampleGrid(RectRegion(1.0, 1.0), 7))
    path = tmp_path / "r.json"
    from spiralemb.cli import write_report
    write_report(rep, str(path))
    text = path.read_text()
    for num in re.findall(r"-?\d\.\d+e[+-]\d+", text):
        assert len(num.lstrip("-").split("e")[0].replace(".", "")) == 17
    assert read_report(str(path)) == rep
    write_report(rep, str(tmp_path / "r2.json"))
    assert (tmp_path / "r2.json").read_bytes() == path.read_bytes()


def test_dumps_special_values():
    text = dumps({"a": math.inf, "b": [1, 2.5, None, True], "c": {}, "d": []})
    d = json.loads(text)
    assert d == {"a": math.inf, "b": [1, 2.5, None, True], "c": {}, "d": []}
    with pytest.raises(TypeError):
        dumps({"x": object()})


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "spiralemb.cli", "figure", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "square-to-ball" in res.stdout and "default" in res.stdout
