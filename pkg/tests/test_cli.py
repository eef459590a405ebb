import json
import subprocess
import sys

import pytest

from dgcalc.harness.cli import main


def _run(*args, env=None):
    return subprocess.run([sys.executable, "-m", "dgcalc.harness.cli", *args],
                          capture_output=True, text=True, env=env)


def test_mesh_info(capsys):
    assert main(["mesh-info", "--kind", "triangle", "--n", "2"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["elements"] == 8 and info["valid"] is True


def test_mesh_info_bad_extent(capsys):
    assert main(["mesh-info", "--kind", "box", "--extents", "[[1, 0], [0, 1]]"]) == 2


STDOUT_CONFIG = """
name = "stdout"
[problem]
kind = "poisson_ldg"
exact = "sin(pi*x1)*sin(pi*x2)"
[mesh]
kind = "box"
base = 4
refinements = 1
"""


def test_study_to_stdout(tmp_path, capsys):
    cfg = tmp_path / "s.toml"
    cfg.write_text(STDOUT_CONFIG)
    code = main(["study", str(cfg), "-q"])
    out = capsys.readouterr().out
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "level,h,dof,l2_error,l2_order,h1_error,h1_order,seconds"
    assert len(lines) == 3


def test_study_writes_files(tmp_path):
    csv_path, svg_path = tmp_path / "s.csv", tmp_path / "s.svg"
    code = main(["study", "poisson_dwdg", "--base", "4", "--refinements", "1", "-q",
                 "--csv", str(csv_path), "--svg", str(svg_path), "--timing"])
    assert code == 0
    rows = csv_path.read_text().splitlines()
    assert len(rows) == 3 and rows[1].split(",")[-1] != ""
    assert svg_path.read_text().startswith("<svg")


def test_study_set_override(tmp_path):
    out = tmp_path / "o.csv"
    code = main(["study", "poisson_ldg", "--base", "5", "--set", "base=3", "--set", "refinements=1",
                 "--csv", str(out), "-q"])
    assert code == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 3
    assert float(rows[1].split(",")[1]) == pytest.approx(1.0 / 3.0)


@pytest.mark.parametrize("argv", [
    ["study", "no_such_config"],
    ["study", "poisson_ldg", "--set", "colour=red"],
    ["study", "poisson_ldg", "--set", "novalue"],
    ["study", "poisson_ldg", "--refinements", "0"],
])
def test_study_usage_errors(argv, capsys):
    assert main(argv) == 2


def test_props_single_selector(capsys):
    assert main(["props", "--selector", "fd_equivalence"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[-1].startswith("PASS")


def test_props_unknown_selector(capsys):
    assert main(["props", "--selector", "nonsense"]) == 2


def test_hj_command(capsys):
    assert main(["hj"]) == 0
    out = capsys.readouterr().out
    assert "PASS hj-linear-oracle" in out and "FAIL" not in out


def test_argparse_usage_error():
    proc = _run("study")
    assert proc.returncode == 2
