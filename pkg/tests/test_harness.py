import math

import numpy as np
import pytest

from dgcalc.harness.config import (
    ConfigError,
    StudyConfig,
    builtin_config_path,
    config_from_dict,
    load_config,
)
from dgcalc.harness.emit import CSV_COLUMNS, read_csv, report_csv, write_csv, write_svg
from dgcalc.harness.expr import ExpressionError, laplacian_of, parse
from dgcalc.harness.study import StudyReport, StudyRow, observed_orders, run_study


# ---------------------------------------------------------------- expressions
def test_expression_evaluation():
    e = parse("sin(pi*x1)*x2^2 + 3")
    x = np.array([[0.5, 2.0], [0.0, 1.0]])
    np.testing.assert_allclose(e(x), [7.0, 3.0])


def test_expression_derivatives():
    e = parse("x1^3 * x2")
    np.testing.assert_allclose(e.diff("x1")(np.array([[2.0, 1.5]])), [18.0])
    np.testing.assert_allclose(laplacian_of(e, 2)(np.array([[2.0, 1.5]])), [18.0])


def test_expression_time_and_cbrt():
    e = parse("cbrt(x1) - t")
    np.testing.assert_allclose(e(np.array([[-8.0]]), 1.0), [-3.0])
    np.testing.assert_allclose(e.diff("x1")(np.array([[8.0]])), [1.0 / 12.0])
    assert e.at_time(2.0)(np.array([[1.0]]))[0] == pytest.approx(-1.0)


@pytest.mark.parametrize("text", ["__import__('os')", "x1.real", "foo(x1)", "x3", "lambda: 1", "1 +"])
def test_expression_rejects_unsafe_text(text):
    with pytest.raises(ExpressionError):
        parse(text)


# --------------------------------------------------------------------- config
def test_builtin_configs_load():
    for name in ("poisson_ldg", "poisson_dwdg", "table1_r1", "table1_r2", "table2", "biharmonic",
                 "hj_linear", "fnl"):
        cfg = load_config(builtin_config_path(name))
        assert cfg.levels >= 2


def test_config_from_dict_sections():
    cfg = config_from_dict({
        "name": "demo",
        "problem": {"kind": "poisson_ldg", "exact": "x1*x2"},
        "mesh": {"kind": "triangle", "base": 4, "refinements": 1},
        "discretization": {"r": 2},
        "penalty": {"eta1": 5.0},
    })
    assert (cfg.name, cfg.mesh_kind, cfg.base, cfg.r, cfg.eta1) == ("demo", "triangle", 4, 2, 5.0)


@pytest.mark.parametrize("data", [
    {"problem": {"kind": "wave", "exact": "x1"}},
    {"problem": {"kind": "poisson_ldg"}},
    {"problem": {"kind": "poisson_ldg", "exact": "x1"}, "mesh": {"refinements": 0}},
    {"problem": {"kind": "poisson_ldg", "exact": "x1"}, "mesh": {"colour": 1}},
    {"problem": {"kind": "poisson_ldg", "exact": "x1 +"}},
    {"problem": {"kind": "poisson_ldg", "exact": "x1"}, "mesh": {"kind": "interval"}},
    {"problem": {"kind": "poisson_ldg", "exact": "x1"}, "extra": 1},
])
def test_config_errors(data):
    with pytest.raises((ConfigError, ValueError)):
        config_from_dict(data)


def test_config_override():
    cfg = StudyConfig(exact="x1")
    new = cfg.override(r=3, base=None)
    assert new.r == 3 and new.base == cfg.base and cfg.r == 1
    with pytest.raises(ConfigError):
        cfg.override(colour=1)


def test_unknown_builtin():
    with pytest.raises(ConfigError):
        builtin_config_path("nope")


# ---------------------------------------------------------------------- study
def test_observed_orders_oracle():
    orders = observed_orders([1e-2, 2.5e-3], [0.1, 0.05])
    assert orders[0] is None
    assert abs(orders[1] - 2.0) < 1e-12


def test_small_study_runs():
    cfg = StudyConfig(kind="poisson_ldg", exact="sin(pi*x1)*sin(pi*x2)", base=4, refinements=1, r=1)
    rep = run_study(cfg)
    assert len(rep) == 2
    assert rep.rows[1].l2_error < rep.rows[0].l2_error
    assert rep.rows[1].l2_order > 1.0


# ----------------------------------------------------------------------- emit
def _report(timing=False):
    rows = [
        StudyRow(0, 0.1, 300, 1e-2, None, 0.3, None, 0.5),
        StudyRow(1, 0.05, 1200, 2.5e-3, 2.0, 0.15, 1.0, 1.5),
        StudyRow(2, 0.025, 4800, 6.25e-4, 2.0, 0.075, 1.0, 4.0),
    ]
    return StudyReport(rows=rows, timing=timing)


def test_csv_header_only_for_empty_report():
    assert report_csv(StudyReport()) == ",".join(CSV_COLUMNS) + "\n"


def test_csv_rows_and_roundtrip(tmp_path):
    text = report_csv(_report())
    lines = text.splitlines()
    assert len(lines) == 4
    assert lines[1] == "0,0.1,300,0.01,,0.3,,"
    back = read_csv(text)
    for a, b in zip(back.rows, _report().rows):
        assert abs(a.l2_error - b.l2_error) <= 1e-15 * b.l2_error
        assert a.l2_order == b.l2_order and a.seconds is None
    p = write_csv(_report(timing=True), tmp_path / "r.csv")
    timed = read_csv(p)
    assert timed.timing and timed.rows[2].seconds == 4.0


def test_csv_rejects_foreign_file():
    with pytest.raises(ValueError):
        read_csv("a,b\n1,2\n")


def test_svg_output(tmp_path):
    p = write_svg(_report(), tmp_path / "plot.svg")
    text = p.read_text()
    assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
    assert text.count("<polyline") == 2
    assert "slope 2" in text and "slope 1" in text
    empty = write_svg(StudyReport(), tmp_path / "empty.svg").read_text()
    assert "<polyline" not in empty


def test_nan_formatting():
    rep = StudyReport(rows=[StudyRow(0, 0.1, 3, math.nan, None, 1.0, None)])
    assert "nan" in report_csv(rep)
