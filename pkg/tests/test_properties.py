import numpy as np
import pytest

from dgcalc.harness import properties as props


@pytest.mark.parametrize("selector", [s for s in props.SELECTORS if s != "fd_equivalence"])
def test_property_groups_pass(selector):
    rep = props.property_suite(selector, seed=7, fields=10)
    for res in rep.results:
        assert res.passed, res.line()


def test_fd_equivalence_rectangular_grid():
    worst, count = props.check_fd_equivalence((10, 6), ((0.0, 2.0), (-1.0, 0.5)), np.random.default_rng(3), 5)
    assert count > 0 and worst <= props.FD_TOL


def test_result_lines():
    r = props.PropertyResult("ibp", "calculus", 12, 3e-13, 1e-11)
    assert r.passed and r.line().startswith("PASS calculus/ibp")
    bad = props.PropertyResult("ibp", "calculus", 12, 3e-9, 1e-11)
    assert not bad.passed and bad.line().startswith("FAIL")


def test_unknown_selector():
    with pytest.raises(ValueError):
        props.property_suite("bogus")
