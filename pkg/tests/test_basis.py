from math import comb, factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgcalc import ReferenceBasis, edge_quadrature, reference_mass_matrix, volume_quadrature
from dgcalc.basis import MAX_DEGREE, REFERENCE_MEASURE, affine_map
from dgcalc.mesh import build_triangulated


def _monomial_integral(kind, a, b=0):
    # exact integrals of x^a y^b on the reference cells
    if kind == "interval":
        return 1.0 / (a + 1)
    if kind == "box":
        return 1.0 / ((a + 1) * (b + 1))
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("kind", ["interval", "box", "triangle"])
@pytest.mark.parametrize("degree", [0, 1, 3, 6, 9])
def test_volume_quadrature_exact(kind, degree):
    d = 1 if kind == "interval" else 2
    q = volume_quadrature(d, kind, degree)
    assert q.weights.sum() == pytest.approx(REFERENCE_MEASURE[kind], abs=1e-14)
    for a in range(degree + 1):
        for b in range(degree + 1 - a if d == 2 else 1):
            vals = q.points[:, 0] ** a * (q.points[:, 1] ** b if d == 2 else 1.0)
            assert vals @ q.weights == pytest.approx(_monomial_integral(kind, a, b), abs=1e-14)


def test_edge_quadrature_exact():
    q = edge_quadrature(7)
    for a in range(8):
        assert (q.points[:, 0] ** a) @ q.weights == pytest.approx(1.0 / (a + 1), abs=1e-15)


@pytest.mark.parametrize("kind", ["interval", "box", "triangle"])
@pytest.mark.parametrize("r", [0, 1, 2, 3, 4])
def test_basis_dimension_and_mass(kind, r):
    b = ReferenceBasis(kind, r)
    d = b.d
    assert b.size == comb(d + r, r)
    M = reference_mass_matrix(d, r, kind)
    assert M.shape == (b.size, b.size)
    np.testing.assert_allclose(M, M.T, atol=1e-15)
    assert np.linalg.eigvalsh(M).min() > 0
    if b.orthonormal:
        np.testing.assert_allclose(M, np.eye(b.size), atol=1e-10)


def test_p0_mass_is_reference_measure():
    assert reference_mass_matrix(1, 0)[0, 0] == pytest.approx(1.0)
    assert reference_mass_matrix(2, 0, "triangle")[0, 0] == pytest.approx(0.5)


@pytest.mark.parametrize("kind", ["interval", "box", "triangle"])
def test_gradients_match_finite_differences(kind):
    b = ReferenceBasis(kind, 3)
    rng = np.random.default_rng(1)
    x = rng.uniform(0.1, 0.4, (5, b.d))
    eps = 1e-6
    for i in range(b.d):
        e = np.zeros(b.d)
        e[i] = eps
        fd = (b.eval(x + e) - b.eval(x - e)) / (2 * eps)
        np.testing.assert_allclose(b.grad(x)[..., i], fd, atol=1e-7)


def test_bad_inputs():
    with pytest.raises(ValueError):
        ReferenceBasis("triangle", -1)
    with pytest.raises(ValueError):
        ReferenceBasis("tetra", 1)
    with pytest.raises(ValueError):
        reference_mass_matrix(1, 1, "triangle")


def test_affine_map_vertices():
    m = build_triangulated([(0.0, 2.0), (0.0, 1.0)], 1)
    F = affine_map(m)
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(F(ref), m.vertices[m.cells], atol=1e-15)
    np.testing.assert_allclose(np.abs(F.det), 2 * m.measure)


@settings(max_examples=30, deadline=None)
@given(a=st.integers(0, 6), b=st.integers(0, 6))
def test_triangle_rule_property(a, b):
    deg = min(a + b, MAX_DEGREE["triangle"])
    q = volume_quadrature(2, "triangle", deg)
    vals = q.points[:, 0] ** a * q.points[:, 1] ** b
    assert vals @ q.weights == pytest.approx(_monomial_integral("triangle", a, b), rel=1e-12)
