import numpy as np
import pytest

from dgcalc import (
    DGField,
    EvaluationError,
    VectorField,
    broken_h1_error,
    build_cartesian,
    build_triangulated,
    edge_traces,
    l2_error,
    project,
    project_vector,
)
from dgcalc.field import embed, inner, l2_norm, random_field


def _poly(x):
    return 1.0 + 2.0 * x[:, 0] - x[:, 1] + 0.5 * x[:, 0] * x[:, 1] - x[:, 1] ** 2


@pytest.fixture
def tri():
    return build_triangulated([(0.0, 1.0), (0.0, 1.0)], 3)


def test_projection_reproduces_polynomials(tri):
    u = project(_poly, tri, 2)
    assert l2_error(u, _poly) < 1e-13
    pts = np.array([[0.2, 0.3], [0.7, 0.1]])
    np.testing.assert_allclose(u(pts), _poly(pts), atol=1e-13)


def test_projection_is_orthogonal(tri):
    rng = np.random.default_rng(0)
    f = lambda x: np.sin(3 * x[:, 0]) * np.exp(x[:, 1])
    u = project(f, tri, 1)
    e = project(f, tri, 4) - embed(u, 4)
    for _ in range(5):
        v = random_field(tri, 1, rng)
        assert abs(inner(e, embed(v, 4))) < 1e-6 * l2_norm(v)


def test_l2_error_converges_at_r_plus_one():
    f = lambda x: np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
    errs = [l2_error(project(f, build_triangulated([(0, 1), (0, 1)], n), 1), f) for n in (8, 16)]
    assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.1)


def test_broken_h1_of_exact_polynomial(tri):
    u = project(_poly, tri, 2)
    grad = lambda x: np.stack([2.0 + 0.5 * x[:, 1], -1.0 + 0.5 * x[:, 0] - 2 * x[:, 1]], axis=1)
    assert broken_h1_error(u, grad) < 1e-12


def test_edge_traces_continuous_function(tri):
    u = project(_poly, tri, 2)
    e = int(tri.interior_edges[0])
    vK, vKp, jump, avg = edge_traces(u, e)
    np.testing.assert_allclose(vK, vKp, atol=1e-13)
    np.testing.assert_allclose(jump, 0.0, atol=1e-13)
    np.testing.assert_allclose(avg, vK, atol=1e-13)
    b = int(tri.boundary_edges[0])
    vK, vKp, jump, avg = edge_traces(u, b)
    np.testing.assert_array_equal(jump, vK)
    np.testing.assert_array_equal(avg, vK)
    with pytest.raises(IndexError):
        edge_traces(u, tri.num_edges)


def test_jump_sign_follows_labels():
    m = build_cartesian(1, [(0.0, 1.0)], (2,))
    u = DGField(m, 0, [[1.0], [3.0]])
    e = int(m.interior_edges[0])
    vK, vKp, jump, avg = edge_traces(u, e)
    assert (vK[0], vKp[0], jump[0], avg[0]) == (1.0, 3.0, -2.0, 2.0)


def test_arithmetic_and_mismatch(tri):
    a = project(_poly, tri, 1)
    b = 2.0 * a - a
    np.testing.assert_allclose(b.coeffs, a.coeffs)
    with pytest.raises(ValueError):
        a + project(_poly, tri, 2)
    assert (-a).coeffs[0, 0] == -a.coeffs[0, 0]
    with pytest.raises(ValueError):
        a.coeffs[0, 0] = 1.0


def test_vector_projection(tri):
    v = project_vector(lambda x: np.stack([x[:, 0], x[:, 1] ** 2], axis=1), tri, 2)
    assert isinstance(v, VectorField) and len(v) == 2
    assert l2_error(v[1], lambda x: x[:, 1] ** 2) < 1e-13


def test_non_finite_callable_is_reported(tri):
    def bad(x):
        out = np.ones(x.shape[0])
        out[0] = np.nan
        return out

    with pytest.raises(EvaluationError) as info:
        project(bad, tri, 1)
    assert info.value.element == 0


def test_csv_outputs():
    m = build_cartesian(1, [(0.0, 1.0)], (2,))
    u = project(lambda x: x[:, 0], m, 1)
    text = u.to_csv()
    assert text.splitlines()[0] == "element,index,value"
    assert len(text.splitlines()) == 1 + 4
    samples = u.samples_csv().splitlines()
    assert samples[0] == "x1,value"
    assert [float(s.split(",")[1]) for s in samples[1:]] == pytest.approx([0.25, 0.75])
