import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dgcalc import (
    DGField,
    PenaltyConfig,
    Side,
    build_cartesian,
    build_triangulated,
    curl2d,
    discrete_partial,
    divergence,
    gradient,
    hessian,
    laplacian,
    lifting,
    local_derivative_matrices,
    project,
    trace_Q,
)
from dgcalc.calculus import as_side, as_side_pair, piecewise_partial
from dgcalc.field import random_field


@pytest.fixture
def line4():
    return build_cartesian(1, [(0.0, 1.0)], (4,))


def _cells(mesh, vals):
    return DGField(mesh, 0, np.asarray(vals, dtype=float)[:, None])


# frozen r = 0 oracles on h = 0.25 with cell values 0, 1, 4, 9
def test_sided_differences_oracle(line4):
    u = _cells(line4, [0, 1, 4, 9])
    plus = discrete_partial(u, 0, "+").coeffs[:, 0]
    minus = discrete_partial(u, 0, "-").coeffs[:, 0]
    central = discrete_partial(u, 0, "central").coeffs[:, 0]
    assert plus[1] == pytest.approx(12.0, abs=1e-12)
    assert minus[1] == pytest.approx(4.0, abs=1e-12)
    assert central[1] == pytest.approx(8.0, abs=1e-12)
    # boundary traces are the interior trace, so the outer one-sided differences vanish
    assert plus[3] == pytest.approx(0.0, abs=1e-12)
    assert minus[0] == pytest.approx(0.0, abs=1e-12)


def test_second_difference_oracle(line4):
    u = _cells(line4, [0, 1, 4, 9])
    d2 = discrete_partial(discrete_partial(u, 0, "-"), 0, "+").coeffs[:, 0]
    np.testing.assert_allclose(d2[1:3], [32.0, 32.0], atol=1e-11)


def test_boundary_data_ghost_value(line4):
    u = _cells(line4, [0, 1, 4, 9])
    d = discrete_partial(u, 0, "-", g=2.0).coeffs[:, 0]
    assert d[0] == pytest.approx((0.0 - 2.0) / 0.25, abs=1e-12)


def test_lifting_two_cells_by_hand():
    # (L v, phi) = <[v] n, {phi}>: one interior edge at 1/2, n = +1, [v] = 1 - 3
    m = build_cartesian(1, [(0.0, 1.0)], (2,))
    L = lifting(_cells(m, [1.0, 3.0]), 0).coeffs[:, 0]
    np.testing.assert_allclose(L, [-2.0, -2.0], atol=1e-14)


def test_r0_local_matrix_stencil(line4):
    loc = local_derivative_matrices(line4, 0)
    selfb, nbrb = loc.blocks(0, "+")
    # forward difference: -1/h on self, +1/h on the right neighbour
    k = 1
    right = list(loc.nbr[k]).index(2)
    assert (loc.minv[k] @ selfb[k])[0, 0] == pytest.approx(-4.0)
    assert (loc.minv[k] @ nbrb[k, right])[0, 0] == pytest.approx(4.0)


@pytest.mark.parametrize("builder", [
    lambda: build_cartesian(1, [(0.0, 1.0)], (5,)),
    lambda: build_cartesian(2, [(0.0, 1.0), (0.0, 2.0)], (3, 4)),
    lambda: build_triangulated([(0.0, 1.0), (0.0, 1.0)], 3),
])
@pytest.mark.parametrize("r", [0, 1, 2])
def test_local_matrices_match_global_operator(builder, r):
    mesh = builder()
    rng = np.random.default_rng(r)
    u = random_field(mesh, r, rng)
    loc = local_derivative_matrices(mesh, r)
    g = lambda x: np.cos(x[:, 0])
    for i in range(mesh.dim):
        for s in ("-", "+", "central"):
            ref = discrete_partial(u, i, s).coeffs
            np.testing.assert_allclose(loc.apply(u.coeffs, i, s), ref, atol=1e-12 * max(1, np.abs(ref).max()))
            ref = discrete_partial(u, i, s, g=g).coeffs
            np.testing.assert_allclose(loc.apply(u.coeffs, i, s, g=g), ref,
                                       atol=1e-12 * max(1, np.abs(ref).max()))


@pytest.mark.parametrize("r", [1, 2])
def test_exact_on_continuous_polynomials(r):
    mesh = build_triangulated([(0.0, 1.0), (0.0, 1.0)], 3)
    f = lambda x: x[:, 0] ** r - 2 * x[:, 0] * x[:, 1] ** (r - 1)
    u = project(f, mesh, r)
    pw = piecewise_partial(u, 1)
    for s in ("-", "+", "central"):
        np.testing.assert_allclose(discrete_partial(u, 1, s).coeffs, pw.coeffs, atol=1e-11)


def test_trace_Q_sides():
    m = build_cartesian(1, [(0.0, 1.0)], (2,))
    u = _cells(m, [1.0, 3.0])
    e = int(m.interior_edges[0])
    assert trace_Q(u, e, 0, "-")[0] == pytest.approx(1.0)
    assert trace_Q(u, e, 0, "+")[0] == pytest.approx(3.0)
    assert trace_Q(u, e, 0, "central")[0] == pytest.approx(2.0)
    b = int(m.boundary_edges[0])
    assert trace_Q(u, b, 0, "+")[0] == trace_Q(u, b, 0, "-")[0]


def test_trace_Q_zero_normal_component_takes_minus_from_K():
    # on a vertical edge of a box mesh n_2 = 0 so sgn(0) = +1 decides
    m = build_cartesian(2, [(0.0, 1.0), (0.0, 1.0)], (2, 1))
    u = _cells(m, [1.0, 5.0])
    e = int(m.interior_edges[0])
    assert m.edge_normals[e, 1] == 0.0
    assert trace_Q(u, e, 1, "-")[0] == pytest.approx(1.0)
    assert trace_Q(u, e, 1, "+")[0] == pytest.approx(5.0)


def test_gamma_penalty_adds_jump_term():
    m = build_cartesian(1, [(0.0, 1.0)], (2,))
    u = _cells(m, [1.0, 3.0])
    base = discrete_partial(u, 0, "+").coeffs[:, 0]
    pen = PenaltyConfig(gamma_minus=-1.0, gamma_plus=1.0)
    with_gamma = discrete_partial(u, 0, "+", pen=pen).coeffs[:, 0]
    # <gamma [v], [phi]> / |K| with [v] = -2 and [phi] = +1 / -1
    np.testing.assert_allclose(with_gamma - base, [-4.0, 4.0], atol=1e-13)
    assert pen.ibp_compatible and not pen.is_zero_gamma


def test_vector_operators_consistent():
    mesh = build_triangulated([(0.0, 1.0), (0.0, 1.0)], 2)
    u = project(lambda x: x[:, 0] ** 2 * x[:, 1], mesh, 2)
    gr = gradient(u, "-")
    assert len(gr) == 2
    lap = laplacian(u, "+-")
    H = hessian(u, "+-")
    np.testing.assert_allclose(lap.coeffs, (H[0, 0] + H[1, 1]).coeffs)
    np.testing.assert_allclose(divergence(gr, "+").coeffs, lap.coeffs, atol=1e-12)
    c = curl2d(gradient(u, "central"), "central")
    assert c.coeffs.shape == u.coeffs.shape
    np.testing.assert_allclose(curl2d(curl2d(u)).coeffs,
                               -laplacian(u, "central").coeffs, atol=1e-10)


def test_side_parsing():
    assert as_side("+") is Side.PLUS and as_side("minus") is Side.MINUS and as_side(0) is Side.CENTRAL
    assert as_side_pair("-+") == (Side.MINUS, Side.PLUS)
    with pytest.raises(ValueError):
        as_side("x")
    with pytest.raises(ValueError):
        as_side_pair("-+-")


def test_bad_axis():
    m = build_cartesian(1, [(0.0, 1.0)], (2,))
    with pytest.raises(ValueError):
        discrete_partial(_cells(m, [0, 1]), 1)
    with pytest.raises(ValueError):
        PenaltyConfig(gamma_plus=np.inf)


@settings(max_examples=40, deadline=None)
@given(vals=arrays(np.float64, st.integers(3, 12), elements=st.floats(-1e3, 1e3)))
def test_r0_forward_backward_property(vals):
    n = vals.size
    m = build_cartesian(1, [(0.0, 1.0)], (n,))
    u = _cells(m, vals)
    plus = discrete_partial(u, 0, "+").coeffs[:, 0]
    minus = discrete_partial(u, 0, "-").coeffs[:, 0]
    scale = max(1.0, np.abs(vals).max()) * n
    np.testing.assert_allclose(plus[:-1], n * np.diff(vals), atol=1e-12 * scale)
    np.testing.assert_allclose(minus[1:], n * np.diff(vals), atol=1e-12 * scale)
