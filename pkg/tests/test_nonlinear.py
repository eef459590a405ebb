import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgcalc import ConvergenceError, build_cartesian, build_triangulated, l2_error
from dgcalc.errors import MonotonicityError, NonFiniteError
from dgcalc.harness.checks import abs_quadratic_spec
from dgcalc.solvers.fully_nonlinear import (
    FullyNonlinearSpec,
    SplitOptions,
    gmonotonicity_violations,
    lf_hat_F,
    moment_bound,
    solve_fnl_newton,
    solve_fnl_split,
)
from dgcalc.solvers.hamilton_jacobi import (
    HamiltonianSpec,
    certify_lf,
    cfl_time_step,
    godunov_1d,
    hj_evolve,
    lf_hamiltonian,
    lf_monotonicity_violations,
)
from dgcalc.solvers.newton import NewtonOptions, newton
from dgcalc.solvers.plaplace import PLaplaceDiscretization, solve_plaplace


# ----------------------------------------------------------------- Newton
def test_newton_scalar_system():
    res = lambda x: np.array([x[0] ** 2 - 2.0, x[1] - x[0]])
    jac = lambda x: np.array([[2 * x[0], 0.0], [-1.0, 1.0]])
    x, hist = newton(res, jac, [1.0, 0.0])
    np.testing.assert_allclose(x, [np.sqrt(2.0)] * 2, atol=1e-12)
    assert hist[-1]["residual"] <= 1e-10


def test_newton_finite_difference_jacobian():
    res = lambda x: np.array([np.exp(x[0]) - 3.0])
    x, _ = newton(res, None, [0.0], NewtonOptions(jacobian="finite_difference"))
    assert x[0] == pytest.approx(np.log(3.0), abs=1e-9)


def test_newton_reports_history_on_failure():
    res = lambda x: np.array([x[0] ** 2 + 1.0])
    jac = lambda x: np.array([[2 * x[0] + 1e-3]])
    with pytest.raises(ConvergenceError) as info:
        newton(res, jac, [1.0], NewtonOptions(max_iter=5))
    assert info.value.history and info.value.iterate is not None


def test_newton_options_validation():
    with pytest.raises(ValueError):
        NewtonOptions(atol=0.0)
    with pytest.raises(ValueError):
        NewtonOptions(jacobian="magic")


# --------------------------------------------------------------- p-Laplace
def test_plaplace_p2_is_linear():
    u = lambda x: np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
    f = lambda x: 2 * np.pi ** 2 * u(x)
    errs = []
    for n in (4, 8):
        mesh = build_triangulated([(0.0, 1.0), (0.0, 1.0)], n)
        uh, hist = solve_plaplace(mesh, 1, 2.0, f, 0.0, return_history=True)
        assert len(hist) <= 3
        errs.append(l2_error(uh, u))
    assert np.log2(errs[0] / errs[1]) > 1.5


def test_plaplace_jacobian_matches_finite_differences():
    mesh = build_triangulated([(0.0, 1.0), (0.0, 1.0)], 2)
    disc = PLaplaceDiscretization(mesh, 1, 4.0, 1.0, 0.0, 5.0, 1e-10)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(disc.residual(np.zeros(mesh.num_elements * 3)).size)
    J = disc.jacobian(x)
    J = J.toarray() if hasattr(J, "toarray") else J
    eps = 1e-6
    for j in range(0, x.size, 7):
        e = np.zeros_like(x)
        e[j] = eps
        fd = (disc.residual(x + e) - disc.residual(x - e)) / (2 * eps)
        np.testing.assert_allclose(J[:, j], fd, atol=1e-5 * max(1.0, np.abs(fd).max()))


# ------------------------------------------------------------ Hamilton-Jacobi
def test_lf_hamiltonian_values():
    H = lambda q: 0.5 * q[:, 0] ** 2
    # H((0 + 2)/2) - beta (2 - 0)/2 = 1/2 - 1
    assert lf_hamiltonian(H, 1.0, 0.0, 2.0) == pytest.approx(-0.5)
    assert lf_hamiltonian(lambda q: q[:, 0], 1.0, 0.0, 2.0) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        lf_hamiltonian(H, -1.0, 0.0, 1.0)


def test_godunov_values():
    H = lambda q: 0.5 * q[:, 0] ** 2
    # q- <= q+: min over [-1, 1] is 0; q- > q+: max over [-1, 1] is 1/2
    assert godunov_1d(H, -1.0, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert godunov_1d(H, 1.0, -1.0) == pytest.approx(0.5, abs=1e-12)
    assert godunov_1d(H, 0.3, 0.3) == pytest.approx(0.045)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_lf_consistency_property(a, b):
    H = lambda q: np.sin(q[:, 0]) + q[:, 1] ** 2
    q = np.array([a, b])
    assert lf_hamiltonian(H, [1.0, 10.0], q, q) == pytest.approx(np.sin(a) + b ** 2, abs=1e-12)


def test_lf_monotonicity_sampling():
    H = lambda q: 0.5 * q[:, 0] ** 2
    count, _ = lf_monotonicity_violations(H, 2.0, [-2.0], [2.0], rng=np.random.default_rng(0))
    assert count == 0
    with pytest.raises(MonotonicityError):
        certify_lf(HamiltonianSpec(H), 0.1, [-2.0], [2.0], rng=np.random.default_rng(0))


def test_cfl_violation_raises():
    mesh = build_cartesian(1, [(0.0, 1.0)], (10,))
    spec = HamiltonianSpec(lambda q: q[:, 0], beta=1.0)
    assert cfl_time_step(mesh, 1.0, 0.5) == pytest.approx(0.05)
    with pytest.raises(ValueError):
        hj_evolve(mesh, 0, spec, lambda x: x[:, 0], None, dt=0.2, steps=1)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_state_raises():
    mesh = build_cartesian(1, [(0.0, 1.0)], (10,))
    spec = HamiltonianSpec(lambda q: np.exp(q[:, 0] ** 2), beta=1.0)
    with pytest.raises(NonFiniteError) as info:
        hj_evolve(mesh, 0, spec, lambda x: 40 * x[:, 0] ** 2, None, dt=0.05, steps=50, check_cfl=False)
    assert info.value.step >= 1


def test_linear_advection_converges():
    def g(x, t):
        return np.sin(2 * np.pi * (np.asarray(x)[..., 0] - t))

    spec = HamiltonianSpec(lambda q: q[:, 0], beta=1.0)
    errs = []
    for n in (20, 40, 80):
        mesh = build_cartesian(1, [(0.0, 1.0)], (n,))
        traj = hj_evolve(mesh, 0, spec, lambda x: g(x, 0.0), g, T=0.2, cfl=0.4)
        errs.append(l2_error(traj.final, lambda x: g(x, 0.2)))
    assert errs[0] > errs[1] > errs[2]


# ----------------------------------------------------------- fully nonlinear
def test_fhat_consistency_exact():
    F = lambda P, x: -P[:, 0, 0] * np.abs(P[:, 0, 0]) + 1.0 + x[:, 0]
    rng = np.random.default_rng(1)
    for _ in range(20):
        P = rng.standard_normal((1, 1))
        x = rng.standard_normal(1)
        assert lf_hat_F(F, 3.0, P, P, P, P, x) == F(P[None], x[None])[0]


def test_moment_bound_certifies_gmonotonicity():
    # a decreasing F needs no moment at all
    G = lambda P, x: -P[:, 0, 0] * np.abs(P[:, 0, 0]) + 1.0
    x = np.linspace(0, 1, 5)[:, None]
    assert moment_bound(G, 1, x, rng=np.random.default_rng(0)) == 0.0
    # dF/dP = 2|P| <= 2 on the unit sample box, so A must reach 1
    F = lambda P, x: P[:, 0, 0] * np.abs(P[:, 0, 0])
    A = moment_bound(F, 1, x, rng=np.random.default_rng(0))
    assert 0.9 < A <= 1.0
    count, _ = gmonotonicity_violations(F, 1.05 * A, 1, x, rng=np.random.default_rng(1))
    assert count == 0
    count, _ = gmonotonicity_violations(F, 0.2 * A, 1, x, rng=np.random.default_rng(1))
    assert count > 0


def test_fnl_newton_linear_problem():
    # F(P) = -P + 2 is the Poisson problem -u'' = -2 with u = x^2 on the boundary
    spec = FullyNonlinearSpec(F=lambda P, x: -P[:, 0, 0] + 2.0, A=0.5, g=lambda x: x[:, 0] ** 2)
    mesh = build_cartesian(1, [(0.0, 1.0)], (8,))
    u = solve_fnl_newton(mesh, 2, spec)
    assert l2_error(u, lambda x: x[:, 0] ** 2) < 1e-6


def test_fnl_split_matches_newton():
    spec = abs_quadratic_spec(2.0)
    mesh = build_cartesian(1, [(0.0, 1.0)], (8,))
    a = solve_fnl_newton(mesh, 1, spec)
    b = solve_fnl_split(mesh, 1, spec)
    assert l2_error(a - b, 0.0) < 1e-7


def test_split_rejects_nonpositive_moment():
    spec = abs_quadratic_spec(2.0)
    spec.split = SplitOptions(A=0.0)
    with pytest.raises(ValueError):
        solve_fnl_split(build_cartesian(1, [(0.0, 1.0)], (4,)), 1, spec)


def test_split_certification_failure():
    F = lambda P, x: P[:, 0, 0] * np.abs(P[:, 0, 0])
    spec = FullyNonlinearSpec(F=F, A=0.05, g=0.0, split=SplitOptions(A=0.05))
    with pytest.raises(MonotonicityError):
        solve_fnl_split(build_cartesian(1, [(0.0, 1.0)], (4,)), 1, spec, initial=lambda x: 3 * x[:, 0] ** 2)
