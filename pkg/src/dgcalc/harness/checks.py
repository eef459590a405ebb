"""Self-contained verification runs for the nonlinear solvers (used by the CLI and tests)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..field import l2_error
from ..mesh import build_cartesian
from ..solvers.fully_nonlinear import FullyNonlinearSpec, solve_fnl_newton, solve_fnl_split
from ..solvers.hamilton_jacobi import HamiltonianSpec, hj_evolve, lf_hamiltonian
from ..solvers.newton import NewtonOptions


@dataclass
class CheckResult:
    name: str
    passed: bool
    summary: str
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.summary}"


# ------------------------------------------------------------ Hamilton-Jacobi
def linear_hj_oracle(n: int = 50, steps: int = 100, cfl: float = 0.5):
    """Compare r = 0 forward Euler with ``H(q) = q``, beta = 1, against an upwind difference oracle.

    The oracle works on plain arrays: ``D-`` is the backward difference with
    ghost value ``g(0, t)``, ``D+`` the forward difference with the boundary
    value replacing the trace on the inflow side and zero on the outflow side.

    Returns
    -------
    CheckResult
        ``data["mismatched_steps"]`` lists the steps whose states differ in any bit.
    """
    mesh = build_cartesian(1, [(0.0, 1.0)], (n,))

    def g(x, t):
        return np.sin(2 * np.pi * (np.asarray(x)[..., 0] - t))

    def H(q):
        return q[:, 0]

    dt = cfl / n
    traj = hj_evolve(mesh, 0, HamiltonianSpec(H, beta=1.0), lambda x: g(x, 0.0), g, dt=dt,
                     steps=steps, scheme="euler", store_every=1)
    c = 1.0 / np.diff(np.linspace(0.0, 1.0, n + 1))
    u = traj.fields[0].coeffs[:, 0].copy()
    mismatched, worst = [], 0.0
    for k in range(1, steps + 1):
        t = (k - 1) * dt
        gl = float(g(np.array([[0.0]]), t)[0])
        dm = c * (u - np.concatenate([[gl], u[:-1]]))
        dp = np.empty_like(u)
        dp[:-1] = c[:-1] * (u[1:] - u[:-1])
        dp[0] = c[0] * (u[1] - gl)
        dp[-1] = 0.0
        u = u - dt * lf_hamiltonian(H, 1.0, dm[:, None], dp[:, None])
        got = traj.fields[k].coeffs[:, 0]
        if not np.array_equal(got, u):
            mismatched.append(k)
            worst = max(worst, float(np.max(np.abs(got - u))))
    ok = not mismatched
    return CheckResult(
        "hj-linear-oracle", ok,
        f"{steps} steps, {len(mismatched)} mismatched, max diff {worst:.3e}",
        {"mismatched_steps": mismatched, "max_diff": worst},
    )


def _cell_means(values, factor):
    return values.reshape(-1, factor).mean(axis=1)


def burgers_self_convergence(levels=(20, 40, 80, 160), ref_factor: int = 4, T: float = 0.2,
                             cfl: float = 0.4):
    """``H(q) = q^2 / 2`` with LF (beta = 1), ``u0 = |x - 1/2|``, r = 0.

    Errors are L-infinity differences of cell values against a run on a mesh
    ``ref_factor`` times finer than the finest level, averaged onto each
    coarse cell.
    """
    spec = HamiltonianSpec(lambda q: 0.5 * q[:, 0] ** 2, beta=1.0)

    def run(n):
        mesh = build_cartesian(1, [(0.0, 1.0)], (n,))
        traj = hj_evolve(mesh, 0, spec, lambda x: np.abs(x[:, 0] - 0.5), None, dt=cfl / n, T=T)
        return traj.final.coeffs[:, 0]

    nref = levels[-1] * ref_factor
    ref = run(nref)
    errors = [float(np.max(np.abs(run(n) - _cell_means(ref, nref // n)))) for n in levels]
    ok = all(b < a for a, b in zip(errors, errors[1:]))
    return CheckResult(
        "hj-burgers-self-convergence", ok,
        "Linf errors " + ", ".join(f"{e:.3e}" for e in errors),
        {"levels": list(levels), "errors": errors},
    )


# ------------------------------------------------------------ fully nonlinear
def abs_quadratic_spec(A: float = 2.0) -> FullyNonlinearSpec:
    """``F(p) = -p|p| + 1`` on (0, 1) with ``g = x^2 / 2``; the unique solution is ``x^2 / 2``."""

    def F(P, x):
        p = P[:, 0, 0]
        return -p * np.abs(p) + 1.0

    def dF(P, x):
        return (-2.0 * np.abs(P[:, 0, 0])).reshape(P.shape)

    def g(x):
        return 0.5 * np.asarray(x)[:, 0] ** 2

    return FullyNonlinearSpec(F=F, A=A, g=g, dF=dF, exact=g,
                              newton=NewtonOptions(jacobian="user_supplied"))


def fnl_branch_check(ns=(8, 16, 32), r: int = 1, A: float = 2.0):
    """Newton from the zero guess selects the convex solution; its L2 error shrinks under refinement."""
    spec = abs_quadratic_spec(A)
    errors, iters = [], []
    for n in ns:
        mesh = build_cartesian(1, [(0.0, 1.0)], (n,))
        u, hist = solve_fnl_newton(mesh, r, spec, return_history=True)
        errors.append(l2_error(u, spec.exact))
        iters.append(len(hist) - 1)
    # the concave candidate -x^2/2 + x differs from x^2/2 by O(1) in L2
    ok = all(b < a for a, b in zip(errors, errors[1:])) and errors[-1] < 1e-2
    return CheckResult(
        "fnl-newton-branch", ok,
        "L2 errors " + ", ".join(f"{e:.3e}" for e in errors) + f"; iterations {iters}",
        {"errors": errors, "iterations": iters},
    )


def fnl_split_agreement(n: int = 16, r: int = 1, A: float = 2.0, tol: float = 1e-7):
    """The split solver and Newton agree in L2 on the same scheme."""
    spec = abs_quadratic_spec(A)
    mesh = build_cartesian(1, [(0.0, 1.0)], (n,))
    un = solve_fnl_newton(mesh, r, spec)
    us, hist = solve_fnl_split(mesh, r, spec, return_history=True)
    diff = l2_error(us - un, 0.0)
    return CheckResult(
        "fnl-split-vs-newton", diff <= tol,
        f"L2 difference {diff:.3e} after {len(hist)} split iterations (tol {tol:.0e})",
        {"difference": diff, "iterations": len(hist)},
    )
