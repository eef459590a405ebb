"""Damped Newton iteration with backtracking on the residual norm."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from ..errors import ConvergenceError, SingularSystemError
from .assembly import solve_linear

log = logging.getLogger(__name__)


@dataclass
class NewtonOptions:
    """Newton solver settings.

    Attributes
    ----------
    atol, rtol : float
        Stop when ``|R| <= atol``, or when ``|R| <= rtol |R_0|`` and the last
        accepted update is below ``step_check (1 + |u|)``.
    stol : float
        Also stop when the accepted update satisfies ``|du| <= stol (1 + |u|)``
        (the residual has hit its round-off floor).
    max_iter : int
    jacobian : {"analytic", "finite_difference"}
        ``finite_difference`` builds a dense Jacobian column by column with
        step ``fd_step * max(1, |u|)``; only sensible for small systems.
    eps : float
        Regularization of ``|q|`` in Jacobians of power-law terms.
    damping : bool
        Backtracking (factor 1/2, at most ``max_backtrack`` halvings).
    levenberg : bool
        When backtracking finds no decrease (typically a nearly singular
        Jacobian), try regularized steps ``(J^T J + mu I) du = -J^T R`` with
        growing ``mu`` before giving up.
    """

    atol: float = 1e-10
    rtol: float = 1e-12
    stol: float = 1e-12
    step_check: float = 1e-9
    max_iter: int = 50
    jacobian: str = "analytic"
    fd_step: float = 1e-7
    eps: float = 1e-10
    damping: bool = True
    max_backtrack: int = 20
    levenberg: bool = True

    def __post_init__(self):
        for name in ("atol", "rtol", "stol", "fd_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.jacobian not in ("analytic", "finite_difference", "user_supplied"):
            raise ValueError(f"unknown Jacobian mode {self.jacobian!r}")


def fd_jacobian(residual, x, step):
    r0 = residual(x)
    h = step * max(1.0, np.linalg.norm(x, np.inf))
    cols = []
    for k in range(x.size):
        e = x.copy()
        e[k] += h
        cols.append((residual(e) - r0) / h)
    return np.column_stack(cols)


def _levenberg_step(residual, J, R, x, rn, tries: int = 12):
    """Regularized Gauss-Newton step with ``mu`` growing by 10 until the residual drops."""
    J = sps.csr_matrix(J)
    JtJ = (J.T @ J).tocsc()
    g = J.T @ R
    scale = max(float(abs(JtJ.diagonal()).max()), 1e-300)
    mu = 1e-10 * scale
    eye = sps.identity(J.shape[1], format="csc")
    for _ in range(tries):
        try:
            dx = solve_linear(JtJ + mu * eye, -g, pivot_tol=0.0)
        except SingularSystemError:
            mu *= 10.0
            continue
        xn = x + dx
        Rn = residual(xn)
        rnn = float(np.linalg.norm(Rn))
        if rnn < rn:
            return xn, Rn, rnn, 1.0
        mu *= 10.0
    return None, None, None, 0.0


def newton(residual, jacobian, x0, options: NewtonOptions | None = None):
    """Solve ``residual(x) = 0``.

    Returns
    -------
    x : ndarray
    history : list of dict
        Residual norm, step norm and damping factor per iteration.

    Raises
    ------
    ConvergenceError
        With the iterate history when ``max_iter`` is exhausted.
    """
    opt = options or NewtonOptions()
    x = np.array(x0, dtype=float)
    R = residual(x)
    rn = float(np.linalg.norm(R))
    r0 = rn
    history = [{"iter": 0, "residual": rn, "step": 0.0, "damping": 1.0}]
    last_step = 0.0

    def converged():
        if rn <= opt.atol:
            return True
        return rn <= opt.rtol * r0 and last_step <= opt.step_check * (1.0 + float(np.linalg.norm(x)))

    for it in range(1, opt.max_iter + 1):
        if converged():
            return x, history
        if opt.jacobian == "finite_difference":
            J = fd_jacobian(residual, x, opt.fd_step)
        else:
            J = jacobian(x)
        try:
            dx = solve_linear(J if sps.issparse(J) else sps.csr_matrix(J), -R, pivot_tol=0.0)
        except SingularSystemError as exc:
            raise ConvergenceError(f"singular Jacobian at iteration {it}: {exc}", history, x) from exc
        lam = 1.0
        xn = x + dx
        Rn = residual(xn)
        rnn = float(np.linalg.norm(Rn))
        if opt.damping:
            k = 0
            while not (rnn < rn) and k < opt.max_backtrack:
                lam *= 0.5
                xn = x + lam * dx
                Rn = residual(xn)
                rnn = float(np.linalg.norm(Rn))
                k += 1
        if opt.damping and opt.levenberg and not (rnn < rn):
            xl, Rl, rl, lam = _levenberg_step(residual, J, R, x, rn)
            if xl is not None:
                xn, Rn, rnn, dx = xl, Rl, rl, xl - x
        step = lam * float(np.linalg.norm(dx))
        small_step = step <= opt.stol * (1.0 + float(np.linalg.norm(x)))
        if opt.damping and not (rnn < rn):
            # no decrease possible: accept only if we are at the round-off floor
            history.append({"iter": it, "residual": rn, "step": 0.0, "damping": 0.0})
            if float(np.linalg.norm(dx)) <= 1e3 * opt.stol * (1.0 + float(np.linalg.norm(x))):
                return x, history
            raise ConvergenceError(
                f"line search failed at iteration {it} (residual {rn:.3e})", history, x
            )
        x, R, rn = xn, Rn, rnn
        last_step = step
        history.append({"iter": it, "residual": rn, "step": step, "damping": lam})
        log.debug("newton %d residual %.3e step %.3e damping %.3g", it, rn, step, lam)
        if small_step:
            return x, history
    if converged():
        return x, history
    raise ConvergenceError(
        f"Newton did not converge in {opt.max_iter} iterations (residual {rn:.3e})", history, x
    )
