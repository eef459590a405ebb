"""DG schemes for fully nonlinear second order problems ``F(D^2 u, x) = 0``.

The scheme projects a Lax-Friedrichs-like numerical operator

    Fhat(P--, P-+, P+-, P++, x) = F((P-+ + P+-)/2, x) + A : (P-- - P-+ - P+- + P++)

applied to the four sided Hessians (boundary data enters the inner
gradient) onto the DG space. Two solvers are provided: Newton on the full
system and a split fixed-point iteration that alternates an element-local
monotone solve for the Hessian diagonal with a dual-wind DG Poisson solve.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from ..calculus import get_operators
from ..errors import ConvergenceError, MonotonicityError, SingularSystemError
from ..field import DGField, _call, get_space
from ..mesh import Mesh
from .assembly import Assembler
from .elliptic import dwdg_system
from .newton import NewtonOptions, newton
from .plaplace import eval_matrices

log = logging.getLogger(__name__)

SIDE_PAIRS = (("-", "-"), ("-", "+"), ("+", "-"), ("+", "+"))
FD_STEP = 1e-7


def _moment_matrix(A, d) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim == 0:
        return float(A) * np.eye(d)
    if A.shape != (d, d):
        raise ValueError(f"moment matrix must be {d}x{d}")
    if not np.all(np.isfinite(A)):
        raise ValueError("moment matrix must be finite")
    return A


def _fvals(F, P, x):
    out = np.asarray(F(P, x), dtype=float)
    return np.broadcast_to(out, (P.shape[0],)).astype(float)


def lf_hat_F(F, A, Pmm, Pmp, Ppm, Ppp, x):
    """Lax-Friedrichs-like numerical operator.

    Parameters
    ----------
    F : callable
        ``F(P, x)`` with ``P`` of shape (m, d, d) and ``x`` of shape (m, d).
    A : float or ndarray (d, d)
        Moment matrix (a scalar means ``A I``).
    Pmm, Pmp, Ppm, Ppp : array_like
        Sided Hessians, a single (d, d) matrix or a batch (m, d, d).
    x : array_like
        Points, (d,) or (m, d).

    Returns
    -------
    float or ndarray (m,)
    """
    single = np.ndim(Pmm) <= 2
    P = [np.asarray(p, dtype=float) for p in (Pmm, Pmp, Ppm, Ppp)]
    if single:
        P = [np.atleast_2d(p)[None] for p in P]
    d = P[0].shape[-1]
    x = np.asarray(x, dtype=float).reshape(P[0].shape[0], d)
    At = _moment_matrix(A, d)
    moment = np.einsum("ij,mij->m", At, P[0] - P[1] - P[2] + P[3])
    val = _fvals(F, 0.5 * (P[1] + P[2]), x) + moment
    return float(val[0]) if single else val


def dF_dP(F, P, x, step: float = FD_STEP) -> np.ndarray:
    """Pointwise finite-difference derivative ``dF/dP_ij``, shape (m, d, d)."""
    m, d, _ = P.shape
    out = np.empty((m, d, d))
    base = _fvals(F, P, x)
    for i in range(d):
        for j in range(d):
            h = step * np.maximum(1.0, np.abs(P[:, i, j]))
            Pe = P.copy()
            Pe[:, i, j] += h
            out[:, i, j] = (_fvals(F, Pe, x) - base) / h
    return out


def ellipticity_violations(F, d, x, pairs: int = 20, scale: float = 1.0, rng=None):
    """Spot check ``F(A, x) <= F(B, x)`` for random symmetric ``A >= B``.

    Returns the number of violating pairs and the largest violation.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    x = np.asarray(x, dtype=float).reshape(-1, d)
    count, worst = 0, 0.0
    for _ in range(pairs):
        B = rng.uniform(-scale, scale, (d, d))
        B = 0.5 * (B + B.T)
        C = rng.uniform(-scale, scale, (d, d))
        Am = B + C @ C.T
        xm = x[rng.integers(x.shape[0])][None]
        gap = _fvals(F, Am[None], xm)[0] - _fvals(F, B[None], xm)[0]
        tol = 1e-12 * (1.0 + abs(_fvals(F, B[None], xm)[0]))
        if gap > tol:
            count += 1
            worst = max(worst, float(gap))
    return count, worst


def gmonotonicity_violations(F, A, d, x, samples: int = 200, scale: float = 1.0,
                             step: float = 1e-3, rng=None):
    """Sample g-monotonicity of the numerical operator.

    ``Fhat`` must not decrease under diagonal increments of ``P--`` and
    ``P++`` and must not increase under diagonal increments of ``P-+`` and
    ``P+-``.

    Returns
    -------
    count : int
    worst : float
    """
    rng = np.random.default_rng(0) if rng is None else rng
    x = np.asarray(x, dtype=float).reshape(-1, d)
    xs = x[rng.integers(x.shape[0], size=samples)]
    P = [rng.uniform(-scale, scale, (samples, d, d)) for _ in range(4)]
    P = [0.5 * (p + np.swapaxes(p, 1, 2)) for p in P]
    base = lf_hat_F(F, A, *P, xs)
    count, worst = 0, 0.0
    for k, sign in zip(range(4), (1.0, -1.0, -1.0, 1.0)):
        for i in range(d):
            Q = [p.copy() for p in P]
            Q[k][:, i, i] += step
            delta = sign * (lf_hat_F(F, A, *Q, xs) - base)
            tol = 1e-12 * (1.0 + np.abs(base))
            bad = -delta > tol
            count += int(bad.sum())
            worst = max(worst, float(np.max(-delta, initial=0.0)))
    return count, worst


def moment_bound(F, d, x, samples: int = 200, scale: float = 1.0, rng=None) -> float:
    """Smallest ``A`` making ``A I`` pass the sampled monotonicity requirements.

    Both the numerical operator (``dF/dP_ii / 2 <= A``) and the split solver
    (``dF/dP_ii <= 2 A``) need ``A >= max(0, max_ii dF/dP_ii / 2)``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    x = np.asarray(x, dtype=float).reshape(-1, d)
    xs = x[rng.integers(x.shape[0], size=samples)]
    P = rng.uniform(-scale, scale, (samples, d, d))
    P = 0.5 * (P + np.swapaxes(P, 1, 2))
    dF = dF_dP(F, P, xs)
    diag = np.einsum("mii->mi", dF)
    return max(0.0, 0.5 * float(diag.max()))


@dataclass
class SplitOptions:
    """Settings of the split fixed-point solver.

    Attributes
    ----------
    A : float
        Moment constant (the scheme uses ``A I``).
    tol : float
        Stop when the L2 norm of the update is at most ``tol``.
    max_iter : int
    local_tol, local_max_iter : float, int
        Element-local Newton solve for the Hessian diagonal.
    certify : bool
        Sample the monotonicity of the local problem before iterating.
    """

    A: float = 2.0
    tol: float = 1e-9
    max_iter: int = 500
    local_tol: float = 1e-13
    local_max_iter: int = 100
    certify: bool = True


@dataclass
class FullyNonlinearSpec:
    """Problem description for ``F(D^2 u, x) = 0`` with ``u = g`` on the boundary.

    Attributes
    ----------
    F : callable
        ``F(P, x)`` with ``P`` (m, d, d) and ``x`` (m, d), returning (m,).
    A : float or ndarray (d, d)
        Moment matrix of the numerical operator.
    g : callable, float or None
        Dirichlet data.
    dF : callable or None
        Optional exact ``dF/dP`` (m, d, d); finite differences otherwise.
    exact : callable or None
    newton : NewtonOptions
    split : SplitOptions
    quad_degree : int or None
        Volume quadrature exactness (default ``2r + 4``).
    """

    F: object
    A: object = 2.0
    g: object = 0.0
    dF: object = None
    exact: object = None
    newton: NewtonOptions = dc_field(default_factory=lambda: NewtonOptions(jacobian="user_supplied"))
    split: SplitOptions = dc_field(default_factory=SplitOptions)
    quad_degree: int | None = None

    def derivative(self, P, x):
        if self.dF is not None:
            return np.asarray(self.dF(P, x), dtype=float).reshape(P.shape)
        return dF_dP(self.F, P, x)


class FullyNonlinearDiscretization:
    """Residual ``(Fhat(D--u, D-+u, D+-u, D++u, x), phi)`` and its Jacobian."""

    def __init__(self, mesh: Mesh, r: int, spec: FullyNonlinearSpec):
        self.mesh, self.r, self.spec = mesh, r, spec
        d = self.d = mesh.dim
        self.At = _moment_matrix(spec.A, d)
        deg = 2 * r + 4 if spec.quad_degree is None else spec.quad_degree
        em = eval_matrices(mesh, r, deg)
        sp = em["space"]
        self.V = em["V"]
        self.wq = sp.wq.reshape(-1)
        self.xq = sp.xq.reshape(-1, d)
        ops = get_operators(mesh, r, r)
        self.ops = ops
        g = spec.g
        # hess[(s1, s2)][i][j] = (matrix at quadrature points, offset)
        self.hess = {}
        for s1, s2 in SIDE_PAIRS:
            rows = []
            for i in range(d):
                G = ops.G(s2, i)
                c = ops.c(g, i) if g is not None else np.zeros(ops.G(s2, i).shape[0])
                row = []
                for j in range(d):
                    D = ops.D(s1, j)
                    row.append(((self.V @ (D @ G)).tocsr(), self.V @ (D @ c)))
                rows.append(row)
            self.hess[(s1, s2)] = rows

    def hessian_values(self, u):
        """Four sided Hessians at quadrature points, each (m, d, d)."""
        d = self.d
        out = []
        for key in SIDE_PAIRS:
            P = np.empty((self.xq.shape[0], d, d))
            for i in range(d):
                for j in range(d):
                    Mij, cij = self.hess[key][i][j]
                    P[:, i, j] = Mij @ u + cij
            out.append(P)
        return out

    def Fhat_values(self, u):
        P = self.hessian_values(u)
        return lf_hat_F(self.spec.F, self.At, *P, self.xq)

    def residual(self, u) -> np.ndarray:
        vals = self.Fhat_values(u)
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("numerical operator produced non-finite values")
        return self.V.T @ (self.wq * vals)

    def projected(self, u) -> DGField:
        """``P_r Fhat(...)`` as a field."""
        R = self.residual(u)
        return DGField(self.mesh, self.r, self.ops.Minv @ R)

    def jacobian(self, u) -> sps.csr_matrix:
        d = self.d
        P = self.hessian_values(u)
        dF = self.spec.derivative(0.5 * (P[1] + P[2]), self.xq)
        J = None
        for k, key in enumerate(SIDE_PAIRS):
            for i in range(d):
                for j in range(d):
                    if k in (1, 2):
                        coef = 0.5 * dF[:, i, j] - self.At[i, j]
                    else:
                        coef = np.full(self.xq.shape[0], self.At[i, j])
                    if not np.any(coef):
                        continue
                    t = self.V.T @ sps.diags(self.wq * coef) @ self.hess[key][i][j][0]
                    J = t if J is None else J + t
        if J is None:
            J = sps.csr_matrix((self.V.shape[1], self.V.shape[1]))
        return J.tocsr()


def _initial_vector(mesh, r, initial):
    if initial is None:
        return np.zeros(get_space(mesh, r).N)
    if isinstance(initial, DGField):
        return initial.vector.copy()
    if callable(initial):
        from ..field import project

        return project(initial, mesh, r).vector.copy()
    return np.asarray(initial, dtype=float).copy()


def solve_fnl_newton(mesh: Mesh, r: int, spec: FullyNonlinearSpec, initial=None,
                     return_history: bool = False):
    """Solve the projected scheme ``P_r Fhat(D--u, D-+u, D+-u, D++u, x) = 0`` by Newton."""
    disc = FullyNonlinearDiscretization(mesh, r, spec)
    x0 = _initial_vector(mesh, r, initial)
    opt = spec.newton
    x, hist = newton(disc.residual, disc.jacobian, x0, opt)
    u = DGField(mesh, r, x)
    return (u, hist) if return_history else u


# ------------------------------------------------------------ split solver
class _LocalDiagonalProblem:
    """Element-local equations for the Hessian diagonal ``lambda``.

    For each axis ``i`` and element ``K``

        (F(Poff + diag(lambda), x) + A (L--_ii + L++_ii - 2 lambda_i), phi)_K = 0

    where ``Poff`` is the central Hessian of the previous iterate with its
    diagonal removed and ``L--``, ``L++`` are the diagonals of the pure-sided
    Hessians.
    """

    def __init__(self, disc: FullyNonlinearDiscretization, A: float):
        self.disc = disc
        self.A = float(A)
        sp = get_space(disc.mesh, disc.r, 2 * disc.r + 4 if disc.spec.quad_degree is None
                       else disc.spec.quad_degree)
        self.sp = sp
        self.Vq = sp.V  # (nq, n)
        self.w = sp.wq  # (nel, nq)

    def setup(self, u):
        P = self.disc.hessian_values(u)
        nel, nq = self.w.shape
        d = self.disc.d
        central = 0.5 * (P[1] + P[2])
        idx = np.arange(d)
        self.Poff = central.copy()
        self.Poff[:, idx, idx] = 0.0
        self.moment = (P[0][:, idx, idx] + P[3][:, idx, idx]).reshape(nel, nq, d)
        self.Poff = self.Poff.reshape(nel, nq, d, d)
        self.x = self.disc.xq.reshape(nel, nq, d)

    def _lam_values(self, lam):
        # lam: (nel, d, n) -> (nel, nq, d)
        return np.einsum("kin,qn->kqi", lam, self.Vq)

    def G(self, lam):
        nel, nq = self.w.shape
        d = self.disc.d
        lv = self._lam_values(lam)
        P = self.Poff.copy()
        idx = np.arange(d)
        P[:, :, idx, idx] = lv
        Fv = _fvals(self.disc.spec.F, P.reshape(-1, d, d), self.x.reshape(-1, d)).reshape(nel, nq)
        return Fv[:, :, None] + self.A * (self.moment - 2.0 * lv), P

    def residual(self, lam):
        Gv, P = self.G(lam)
        return np.einsum("kq,kqi,qn->kin", self.w, Gv, self.Vq), P

    def jacobian(self, P):
        nel, nq = self.w.shape
        d = self.disc.d
        n = self.Vq.shape[1]
        dF = self.disc.spec.derivative(P.reshape(-1, d, d), self.x.reshape(-1, d)).reshape(nel, nq, d, d)
        idx = np.arange(d)
        # dG_i / dlambda_l = dF/dP_ll - 2 A delta_il
        dG = dF[:, :, idx, idx]
        J1 = np.einsum("kq,kql,qm,qn->kmnl", self.w, dG, self.Vq, self.Vq)
        mass = np.einsum("kq,qm,qn->kmn", self.w, self.Vq, self.Vq)
        full = np.zeros((nel, d, n, d, n))
        for i in range(d):
            for l in range(d):
                full[:, i, :, l, :] = J1[..., l]
            full[:, i, :, i, :] -= 2.0 * self.A * mass
        return full.reshape(nel, d * n, d * n)

    def solve(self, lam0, tol, max_iter):
        nel = lam0.shape[0]
        lam = lam0.copy()
        R, P = self.residual(lam)
        rn = np.linalg.norm(R.reshape(nel, -1), axis=1)
        scale = 1.0 + rn
        for _ in range(max_iter):
            active = rn > tol * scale
            if not np.any(active):
                return lam
            J = self.jacobian(P)
            try:
                step = np.linalg.solve(J, -R.reshape(nel, -1, 1))[..., 0]
            except np.linalg.LinAlgError as exc:
                raise ConvergenceError(f"singular local Jacobian: {exc}") from exc
            step = step.reshape(lam.shape) * active[:, None, None]
            t = np.ones(nel)
            for _ in range(30):
                trial = lam + t[:, None, None] * step
                Rt, Pt = self.residual(trial)
                rt = np.linalg.norm(Rt.reshape(nel, -1), axis=1)
                worse = active & ~(rt < rn)
                if not np.any(worse):
                    break
                t = np.where(worse, 0.5 * t, t)
            lam, R, P, rn = trial, Rt, Pt, rt
        if np.any(rn > tol * scale):
            raise ConvergenceError(f"local diagonal solve did not converge (max residual {rn.max():.3e})")
        return lam

    def certify(self, lam, samples: int = 50, spread: float = 1.0, rng=None):
        """Sample that each ``G_i`` is decreasing in ``lambda_i`` near the current state."""
        rng = np.random.default_rng(0) if rng is None else rng
        d = self.disc.d
        nel, nq = self.w.shape
        lv = self._lam_values(lam).reshape(-1, d)
        Poff = self.Poff.reshape(-1, d, d)
        x = self.x.reshape(-1, d)
        pick = rng.integers(lv.shape[0], size=samples)
        P = Poff[pick].copy()
        idx = np.arange(d)
        width = spread * (1.0 + np.abs(lv[pick]))
        P[:, idx, idx] = lv[pick] + rng.uniform(-1.0, 1.0, (samples, d)) * width
        dF = self.disc.spec.derivative(P, x[pick])
        slope = dF[:, idx, idx] - 2.0 * self.A
        if np.any(slope >= 0):
            raise MonotonicityError(
                f"local problem is not decreasing in lambda (max slope {slope.max():.3e}); increase A"
            )
        return True


def solve_fnl_split(mesh: Mesh, r: int, spec: FullyNonlinearSpec, initial=None,
                    return_history: bool = False):
    """Split fixed-point solver.

    Each iteration solves element-local monotone equations for the diagonal
    ``lambda`` of the Hessian, then the dual-wind DG Poisson problem with
    zero penalty, ``-Delta_h u = -sum_i lambda_i``. The Poisson matrix is
    assembled once by :func:`dwdg_system` and factorized.

    Raises
    ------
    MonotonicityError
        When the sampled certificate for the local problem fails.
    ConvergenceError
        When the update norm does not drop below ``tol`` in ``max_iter`` iterations.
    """
    opt = spec.split
    if opt.A <= 0:
        raise ValueError("the split solver needs A > 0")
    d = mesh.dim
    sspec = FullyNonlinearSpec(F=spec.F, A=opt.A, g=spec.g, dF=spec.dF, quad_degree=spec.quad_degree)
    disc = FullyNonlinearDiscretization(mesh, r, sspec)
    local = _LocalDiagonalProblem(disc, opt.A)
    asm = Assembler(mesh, r)
    base = dwdg_system(mesh, r, None, spec.g, eta1=0.0)
    lu = spla.splu(sps.csc_matrix(base.matrix))
    if not np.all(np.isfinite(lu.U.diagonal())) or np.min(np.abs(lu.U.diagonal())) == 0:
        raise SingularSystemError("dual-wind DG matrix is singular on this mesh")
    u = _initial_vector(mesh, r, initial)
    n = get_space(mesh, r).n
    nel = mesh.num_elements
    lam = np.zeros((nel, d, n))
    history = []
    for it in range(1, opt.max_iter + 1):
        local.setup(u)
        if it == 1:
            P = disc.hessian_values(u)
            cen = 0.5 * (P[1] + P[2])
            idx = np.arange(d)
            start = cen[:, idx, idx].reshape(nel, -1, d)
            # least-squares fit of the current diagonal as the local starting value
            lam = np.einsum("kqi,kq,qn->kin", start, local.w, local.Vq)
            lam = np.einsum("kin,mn->kim", lam, get_space(mesh, r, 2 * r + 4).Minv_ref) / mesh.det[:, None, None]
            if opt.certify:
                local.certify(lam)
        lam = local.solve(lam, opt.local_tol, opt.local_max_iter)
        src = -lam.sum(axis=1).reshape(-1)
        rhs = base.rhs + asm.M @ src
        un = lu.solve(rhs)
        diff = DGField(mesh, r, un - u)
        inc = float(np.sqrt(max(diff.vector @ (asm.M @ diff.vector), 0.0)))
        history.append({"iter": it, "increment": inc})
        log.debug("split %d increment %.3e", it, inc)
        u = un
        if not np.isfinite(inc):
            raise ConvergenceError(f"split iteration diverged at iteration {it}", history, u)
        if inc <= opt.tol:
            out = DGField(mesh, r, u)
            return (out, history) if return_history else out
    raise ConvergenceError(
        f"split iteration did not converge in {opt.max_iter} iterations", history, u
    )
