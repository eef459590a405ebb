"""Explicit DG schemes for Hamilton-Jacobi equations ``u_t + H(grad u) = 0``.

One step of the scheme is

    u^{n+1} = u^n - dt P_r Hhat(grad^- u^n, grad^+ u^n)

where the sided gradients carry Dirichlet data on inflow boundary faces,
``Hhat`` is a monotone numerical Hamiltonian evaluated pointwise at the
volume quadrature points and ``P_r`` is the L2 projection onto the DG space.
For ``r = 0`` on a uniform grid this is the classical monotone finite
difference scheme.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from ..calculus import local_derivative_matrices
from ..errors import MonotonicityError, NonFiniteError
from ..field import DGField, get_space, project
from ..kernels import quad_values
from ..mesh import Mesh

GOLDEN_TOL = 1e-12
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _hvals(H, q):
    """Evaluate ``H`` on states ``q`` of shape (m, d), returning (m,)."""
    q = np.asarray(q, dtype=float)
    out = np.asarray(H(q), dtype=float)
    if out.size != q.shape[0]:
        raise ValueError(f"Hamiltonian returned shape {out.shape} for {q.shape[0]} states")
    return out.reshape(q.shape[0])


def _as_states(q, d):
    """Shape ``q`` as (m, d); a lone state (scalar or length ``d``) gives m = 1."""
    q = np.asarray(q, dtype=float)
    scalar = q.ndim == 0 or (q.ndim == 1 and q.size == d)
    if scalar:
        return q.reshape(1, d), True
    if q.ndim == 1:
        return q.reshape(-1, 1), False
    return q, False


def lf_hamiltonian(H, beta, qm, qp):
    """Lax-Friedrichs numerical Hamiltonian.

    ``Hhat(q-, q+) = H((q- + q+)/2) - beta . (q+ - q-) / 2``.

    Parameters
    ----------
    H : callable
        Maps states of shape (m, d) to values of shape (m,).
    beta : float or array_like (d,)
        Nonnegative dissipation coefficients.
    qm, qp : array_like
        A single state (scalar or (d,)) or a batch (m, d).

    Returns
    -------
    float or ndarray (m,)
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if np.any(beta < 0):
        raise ValueError("beta must be componentwise nonnegative")
    d = np.asarray(qm).shape[-1] if np.ndim(qm) == 2 else beta.size
    qm, scalar = _as_states(qm, d)
    qp, _ = _as_states(qp, d)
    val = _hvals(H, (qm + qp) / 2) - 0.5 * np.sum(beta * (qp - qm), axis=1)
    return float(val[0]) if scalar else val


def _golden(fun, a, b, tol):
    """Vectorized golden-section minimization of ``fun`` over ``[a, b]``."""
    width = float(np.max(b - a)) if a.size else 0.0
    if width <= tol:
        return np.minimum(fun(a), fun(b))
    iters = int(math.ceil(math.log(tol / width) / math.log(_INVPHI)))
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        left = fc < fd
        a, b = np.where(left, a, c), np.where(left, d, b)
        c_new = np.where(left, b - _INVPHI * (b - a), d)
        d_new = np.where(left, c, a + _INVPHI * (b - a))
        fp = fun(np.where(left, c_new, d_new))
        fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
        c, d = c_new, d_new
    return np.minimum.reduce([fc, fd, fun(a), fun(b)])


def godunov_1d(H, qm, qp, tol: float = GOLDEN_TOL):
    """Godunov numerical Hamiltonian in one dimension.

    ``min_{q in [q-, q+]} H(q)`` if ``q- <= q+`` and ``max_{q in [q+, q-]} H(q)``
    otherwise. The extremum is found by golden-section search with the
    interval endpoints checked explicitly.
    """
    qm_a = np.atleast_1d(np.asarray(qm, dtype=float)).reshape(-1)
    qp_a = np.atleast_1d(np.asarray(qp, dtype=float)).reshape(-1)
    scalar = np.ndim(qm) == 0 or np.size(qm) == 1
    lo = np.minimum(qm_a, qp_a)
    hi = np.maximum(qm_a, qp_a)
    sign = np.where(qm_a <= qp_a, 1.0, -1.0)

    def fun(q):
        return sign * _hvals(H, q[:, None])

    val = sign * _golden(fun, lo, hi, tol)
    return float(val[0]) if scalar else val


@dataclass
class HamiltonianSpec:
    """Hamiltonian and numerical flux selection.

    Attributes
    ----------
    H : callable
        States (m, d) to values (m,).
    flavor : {"lax_friedrichs", "godunov_1d"}
    beta : array_like or None
        LF dissipation; estimated from sampled derivatives when omitted.
    dH : callable or None
        Gradient of ``H``, (m, d) to (m, d). Central differences are used
        when omitted.
    exact : callable or None
        Exact solution ``u(x, t)`` for testing.
    """

    H: object
    flavor: str = "lax_friedrichs"
    beta: object = None
    dH: object = None
    exact: object = None

    def __post_init__(self):
        if self.flavor not in ("lax_friedrichs", "godunov_1d"):
            raise ValueError(f"unknown numerical Hamiltonian {self.flavor!r}")
        if self.beta is not None and np.any(np.asarray(self.beta, dtype=float) < 0):
            raise ValueError("beta must be componentwise nonnegative")

    def gradient(self, q):
        q = np.asarray(q, dtype=float)
        if self.dH is not None:
            return np.asarray(self.dH(q), dtype=float).reshape(q.shape)
        out = np.empty_like(q)
        for i in range(q.shape[1]):
            h = 1e-6 * np.maximum(1.0, np.abs(q[:, i]))
            e = np.zeros_like(q)
            e[:, i] = h
            out[:, i] = (_hvals(self.H, q + e) - _hvals(self.H, q - e)) / (2 * h)
        return out

    def numerical(self, qm, qp, beta):
        if self.flavor == "godunov_1d":
            if qm.shape[1] != 1:
                raise ValueError("the Godunov Hamiltonian is only available in one dimension")
            return godunov_1d(self.H, qm[:, 0], qp[:, 0])
        return lf_hamiltonian(self.H, beta, qm, qp)


def estimate_beta(spec: HamiltonianSpec, qmin, qmax, samples: int = 201, safety: float = 1.0):
    """``beta_i = safety * max |dH/dq_i|`` over a grid of states in the box ``[qmin, qmax]``."""
    qmin = np.atleast_1d(np.asarray(qmin, dtype=float))
    qmax = np.atleast_1d(np.asarray(qmax, dtype=float))
    d = qmin.size
    per_axis = max(2, int(round(samples ** (1.0 / d))))
    axes = [np.linspace(a, b, per_axis) for a, b in zip(qmin, qmax)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    return safety * np.max(np.abs(spec.gradient(grid)), axis=0)


def lf_monotonicity_violations(H, beta, qmin, qmax, pairs: int = 200, step: float = 1e-3, rng=None):
    """Count sampled monotonicity violations of the LF Hamiltonian.

    For random pairs ``(q-, q+)`` in the box and each axis, ``Hhat`` must
    not decrease when ``q-_i`` grows and must not increase when ``q+_i``
    grows.

    Returns
    -------
    count : int
    worst : float
        Largest violation magnitude (0 when none).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    qmin = np.atleast_1d(np.asarray(qmin, dtype=float))
    qmax = np.atleast_1d(np.asarray(qmax, dtype=float))
    d = qmin.size
    qm = rng.uniform(qmin, qmax, size=(pairs, d))
    qp = rng.uniform(qmin, qmax, size=(pairs, d))
    base = lf_hamiltonian(H, beta, qm, qp)
    count, worst = 0, 0.0
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        up = lf_hamiltonian(H, beta, qm + e, qp) - base
        down = lf_hamiltonian(H, beta, qm, qp + e) - base
        bad = np.concatenate([np.maximum(-up, 0.0), np.maximum(down, 0.0)])
        tol = 1e-13 * (1.0 + np.abs(np.concatenate([base, base])))
        count += int(np.sum(bad > tol))
        worst = max(worst, float(bad.max(initial=0.0)))
    return count, worst


@dataclass
class HJTrajectory:
    """Stored states of an evolution."""

    times: list = dc_field(default_factory=list)
    fields: list = dc_field(default_factory=list)
    dt: float = 0.0
    steps: int = 0

    @property
    def final(self) -> DGField:
        return self.fields[-1]


class HJOperator:
    """Spatial operator ``L(u, t) = P_r Hhat(grad^- u, grad^+ u)``."""

    def __init__(self, mesh: Mesh, r: int, spec: HamiltonianSpec, g=None, beta=None):
        self.mesh, self.r, self.spec = mesh, r, spec
        self.loc = local_derivative_matrices(mesh, r)
        self.sp = get_space(mesh, r)
        self.g = g
        self.beta = None if beta is None else np.broadcast_to(
            np.asarray(beta, dtype=float), (mesh.dim,)
        ).copy()
        self._bface = self.loc.nbr < 0

    def _g_at(self, t):
        g = self.g
        if g is None:
            return None
        if callable(g):
            return lambda x: g(x, t)
        return float(g)

    def inflow_mask(self, coeffs, axis: int) -> np.ndarray:
        """Boundary faces where the characteristic for ``axis`` enters the domain.

        A boundary face is inflow when ``dH/dq_i(q) n_i < 0`` for the one-sided
        piecewise gradient ``q`` of the element at some face point.
        """
        loc = self.loc
        k, f = np.nonzero(self._bface)
        mask = np.zeros_like(self._bface)
        if k.size == 0:
            return mask
        basis_grad = self.sp.grad  # (nel, nq, n, d): use element-average gradient
        qavg = np.einsum("q,kqji,kj->ki", self.sp.ref_weights, basis_grad, coeffs)
        qavg = qavg / self.sp.ref_weights.sum()
        dh = self.spec.gradient(qavg[k])[:, axis]
        nrm = loc.face_n[k, f, axis]
        mask[k, f] = dh * nrm < 0
        return mask

    def __call__(self, coeffs, t) -> np.ndarray:
        d = self.mesh.dim
        g = self._g_at(t)
        qm, qp = [], []
        for i in range(d):
            fm = self.inflow_mask(coeffs, i) if g is not None else None
            am = self.loc.apply(coeffs, i, -1, g, fm)
            ap = self.loc.apply(coeffs, i, +1, g, fm)
            qm.append(quad_values(am, self.sp.V))
            qp.append(quad_values(ap, self.sp.V))
        shape = qm[0].shape
        QM = np.stack([q.reshape(-1) for q in qm], axis=1)
        QP = np.stack([q.reshape(-1) for q in qp], axis=1)
        beta = self.beta
        if beta is None and self.spec.flavor == "lax_friedrichs":
            lo = np.minimum(QM.min(axis=0), QP.min(axis=0))
            hi = np.maximum(QM.max(axis=0), QP.max(axis=0))
            beta = estimate_beta(self.spec, lo, hi)
        hv = self.spec.numerical(QM, QP, beta).reshape(shape)
        return self.sp.project_values(hv)


def cfl_time_step(mesh: Mesh, beta, cfl: float = 0.5) -> float:
    """``dt = cfl * h / max|beta|`` with ``h`` the grid spacing."""
    bmax = float(np.max(np.abs(np.asarray(beta, dtype=float))))
    h = float(mesh.spacing)
    return cfl * h / bmax if bmax > 0 else cfl * h


def hj_evolve(
    mesh: Mesh, r: int, spec: HamiltonianSpec, u0, g=None, dt: float | None = None,
    T: float | None = None, scheme: str = "tvd_rk3", steps: int | None = None,
    cfl: float = 0.5, check_cfl: bool = True, store_every: int | None = None,
) -> HJTrajectory:
    """Evolve ``u_t + H(grad u) = 0`` with an explicit DG scheme.

    Parameters
    ----------
    u0 : callable or DGField
        Initial data; callables are L2-projected.
    g : callable ``g(x, t)``, float or None
        Dirichlet data applied on inflow boundary faces.
    dt : float, optional
        Step size. Defaults to the CFL step; when ``T`` is given without
        ``steps`` the step is shrunk so that an integer number of steps
        lands exactly on ``T``.
    steps : int, optional
        Number of steps of size exactly ``dt``.
    scheme : {"euler", "tvd_rk3"}
    store_every : int, optional
        Keep every ``store_every``-th state (initial and final are always kept).

    Raises
    ------
    NonFiniteError
        When a step produces NaN or infinite coefficients.
    """
    if scheme not in ("euler", "tvd_rk3"):
        raise ValueError(f"unknown time scheme {scheme!r}")
    u = u0 if isinstance(u0, DGField) else project(u0, mesh, r)
    beta = spec.beta
    if beta is None:
        qv = get_space(mesh, r).grad_values(u.coeffs)
        lo, hi = qv.reshape(-1, mesh.dim).min(axis=0), qv.reshape(-1, mesh.dim).max(axis=0)
        width = np.maximum(hi - lo, 1e-3)
        bsample = estimate_beta(spec, lo - width, hi + width)
    else:
        bsample = np.broadcast_to(np.asarray(beta, dtype=float), (mesh.dim,))
    op = HJOperator(mesh, r, spec, g, beta)
    dt_cfl = cfl_time_step(mesh, bsample, cfl)
    if dt is None:
        dt = dt_cfl
    elif check_cfl and dt > dt_cfl * (1 + 1e-12):
        raise ValueError(f"time step {dt:.3e} violates the CFL bound {dt_cfl:.3e}")
    if steps is None:
        if T is None:
            raise ValueError("give either T or steps")
        steps = max(1, int(math.ceil(T / dt - 1e-9)))
        dt = T / steps
    x = u.coeffs.copy()
    t = 0.0
    traj = HJTrajectory(times=[0.0], fields=[u], dt=dt, steps=steps)
    for n in range(1, steps + 1):
        if scheme == "euler":
            x = x - dt * op(x, t)
        else:
            x1 = x - dt * op(x, t)
            x2 = 0.75 * x + 0.25 * (x1 - dt * op(x1, t + dt))
            x = x / 3.0 + 2.0 / 3.0 * (x2 - dt * op(x2, t + 0.5 * dt))
        t = n * dt
        if not np.all(np.isfinite(x)):
            raise NonFiniteError(f"non-finite coefficients after step {n}", step=n)
        if n == steps or (store_every and n % store_every == 0):
            traj.times.append(t)
            traj.fields.append(DGField(mesh, r, x.reshape(-1).copy()))
    return traj


def certify_lf(spec: HamiltonianSpec, beta, qmin, qmax, rng=None):
    """Raise :class:`MonotonicityError` if sampled LF monotonicity fails."""
    count, worst = lf_monotonicity_violations(spec.H, beta, qmin, qmax, rng=rng)
    if count:
        raise MonotonicityError(f"{count} sampled LF monotonicity violations (worst {worst:.3e})")
    return True
