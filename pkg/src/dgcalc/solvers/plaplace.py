"""DG method for the p-Laplace equation ``-div(|grad u|^{p-2} grad u) = f``.

The discrete problem is

    (sigma(q), grad phi)_T - <{sigma(q)} . n, [phi]>_E + (j^(p)(u), phi) = (f, phi)

with ``q = grad_{h,g} u`` (central) and ``sigma(q) = |q|^{p-2} q`` evaluated
pointwise at quadrature points; the gradient on ``phi`` is the piecewise one.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sps

from ..field import DGField, _call, get_space
from ..mesh import Mesh
from .assembly import Assembler
from .elliptic import _check_eta, mesh_size, solve_poisson_ldg
from .newton import NewtonOptions, newton

PLAPLACE_ETA = 20.0


def eval_matrices(mesh: Mesh, r: int, degree: int):
    """Sparse maps from coefficients to values at quadrature points.

    Returns a dict with volume values ``V``, physical gradients ``Gr[i]``,
    edge traces ``EK`` and ``EKp`` (zero rows on boundary edges for ``EKp``),
    and the space holding the weights.
    """
    key = ("evalmats", int(r), int(degree))
    if key in mesh._cache:
        return mesh._cache[key]
    sp = get_space(mesh, r, degree, degree)
    nel, n, nq = sp.nel, sp.n, sp.V.shape[0]
    rows = np.arange(nel * nq).reshape(nel, nq)[:, :, None].repeat(n, axis=2)
    cols = (np.arange(nel)[:, None, None] * n + np.arange(n)[None, None, :]).repeat(nq, axis=1)
    shape = (nel * nq, sp.N)

    def vol(vals):
        return sps.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape)

    V = vol(np.broadcast_to(sp.V, (nel, nq, n)))
    Gr = [vol(sp.grad[..., i]) for i in range(mesh.dim)]
    ne, nqe = sp.TK.shape[:2]
    erows = np.arange(ne * nqe).reshape(ne, nqe)[:, :, None].repeat(n, axis=2)

    def edge(T, el):
        c = (el[:, None, None] * n + np.arange(n)[None, None, :]).repeat(nqe, axis=1)
        return sps.csr_matrix((T.ravel(), (erows.ravel(), c.ravel())), shape=(ne * nqe, sp.N))

    out = {"V": V, "Gr": Gr, "EK": edge(sp.TK, sp.EK), "EKp": edge(sp.TKp, sp.EKp), "space": sp}
    mesh._cache[key] = out
    return out


class PLaplaceDiscretization:
    """Residual and Jacobian of the p-Laplace DG scheme."""

    def __init__(self, mesh: Mesh, r: int, p: float, f, g, eta1, eps: float = 1e-10,
                 quad_degree: int | None = None):
        if p < 2:
            raise ValueError("p must be at least 2")
        self.mesh, self.r, self.p = mesh, r, float(p)
        self.eta = _check_eta(eta1, "eta1")
        self.eps = eps
        self.asm = asm = Assembler(mesh, r)
        deg = 2 * r + 4 if quad_degree is None else quad_degree
        em = eval_matrices(mesh, r, deg)
        self.V, self.Gr, self.EK, self.EKp = em["V"], em["Gr"], em["EK"], em["EKp"]
        sp = em["space"]
        self.wq = sp.wq.reshape(-1)
        self.we = sp.we.reshape(-1)
        nqe = sp.we.shape[1]
        bnd = np.repeat(sp.boundary, nqe)
        self.bnd = bnd
        self.aK = np.where(bnd, 1.0, 0.5)
        self.aKp = np.where(bnd, 0.0, 0.5)
        self.normals = np.repeat(sp.normals, nqe, axis=0)
        self.eta_q = np.repeat(np.broadcast_to(self.eta, (mesh.num_edges,)), nqe)
        self.g_e = np.zeros(bnd.size) if g is None else _call(g, sp.xe, ()).reshape(-1)
        d = mesh.dim
        self.G = [asm.G("central", i) for i in range(d)]
        self.c = [asm.c(g, i) for i in range(d)]
        # loads use the solver's default quadrature
        self.F = asm.load(f, deg) if not isinstance(f, DGField) else asm.M @ f.vector
        self.jump = (self.EK - self.EKp).tocsr()

    # ------------------------------------------------------------- pieces
    def _q(self, u):
        return [G @ u + c for G, c in zip(self.G, self.c)]

    def _sigma(self, Q):
        """``|Q|^{p-2} Q`` and its derivative for Q of shape (m, d)."""
        p, eps = self.p, self.eps
        nrm2 = np.sum(Q * Q, axis=1)
        s = nrm2 ** ((p - 2) / 2)
        sig = s[:, None] * Q
        ne = np.sqrt(nrm2 + eps * eps)
        dS = ne[:, None, None] ** (p - 2) * np.eye(Q.shape[1])[None] + (p - 2) * (
            ne ** (p - 4)
        )[:, None, None] * Q[:, :, None] * Q[:, None, :]
        return sig, dS

    def _pen(self, u):
        """Edge penalty integrand ``psi`` and its derivative w.r.t. the relevant trace value."""
        p = self.p
        jv = self.jump @ u  # on boundary rows this is the trace
        t = np.abs(jv)
        pen = np.where(self.bnd, t ** (p - 2) * (jv - self.g_e), t ** (p - 2) * jv)
        tr = np.sqrt(jv * jv + self.eps ** 2)
        dpen = np.where(
            self.bnd,
            (p - 2) * tr ** (p - 4) * jv * (jv - self.g_e) + tr ** (p - 2),
            (p - 1) * tr ** (p - 2),
        )
        return pen, dpen

    def residual(self, u) -> np.ndarray:
        d = self.mesh.dim
        q = self._q(u)
        Qv = np.column_stack([self.V @ qi for qi in q])
        sig_v, _ = self._sigma(Qv)
        QK = np.column_stack([self.EK @ qi for qi in q])
        QKp = np.column_stack([self.EKp @ qi for qi in q])
        sK, _ = self._sigma(QK)
        sKp, _ = self._sigma(QKp)
        avg = self.aK[:, None] * sK + self.aKp[:, None] * sKp
        flux = np.sum(avg * self.normals, axis=1)
        R = -self.jump.T @ (self.we * flux)
        for i in range(d):
            R = R + self.Gr[i].T @ (self.wq * sig_v[:, i])
        pen, _ = self._pen(u)
        R = R + self.jump.T @ (self.we * self.eta_q * pen)
        return R - self.F

    def jacobian(self, u) -> sps.csr_matrix:
        d = self.mesh.dim
        q = self._q(u)
        Qv = np.column_stack([self.V @ qi for qi in q])
        _, dSv = self._sigma(Qv)
        QK = np.column_stack([self.EK @ qi for qi in q])
        QKp = np.column_stack([self.EKp @ qi for qi in q])
        _, dSK = self._sigma(QK)
        _, dSKp = self._sigma(QKp)
        J = None
        VG = [(self.V @ G).tocsr() for G in self.G]
        EKG = [(self.EK @ G).tocsr() for G in self.G]
        EKpG = [(self.EKp @ G).tocsr() for G in self.G]
        for i in range(d):
            for j in range(d):
                t = self.Gr[i].T @ sps.diags(self.wq * dSv[:, i, j]) @ VG[j]
                wK = self.we * self.normals[:, i] * self.aK * dSK[:, i, j]
                wKp = self.we * self.normals[:, i] * self.aKp * dSKp[:, i, j]
                t = t - self.jump.T @ (sps.diags(wK) @ EKG[j] + sps.diags(wKp) @ EKpG[j])
                J = t if J is None else J + t
        _, dpen = self._pen(u)
        J = J + self.jump.T @ sps.diags(self.we * self.eta_q * dpen) @ self.jump
        return J.tocsr()


def solve_plaplace(
    mesh: Mesh, r: int, p: float, f, g=0.0, eta1=None, options: NewtonOptions | None = None,
    initial=None, return_history: bool = False,
):
    """Solve the p-Laplace DG scheme by damped Newton iteration.

    The default penalty is ``eta1 = 20 / h^{p-1}``. Without an explicit
    initial guess the iteration starts from the LDG Poisson solution with
    the same data.
    """
    h = mesh_size(mesh)
    eta1 = PLAPLACE_ETA / h ** (p - 1) if eta1 is None else eta1
    opt = options or NewtonOptions()
    disc = PLaplaceDiscretization(mesh, r, p, f, g, eta1, opt.eps)
    if initial is None:
        x0 = solve_poisson_ldg(mesh, r, f, g, eta1=PLAPLACE_ETA / h).vector
    else:
        x0 = initial.vector if isinstance(initial, DGField) else np.asarray(initial, dtype=float)
    x, hist = newton(disc.residual, disc.jacobian, x0, opt)
    u = DGField(mesh, r, x)
    return (u, hist) if return_history else u
