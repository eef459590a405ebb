"""Sparse building blocks shared by the solvers: mass, loads, jump penalties, linear solves."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from ..calculus import block_diagonal, get_operators, PenaltyConfig, ZERO_PENALTY
from ..errors import SingularSystemError
from ..field import _call, get_space
from ..mesh import Mesh


@dataclass
class SparseOperator:
    """Assembled linear system ``matrix @ x = rhs``."""

    matrix: sps.csr_matrix
    rhs: np.ndarray

    @property
    def N(self) -> int:
        return self.matrix.shape[0]

    def residual(self, x) -> float:
        """Relative residual ``|A x - b| / max(|b|, |A| |x|)``."""
        r = self.matrix @ x - self.rhs
        scale = max(np.linalg.norm(self.rhs), spla.norm(self.matrix, 1) * np.linalg.norm(x), 1e-300)
        return float(np.linalg.norm(r) / scale)

    def triplets(self):
        coo = self.matrix.tocoo()
        return coo.row.copy(), coo.col.copy(), coo.data.copy()

    def solve(self, method: str = "direct") -> np.ndarray:
        return solve_linear(self.matrix, self.rhs, method)


def solve_linear(A, b, method: str = "direct", pivot_tol: float = 1e-14) -> np.ndarray:
    """Direct sparse LU (default) or conjugate gradients for symmetric positive systems.

    Raises
    ------
    SingularSystemError
        When the factorization breaks down or its smallest pivot is below
        ``pivot_tol`` relative to the largest.
    """
    A = sps.csc_matrix(A)
    if method == "cg":
        x, info = spla.cg(A, b, rtol=1e-12, atol=0.0, maxiter=20 * A.shape[0])
        if info != 0:
            raise SingularSystemError(f"conjugate gradients did not converge (info={info})")
        return x
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SingularSystemError(f"sparse factorization failed: {exc}", pivot=0.0) from exc
    piv = np.abs(lu.U.diagonal())
    if piv.size and (piv.min() <= pivot_tol * piv.max() or not np.isfinite(piv).all()):
        raise SingularSystemError(
            f"matrix is numerically singular (smallest pivot {piv.min():.3e})", pivot=float(piv.min())
        )
    return lu.solve(np.asarray(b, dtype=float))


class Assembler:
    """Shared matrices on one mesh at degree ``r``."""

    def __init__(self, mesh: Mesh, r: int, pen: PenaltyConfig | None = None):
        self.mesh = mesh
        self.r = r
        self.pen = pen or ZERO_PENALTY
        self.ops = get_operators(mesh, r, r, self.pen)
        self.sp = get_space(mesh, r)
        self.d = mesh.dim
        self.N = self.sp.N

    # ---------------------------------------------------------- basic
    @property
    def M(self) -> sps.csr_matrix:
        if not hasattr(self, "_M"):
            mref = self.sp.Mref
            self._M = block_diagonal(mref[None] * self.mesh.det[:, None, None])
        return self._M

    @property
    def Minv(self):
        return self.ops.Minv

    def load(self, f, vol_degree: int | None = None) -> np.ndarray:
        """``(f, phi)`` for all basis functions."""
        vd = 2 * self.r + 4 if vol_degree is None else vol_degree
        sp = get_space(self.mesh, self.r, vd, 2 * self.r + 2)
        vals = sp.sample(f)
        return np.einsum("kq,qj,kq->kj", sp.wq, sp.V, vals).reshape(-1)

    def weighted_mass(self, a, vol_degree: int | None = None) -> sps.csr_matrix:
        """Block-diagonal matrix of ``(a v, phi)`` for a callable coefficient ``a``."""
        vd = 2 * self.r + 4 if vol_degree is None else vol_degree
        sp = get_space(self.mesh, self.r, vd, 2 * self.r + 2)
        vals = sp.sample(a)
        blocks = np.einsum("kq,qj,qm->kjm", sp.wq * vals, sp.V, sp.V)
        return block_diagonal(blocks)

    # ------------------------------------------------------ penalties
    def _edge_scatter(self, KK, KKp, KpK, KpKp):
        return self.ops._scatter_edges(KK, KKp, KpK, KpKp)

    def jump_matrix(self, eta) -> sps.csr_matrix:
        """``<eta [v], [phi]>_I + <eta v, phi>_B`` (``eta`` scalar or per edge)."""
        sp = self.sp
        eta = np.broadcast_to(np.asarray(eta, dtype=float), (self.mesh.num_edges,))
        if np.any(eta < 0):
            raise ValueError("penalty parameters must be nonnegative")
        w = sp.we * eta[:, None]
        ein = "eq,eqj,eqm->ejm"
        KK = np.einsum(ein, w, sp.TK, sp.TK)
        KKp = -np.einsum(ein, w, sp.TK, sp.TKp)
        KpK = -np.einsum(ein, w, sp.TKp, sp.TK)
        KpKp = np.einsum(ein, w, sp.TKp, sp.TKp)
        return self._edge_scatter(KK, KKp, KpK, KpKp)

    def jump_load(self, g, eta) -> np.ndarray:
        """``<eta g, phi>_B``."""
        sp = self.sp
        eta = np.broadcast_to(np.asarray(eta, dtype=float), (self.mesh.num_edges,))
        edges = self.mesh.boundary_edges
        out = np.zeros((self.mesh.num_elements, sp.n))
        if g is None or edges.size == 0:
            return out.reshape(-1)
        gv = _call(g, sp.xe[edges], ())
        contrib = np.einsum("eq,eqj->ej", sp.we[edges] * eta[edges, None] * gv, sp.TK[edges])
        np.add.at(out, sp.EK[edges], contrib)
        return out.reshape(-1)

    def normal_jump_matrix(self, eta) -> sps.csr_matrix:
        """``<eta [dv/dn], [dphi/dn]>_I + <eta dv/dn, dphi/dn>_B`` with piecewise gradients."""
        sp = self.sp
        eta = np.broadcast_to(np.asarray(eta, dtype=float), (self.mesh.num_edges,))
        if np.any(eta < 0):
            raise ValueError("penalty parameters must be nonnegative")
        n = sp.normals
        dK = np.einsum("eqji,ei->eqj", sp.GK, n)
        dKp = np.einsum("eqji,ei->eqj", sp.GKp, n)
        w = sp.we * eta[:, None]
        ein = "eq,eqj,eqm->ejm"
        KK = np.einsum(ein, w, dK, dK)
        KKp = -np.einsum(ein, w, dK, dKp)
        KpK = -np.einsum(ein, w, dKp, dK)
        KpKp = np.einsum(ein, w, dKp, dKp)
        return self._edge_scatter(KK, KKp, KpK, KpKp)

    def normal_jump_load(self, q, eta) -> np.ndarray:
        """``<eta q, dphi/dn>_B``."""
        sp = self.sp
        eta = np.broadcast_to(np.asarray(eta, dtype=float), (self.mesh.num_edges,))
        edges = self.mesh.boundary_edges
        out = np.zeros((self.mesh.num_elements, sp.n))
        if q is None or edges.size == 0:
            return out.reshape(-1)
        qv = _call(q, sp.xe[edges], ())
        dK = np.einsum("eqji,ei->eqj", sp.GK[edges], sp.normals[edges])
        contrib = np.einsum("eq,eqj->ej", sp.we[edges] * eta[edges, None] * qv, dK)
        np.add.at(out, sp.EK[edges], contrib)
        return out.reshape(-1)

    # ----------------------------------------------- derivative pieces
    def G(self, side, i, mask=None):
        return self.ops.G(side, i, mask)

    def D(self, side, i):
        return self.ops.D(side, i)

    def c(self, g, i, mask=None, component=None):
        if g is None:
            return np.zeros(self.N)
        return self.ops.c(g, i, mask, component)

    def Bc(self, i):
        return self.ops.B("central", i)

    def Bnd(self, i):
        return self.ops.Bnd(i)

    def gvec(self, g, i, component=None):
        if g is None:
            return np.zeros(self.N)
        return self.ops.gvec(g, i, component=component)
