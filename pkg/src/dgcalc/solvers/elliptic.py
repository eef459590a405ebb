"""Linear elliptic solvers built from the discrete operators.

All solvers assemble a sparse system in the modal coefficients of V_r^h and
solve it directly. Several equivalent assembly routes are offered for the
LDG and biharmonic methods so that they can be cross-checked.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sps

from ..calculus import PenaltyConfig
from ..field import DGField, _call
from ..mesh import Mesh
from .assembly import Assembler, SparseOperator, solve_linear

# default penalty constants (multiplied by the indicated power of 1/h)
LDG_ETA = 10.0
DWDG_ETA = 1.0
BIHARMONIC_ETA1 = 10.0
BIHARMONIC_ETA2 = 1.0


def mesh_size(mesh: Mesh) -> float:
    """Length scale used in penalty scalings: the grid spacing."""
    return mesh.spacing


def _check_eta(eta, name, strict=True):
    eta = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(eta)):
        raise ValueError(f"{name} must be finite")
    if strict and np.any(eta <= 0):
        raise ValueError(f"{name} must be positive")
    if np.any(eta < 0):
        raise ValueError(f"{name} must be nonnegative")
    return eta


def _load(asm: Assembler, f):
    """Load vector for a callable, constant or DGField source."""
    if f is None:
        return np.zeros(asm.N)
    if isinstance(f, DGField):
        return asm.M @ f.vector
    return asm.load(f)


# ------------------------------------------------------------- penalties
def penalty_j(v: DGField, g, eta1) -> DGField:
    """``j_{h,g}(v)``: ``(j(v), phi) = <eta [v], [phi]>_I + <eta (v - g), phi>_B``."""
    eta = _check_eta(eta1, "eta1", strict=False)
    asm = Assembler(v.mesh, v.r)
    b = asm.jump_matrix(eta) @ v.vector - asm.jump_load(g, eta)
    return DGField(v.mesh, v.r, asm.Minv @ b)


def penalty_r(v: DGField, q, eta2) -> DGField:
    """``r_{h,q}(v)``: normal-derivative jump penalty with boundary data ``q``."""
    eta = _check_eta(eta2, "eta2", strict=False)
    asm = Assembler(v.mesh, v.r)
    b = asm.normal_jump_matrix(eta) @ v.vector - asm.normal_jump_load(q, eta)
    return DGField(v.mesh, v.r, asm.Minv @ b)


# ----------------------------------------------------------------- LDG
def ldg_system(mesh: Mesh, r: int, f, g, eta1=None, form: str = "primal") -> SparseOperator:
    """Assemble the LDG Poisson system ``-Lap_{h,g} u + j_{h,g}(u) = P f``.

    Parameters
    ----------
    form : {"primal", "composed", "flux"}
        ``primal`` uses ``sum_i G_i^T M G_i``; ``composed`` applies the
        central divergence to the boundary-data gradient; ``flux`` assembles
        the classical LDG flux form with independent edge integrals.
    """
    eta1 = LDG_ETA / mesh_size(mesh) if eta1 is None else eta1
    eta = _check_eta(eta1, "eta1")
    asm = Assembler(mesh, r)
    J = asm.jump_matrix(eta)
    rhs = _load(asm, f) + asm.jump_load(g, eta)
    A = J.copy()
    for i in range(mesh.dim):
        G = asm.G("central", i)
        c = asm.c(g, i)
        if form == "primal":
            MG = (asm.Bc(i) - asm.Bnd(i)).tocsr()
            A = A + MG.T @ G
            rhs = rhs - MG.T @ c
        elif form == "composed":
            A = A - asm.Bc(i) @ G
            rhs = rhs + asm.Bc(i) @ c
        elif form == "flux":
            F = _flux_matrix(asm, i)
            A = A + F @ G
            rhs = rhs - F @ c
        else:
            raise ValueError(f"unknown LDG form {form!r}")
    return SparseOperator(sps.csr_matrix(A), rhs)


def _flux_matrix(asm: Assembler, i: int) -> sps.csr_matrix:
    """Matrix of ``(q, d_i phi)_T - <{q} n_i, [phi]>_E`` acting on one flux component."""
    sp = asm.sp
    vol = np.einsum("kq,kqj,qm->kjm", sp.wq, sp.grad[..., i], sp.V)
    idx = np.arange(asm.mesh.num_elements)
    from ..calculus import _block_coo

    V = _block_coo(vol, idx, idx, sp.n, sp.n, (sp.N, sp.N))
    bnd = sp.boundary[:, None]
    wn = sp.we * sp.normals[:, i][:, None]
    half = np.where(bnd, 1.0, 0.5)
    halfp = np.where(bnd, 0.0, 0.5)
    ein = "eq,eqj,eqm->ejm"
    KK = -np.einsum(ein, wn * half, sp.TK, sp.TK)
    KKp = -np.einsum(ein, wn * halfp, sp.TK, sp.TKp)
    KpK = np.einsum(ein, wn * half, sp.TKp, sp.TK)
    KpKp = np.einsum(ein, wn * halfp, sp.TKp, sp.TKp)
    return (V + asm._edge_scatter(KK, KKp, KpK, KpKp)).tocsr()


def _ldg_mixed(mesh, r, f, g, eta):
    """Three-field system for (q_1, .., q_d, u)."""
    asm = Assembler(mesh, r)
    d, N = mesh.dim, asm.N
    M = asm.M
    blocks = [[None] * (d + 1) for _ in range(d + 1)]
    rhs = []
    for i in range(d):
        blocks[i][i] = M
        blocks[i][d] = -(asm.Bc(i) - asm.Bnd(i))
        rhs.append(asm.gvec(g, i))
    for i in range(d):
        blocks[d][i] = -asm.Bc(i)
    blocks[d][d] = asm.jump_matrix(eta)
    rhs.append(_load(asm, f) + asm.jump_load(g, eta))
    return sps.bmat(blocks, format="csc"), np.concatenate(rhs), N


def solve_poisson_ldg(
    mesh: Mesh, r: int, f, g=0.0, eta1=None, form: str = "primal", method: str = "direct",
    return_system: bool = False,
):
    """LDG method for ``-Lap u = f`` with ``u = g`` on the boundary.

    ``form`` may also be ``"mixed"``, which solves the three-field system
    for the flux and the solution together.
    """
    eta1 = LDG_ETA / mesh_size(mesh) if eta1 is None else eta1
    eta = _check_eta(eta1, "eta1")
    if form == "mixed":
        A, b, N = _ldg_mixed(mesh, r, f, g, eta)
        x = solve_linear(A, b)
        u = DGField(mesh, r, x[-N:])
        return (u, SparseOperator(sps.csr_matrix(A), b)) if return_system else u
    sysop = ldg_system(mesh, r, f, g, eta, form)
    u = DGField(mesh, r, sysop.solve(method))
    return (u, sysop) if return_system else u


# ---------------------------------------------------------------- DWDG
def dwdg_system(mesh: Mesh, r: int, f, g, eta1=None, form: str = "primal") -> SparseOperator:
    """Symmetric dual-wind DG system.

    The primal form is ``1/2 sum_i (G_i^+)^T M G_i^+ + (G_i^-)^T M G_i^- + J``
    where ``G_i^pm`` are the boundary-data sided partials with zero data.
    ``f`` may be a callable, a constant, a DGField or ``None``.
    """
    eta1 = DWDG_ETA / mesh_size(mesh) if eta1 is None else eta1
    eta = _check_eta(eta1, "eta1", strict=False)
    asm = Assembler(mesh, r)
    A = asm.jump_matrix(eta)
    rhs = _load(asm, f) + asm.jump_load(g, eta)
    for i in range(mesh.dim):
        c = asm.c(g, i)
        for s, t in (("+", "-"), ("-", "+")):
            G = asm.G(s, i)
            if form == "primal":
                MG = (asm.ops.B(s, i) - asm.Bnd(i)).tocsr()
                A = A + 0.5 * (MG.T @ G)
                rhs = rhs - 0.5 * (MG.T @ c)
            elif form == "composed":
                Bt = asm.ops.B(t, i)
                A = A - 0.5 * (Bt @ G)
                rhs = rhs + 0.5 * (Bt @ c)
            else:
                raise ValueError(f"unknown DWDG form {form!r}")
    return SparseOperator(sps.csr_matrix(A), rhs)


def solve_poisson_dwdg(
    mesh: Mesh, r: int, f, g=0.0, eta1=None, form: str = "primal", method: str = "direct",
    return_system: bool = False,
):
    """Symmetric dual-wind DG method; ``eta1 = 0`` is admissible."""
    sysop = dwdg_system(mesh, r, f, g, eta1, form)
    u = DGField(mesh, r, sysop.solve(method))
    return (u, sysop) if return_system else u


def dwdg_energy(u: DGField, f, eta1=None) -> float:
    """Discrete energy ``1/2 a(u, u) - (f, u)`` minimized by the DWDG solution (g = 0)."""
    sysop = dwdg_system(u.mesh, u.r, f, 0.0, eta1)
    x = u.vector
    return float(0.5 * x @ (sysop.matrix @ x) - sysop.rhs @ x)


# ---------------------------------------------------------- biharmonic
def _normal_data_vec(asm: Assembler, q, i: int) -> np.ndarray:
    """``<q n_i n_i, phi>_B``: boundary data of the outer divergence for ``q n``."""
    sp = asm.sp
    edges = asm.mesh.boundary_edges
    out = np.zeros((asm.mesh.num_elements, sp.n))
    if q is None or edges.size == 0:
        return out.reshape(-1)
    qv = _call(q, sp.xe[edges], ())
    ni = sp.normals[edges, i][:, None]
    contrib = np.einsum("eq,eqj->ej", sp.we[edges] * qv * ni * ni, sp.TK[edges])
    np.add.at(out, sp.EK[edges], contrib)
    return out.reshape(-1)


def _biharmonic_pieces(asm: Assembler, g, q):
    """Linear part L and affine part l of ``Lap_{h,g,q} u = L u + l``."""
    L = None
    ell = np.zeros(asm.N)
    for i in range(asm.d):
        outer = (asm.ops.D("central", i) - asm.Minv @ asm.Bnd(i)).tocsr()
        G = asm.G("central", i)
        term = outer @ G
        L = term if L is None else L + term
        ell = ell + outer @ asm.c(g, i) + asm.Minv @ _normal_data_vec(asm, q, i)
    return L.tocsr(), ell


def biharmonic_system(mesh, r, f, g, q, eta1=None, eta2=None, form="primal") -> SparseOperator:
    h = mesh_size(mesh)
    eta1 = BIHARMONIC_ETA1 / h ** 3 if eta1 is None else eta1
    eta2 = BIHARMONIC_ETA2 / h if eta2 is None else eta2
    e1 = _check_eta(eta1, "eta1")
    e2 = _check_eta(eta2, "eta2", strict=False)
    asm = Assembler(mesh, r)
    L, ell = _biharmonic_pieces(asm, g, q)
    P = asm.jump_matrix(e1) + asm.normal_jump_matrix(e2)
    rhs = _load(asm, f) + asm.jump_load(g, e1) + asm.normal_jump_load(q, e2)
    if form == "primal":
        MLt = (asm.M @ L).T
        A = MLt @ L + P
        rhs = rhs - MLt @ ell
    elif form == "composed":
        K = None
        for i in range(asm.d):
            t = asm.Bc(i) @ asm.ops.D("central", i)
            K = t if K is None else K + t
        A = K @ L + P
        rhs = rhs - K @ ell
    else:
        raise ValueError(f"unknown biharmonic form {form!r}")
    return SparseOperator(sps.csr_matrix(A), rhs)


def _biharmonic_mixed(mesh, r, f, g, q, e1, e2):
    """Four-field system for (q_i, v, z_i, u) with q = grad_{h,g} u, v = div_{h,q} q, z = grad_h v."""
    asm = Assembler(mesh, r)
    d = mesh.dim
    M = asm.M
    nb = 2 * d + 2
    iq = list(range(d))
    iv = d
    iz = list(range(d + 1, 2 * d + 1))
    iu = 2 * d + 1
    B = [[None] * nb for _ in range(nb)]
    rhs = [None] * nb
    for i in range(d):
        B[iq[i]][iq[i]] = M
        B[iq[i]][iu] = -(asm.Bc(i) - asm.Bnd(i))
        rhs[iq[i]] = asm.gvec(g, i)
    B[iv][iv] = M
    rv = np.zeros(asm.N)
    for i in range(d):
        B[iv][iq[i]] = -(asm.Bc(i) - asm.Bnd(i))
        rv = rv + _normal_data_vec(asm, q, i)
    rhs[iv] = rv
    for i in range(d):
        B[iz[i]][iz[i]] = M
        B[iz[i]][iv] = -asm.Bc(i)
        rhs[iz[i]] = np.zeros(asm.N)
    for i in range(d):
        B[iu][iz[i]] = asm.Bc(i)
    B[iu][iu] = asm.jump_matrix(e1) + asm.normal_jump_matrix(e2)
    rhs[iu] = _load(asm, f) + asm.jump_load(g, e1) + asm.normal_jump_load(q, e2)
    return sps.bmat(B, format="csc"), np.concatenate(rhs), asm.N


def solve_biharmonic_clamped(
    mesh: Mesh, r: int, f, g=0.0, q=0.0, eta1=None, eta2=None, form: str = "primal",
    return_system: bool = False,
):
    """Clamped plate ``Lap^2 u = f``, ``u = g``, ``du/dn = q``.

    Defaults: ``eta1 = 10 / h^3``, ``eta2 = 1 / h``. ``form`` is one of
    ``"primal"``, ``"composed"`` or ``"mixed"`` (four-field system).
    """
    h = mesh_size(mesh)
    eta1 = BIHARMONIC_ETA1 / h ** 3 if eta1 is None else eta1
    eta2 = BIHARMONIC_ETA2 / h if eta2 is None else eta2
    e1 = _check_eta(eta1, "eta1")
    e2 = _check_eta(eta2, "eta2", strict=False)
    if form == "mixed":
        A, b, N = _biharmonic_mixed(mesh, r, f, g, q, e1, e2)
        x = solve_linear(A, b)
        u = DGField(mesh, r, x[-N:])
        return (u, SparseOperator(sps.csr_matrix(A), b)) if return_system else u
    sysop = biharmonic_system(mesh, r, f, g, q, e1, e2, form)
    u = DGField(mesh, r, sysop.solve())
    return (u, sysop) if return_system else u


# ------------------------------------------------------- non-divergence
def _coefficient_blocks(asm: Assembler, A):
    """Weighted mass matrices ``(A_ij v, phi)`` for a matrix coefficient."""
    d = asm.d
    from ..field import get_space
    from ..calculus import block_diagonal

    sp = get_space(asm.mesh, asm.r, 2 * asm.r + 4, 2 * asm.r + 2)
    vals = _call(A, sp.xq, (d, d))
    sym = np.abs(vals - np.swapaxes(vals, -1, -2)).max() if vals.size else 0.0
    if sym > 1e-10 * max(1.0, np.abs(vals).max()):
        raise ValueError("coefficient matrix must be symmetric")
    out = {}
    for i in range(d):
        for j in range(d):
            blocks = np.einsum("kq,qa,qb->kab", sp.wq * vals[..., i, j], sp.V, sp.V)
            out[i, j] = block_diagonal(blocks)
    return out


def nondivergence_system(mesh, r, A, f, g, eta1=None) -> SparseOperator:
    """``-P(A : D^2_{h,g} u) + j_{h,g}(u) = P f`` with central Hessian ``d_j (d_{i,g} u)``."""
    eta1 = LDG_ETA / mesh_size(mesh) if eta1 is None else eta1
    eta = _check_eta(eta1, "eta1")
    asm = Assembler(mesh, r)
    MA = _coefficient_blocks(asm, A)
    K = asm.jump_matrix(eta)
    rhs = _load(asm, f) + asm.jump_load(g, eta)
    for i in range(mesh.dim):
        G = asm.G("central", i)
        c = asm.c(g, i)
        for j in range(mesh.dim):
            Cj = asm.ops.D("central", j)
            K = K - MA[i, j] @ (Cj @ G)
            rhs = rhs + MA[i, j] @ (Cj @ c)
    return SparseOperator(sps.csr_matrix(K), rhs)


def solve_nondivergence(mesh: Mesh, r: int, A, f, g=0.0, eta1=None, return_system=False):
    """Non-divergence form problem ``-A : D^2 u = f`` with ``u = g`` on the boundary."""
    sysop = nondivergence_system(mesh, r, A, f, g, eta1)
    u = DGField(mesh, r, sysop.solve())
    return (u, sysop) if return_system else u


# ------------------------------------------------------------- Neumann
def solve_poisson_neumann(mesh: Mesh, r: int, f, q=0.0, eta1=None) -> DGField:
    """``-Lap u = f``, ``du/dn = q``, normalized to zero mean.

    Uses ``-div_{h,qn} grad_h u`` plus interior jump penalties; the
    constant kernel is removed with a Lagrange multiplier.
    """
    eta1 = LDG_ETA / mesh_size(mesh) if eta1 is None else eta1
    eta = _check_eta(eta1, "eta1")
    asm = Assembler(mesh, r)
    eta_int = np.where(mesh.boundary, 0.0, np.broadcast_to(eta, (mesh.num_edges,)))
    K = asm.jump_matrix(eta_int)
    rhs = _load(asm, f)
    for i in range(mesh.dim):
        D = asm.ops.D("central", i)
        K = K - (asm.Bc(i) - asm.Bnd(i)) @ D
        rhs = rhs + _normal_data_vec(asm, q, i)
    m = asm.M @ np.tile(_unit_coeffs(asm), mesh.num_elements)
    big = sps.bmat([[K, sps.csr_matrix(m[:, None])], [sps.csr_matrix(m[None, :]), None]], format="csc")
    x = solve_linear(big, np.concatenate([rhs, [0.0]]))
    return DGField(mesh, r, x[:-1])


def _unit_coeffs(asm):
    """Coefficients of the constant 1 in the local basis."""
    vals = np.ones(asm.sp.V.shape[0])
    b = asm.sp.ref_weights * vals @ asm.sp.V
    return asm.sp.Minv_ref @ b


# -------------------------------------------------------- problem type
@dataclass
class EllipticProblem:
    """Declarative description of a linear elliptic problem."""

    kind: str
    f: Callable | float = 0.0
    g: Callable | float = 0.0
    q: Callable | float = 0.0
    A: Callable | None = None
    eta1: float | None = None
    eta2: float | None = None
    options: dict = field(default_factory=dict)

    KINDS = ("poisson_ldg", "poisson_dwdg", "biharmonic_clamped", "nondivergence", "poisson_neumann")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}")

    def solve(self, mesh: Mesh, r: int) -> DGField:
        if self.kind == "poisson_ldg":
            return solve_poisson_ldg(mesh, r, self.f, self.g, self.eta1, **self.options)
        if self.kind == "poisson_dwdg":
            return solve_poisson_dwdg(mesh, r, self.f, self.g, self.eta1, **self.options)
        if self.kind == "biharmonic_clamped":
            return solve_biharmonic_clamped(mesh, r, self.f, self.g, self.q, self.eta1, self.eta2, **self.options)
        if self.kind == "nondivergence":
            return solve_nondivergence(mesh, r, self.A, self.f, self.g, self.eta1)
        return solve_poisson_neumann(mesh, r, self.f, self.q, self.eta1)
