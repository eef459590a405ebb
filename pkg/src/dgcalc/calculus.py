"""Sided discrete derivatives on broken polynomial spaces.

For a field ``v`` and axis ``i`` the sided partials are the unique members of
V_r^h satisfying, for every test function ``phi``::

    (d_i^s v, phi) = <Q_i^s(v) n_i, [phi]>_E - (v, d_i phi)_T + <gamma_i^s [v], [phi]>_I

where ``Q_i^-`` is the edge trace taken from the element on the ``-x_i`` side
and ``Q_i^+`` the one from the ``+x_i`` side (on boundary edges both are the
interior trace). Boundary data ``g`` adds ``<(g - v) n_i, phi>`` over the
boundary. The central partial is the mean of the two sided ones.

At ``r = 0`` on Cartesian grids these reduce to backward, forward and
central differences.
"""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .basis import reference_basis
from .field import DGField, MatrixField, Space, VectorField, _call, all_edge_traces, get_space
from .mesh import Mesh


# ------------------------------------------------------------------- sides
class Side(enum.IntEnum):
    MINUS = -1
    CENTRAL = 0
    PLUS = 1


_SIDE_NAMES = {
    "-": Side.MINUS,
    "minus": Side.MINUS,
    "m": Side.MINUS,
    "+": Side.PLUS,
    "plus": Side.PLUS,
    "p": Side.PLUS,
    "c": Side.CENTRAL,
    "central": Side.CENTRAL,
    "0": Side.CENTRAL,
}


def as_side(s) -> Side:
    if isinstance(s, Side):
        return s
    if isinstance(s, (int, np.integer)):
        return Side(int(s))
    try:
        return _SIDE_NAMES[str(s).lower()]
    except KeyError:
        raise ValueError(f"unknown side {s!r}") from None


def as_side_pair(sides):
    """Parse ``"-+"``, ``("-", "+")`` or ``"central"`` into a pair of sides (outer, inner)."""
    if isinstance(sides, str) and sides.lower() in ("central", "c", "cc"):
        return Side.CENTRAL, Side.CENTRAL
    if isinstance(sides, str):
        if len(sides) != 2:
            raise ValueError(f"side pair must have two entries, got {sides!r}")
        return as_side(sides[0]), as_side(sides[1])
    a, b = sides
    return as_side(a), as_side(b)


# ---------------------------------------------------------------- penalties
class PenaltyConfig:
    """Edgewise penalty values.

    Parameters
    ----------
    gamma_minus, gamma_plus : float or array_like, shape (ne,) or (ne, d)
        Jump weights of the sided derivative definitions (default 0).
    eta1, eta2 : float or array_like, shape (ne,)
        Jump penalties used by the solvers.
    """

    def __init__(self, gamma_minus=0.0, gamma_plus=0.0, eta1=0.0, eta2=0.0):
        self.gamma_minus = np.asarray(gamma_minus, dtype=float)
        self.gamma_plus = np.asarray(gamma_plus, dtype=float)
        self.eta1 = np.asarray(eta1, dtype=float)
        self.eta2 = np.asarray(eta2, dtype=float)
        for name in ("gamma_minus", "gamma_plus", "eta1", "eta2"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"penalty {name} must be finite")

    def gamma(self, mesh: Mesh, side, axis: int) -> np.ndarray:
        """Per-edge values of gamma_axis^side, shape (ne,)."""
        g = self.gamma_minus if as_side(side) == Side.MINUS else self.gamma_plus
        if g.ndim == 2:
            g = g[:, axis]
        return np.broadcast_to(g, (mesh.num_edges,)).astype(float)

    def eta(self, mesh: Mesh, which: int = 1) -> np.ndarray:
        e = self.eta1 if which == 1 else self.eta2
        return np.broadcast_to(e, (mesh.num_edges,)).astype(float)

    @property
    def ibp_compatible(self) -> bool:
        gm, gp = np.broadcast_arrays(self.gamma_minus, self.gamma_plus)
        return bool(np.all(gp == -gm))

    @property
    def is_zero_gamma(self) -> bool:
        return not (np.any(self.gamma_minus) or np.any(self.gamma_plus))

    @property
    def key(self) -> str:
        h = hashlib.sha1()
        for a in (self.gamma_minus, self.gamma_plus):
            h.update(str(a.shape).encode())
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    def with_eta(self, eta1=None, eta2=None) -> "PenaltyConfig":
        return PenaltyConfig(
            self.gamma_minus,
            self.gamma_plus,
            self.eta1 if eta1 is None else eta1,
            self.eta2 if eta2 is None else eta2,
        )


ZERO_PENALTY = PenaltyConfig()


# --------------------------------------------------------- sparse assembly
def _block_coo(blocks, row_el, col_el, n_out, n_in, shape):
    """Scatter (m, n_out, n_in) element blocks into a sparse matrix."""
    m = blocks.shape[0]
    if m == 0:
        return sps.csr_matrix(shape)
    rows = (row_el[:, None, None] * n_out + np.arange(n_out)[None, :, None]).repeat(n_in, axis=2)
    cols = (col_el[:, None, None] * n_in + np.arange(n_in)[None, None, :]).repeat(n_out, axis=1)
    return sps.coo_matrix(
        (blocks.ravel(), (rows.ravel(), cols.ravel())), shape=shape
    ).tocsr()


def block_diagonal(blocks) -> sps.csr_matrix:
    nel, n, _ = blocks.shape
    idx = np.arange(nel)
    return _block_coo(blocks, idx, idx, n, n, (nel * n, nel * n))


def trace_sign(normals_i):
    """``sgn(n^(i))`` with ``sgn(0) = +1``."""
    return np.where(normals_i >= 0, 1.0, -1.0)


class DerivativeOperators:
    """Global sparse realization of the sided partials between two degrees.

    Maps V_{r_in}^h to V_{r_out}^h. ``B[s][i]`` holds the right-hand side
    functional of the weak definition, ``Minv`` the inverse block mass
    matrix of the output space, so ``d_i^s = Minv @ B[s][i]``.
    """

    def __init__(self, mesh: Mesh, r_out: int, r_in: int, pen: PenaltyConfig = ZERO_PENALTY):
        self.mesh = mesh
        self.r_out, self.r_in = int(r_out), int(r_in)
        self.pen = pen
        deg = self.r_out + self.r_in + 2
        self.sp_out = so = get_space(mesh, self.r_out, deg, deg)
        self.sp_in = si = get_space(mesh, self.r_in, deg, deg)
        self.n_out, self.n_in = so.n, si.n
        self.shape = (so.N, si.N)
        self.Minv = block_diagonal(so.Minv)
        self._cache = {}

    # ----------------------------------------------------------- building
    def _edge_blocks(self, w, cKK, cKKp, cKpK, cKpKp):
        """Element blocks of sum_q w * c * phi_out * v_in over edges."""
        so, si = self.sp_out, self.sp_in
        ein = "eq,eqj,eqm->ejm"
        KK = np.einsum(ein, w * cKK, so.TK, si.TK)
        KKp = np.einsum(ein, w * cKKp, so.TK, si.TKp)
        KpK = np.einsum(ein, w * cKpK, so.TKp, si.TK)
        KpKp = np.einsum(ein, w * cKpKp, so.TKp, si.TKp)
        return KK, KKp, KpK, KpKp

    def _scatter_edges(self, KK, KKp, KpK, KpKp, edges=None):
        so = self.sp_out
        EK, EKp = so.EK, so.EKp
        if edges is not None:
            EK, EKp = EK[edges], EKp[edges]
            KK, KKp, KpK, KpKp = KK[edges], KKp[edges], KpK[edges], KpKp[edges]
        args = (self.n_out, self.n_in, self.shape)
        return (
            _block_coo(KK, EK, EK, *args)
            + _block_coo(KKp, EK, EKp, *args)
            + _block_coo(KpK, EKp, EK, *args)
            + _block_coo(KpKp, EKp, EKp, *args)
        )

    def volume(self, i: int) -> sps.csr_matrix:
        """Matrix of ``-(v, d_i phi)_T``."""
        key = ("vol", i)
        if key not in self._cache:
            so, si = self.sp_out, self.sp_in
            blocks = -np.einsum("kq,kqj,qm->kjm", so.wq, so.grad[..., i], si.V)
            idx = np.arange(self.mesh.num_elements)
            self._cache[key] = _block_coo(blocks, idx, idx, self.n_out, self.n_in, self.shape)
        return self._cache[key]

    def piecewise(self, i: int) -> sps.csr_matrix:
        """Matrix of ``(d_i v, phi)_T`` (elementwise derivative)."""
        key = ("pw", i)
        if key not in self._cache:
            so, si = self.sp_out, self.sp_in
            blocks = np.einsum("kq,qj,kqm->kjm", so.wq, so.V, si.grad[..., i])
            idx = np.arange(self.mesh.num_elements)
            self._cache[key] = _block_coo(blocks, idx, idx, self.n_out, self.n_in, self.shape)
        return self._cache[key]

    def B(self, side, i: int) -> sps.csr_matrix:
        """Right-hand side matrix of the sided partial ``d_i^side`` (side = -1 or +1)."""
        s = as_side(side)
        if s == Side.CENTRAL:
            return 0.5 * (self.B(Side.MINUS, i) + self.B(Side.PLUS, i))
        key = ("B", int(s), i)
        if key not in self._cache:
            so = self.sp_out
            bnd = so.boundary[:, None]
            n_i = so.normals[:, i]
            sig = trace_sign(n_i)[:, None]
            cK = np.where(bnd, 1.0, 0.5 - 0.5 * int(s) * sig)
            cKp = np.where(bnd, 0.0, 0.5 + 0.5 * int(s) * sig)
            wn = so.we * n_i[:, None]
            # [phi] = phi_K - phi_K' on interior edges
            flux = self._edge_blocks(wn, cK, cKp, -cK, -cKp)
            gam = self.pen.gamma(self.mesh, s, i)[:, None] * np.where(bnd, 0.0, 1.0)
            gw = so.we * gam
            pen = self._edge_blocks(gw, 1.0, -1.0, -1.0, 1.0)
            blocks = [a + b for a, b in zip(flux, pen)]
            self._cache[key] = self.volume(i) + self._scatter_edges(*blocks)
        return self._cache[key]

    def Bnd(self, i: int, mask=None) -> sps.csr_matrix:
        """Matrix of ``<v n_i, phi>`` over boundary edges (optionally a subset)."""
        key = ("Bnd", i, None if mask is None else mask.tobytes())
        if key not in self._cache:
            so = self.sp_out
            sel = so.boundary if mask is None else (so.boundary & mask)
            edges = np.flatnonzero(sel)
            wn = so.we * so.normals[:, i][:, None]
            KK = np.einsum("eq,eqj,eqm->ejm", wn[edges], so.TK[edges], self.sp_in.TK[edges])
            EK = so.EK[edges]
            self._cache[key] = _block_coo(KK, EK, EK, self.n_out, self.n_in, self.shape)
        return self._cache[key]

    def gvec(self, g, i: int, mask=None, component=None) -> np.ndarray:
        """Load vector ``<g n_i, phi>`` over (masked) boundary edges."""
        so = self.sp_out
        sel = so.boundary if mask is None else (so.boundary & mask)
        edges = np.flatnonzero(sel)
        out = np.zeros((self.mesh.num_elements, self.n_out))
        if edges.size == 0:
            return out.reshape(-1)
        pts = so.xe[edges]
        if component is None:
            gv = _call(g, pts, ())
        else:
            gv = _call(g, pts, (self.mesh.dim,))[..., component]
        wn = so.we[edges] * so.normals[edges, i][:, None]
        contrib = np.einsum("eq,eqj->ej", wn * gv, so.TK[edges])
        np.add.at(out, so.EK[edges], contrib)
        return out.reshape(-1)

    def lifting_rhs(self, i: int) -> sps.csr_matrix:
        """Matrix of ``<[v] n_i, {phi}>`` over interior edges."""
        key = ("L", i)
        if key not in self._cache:
            so = self.sp_out
            wn = so.we * so.normals[:, i][:, None] * np.where(so.boundary, 0.0, 1.0)[:, None]
            blocks = self._edge_blocks(wn, 0.5, -0.5, 0.5, -0.5)
            self._cache[key] = self._scatter_edges(*blocks, edges=so.interior_edges_idx())
        return self._cache[key]

    # -------------------------------------------------------- operators
    def D(self, side, i: int) -> sps.csr_matrix:
        """Matrix of the sided partial without boundary data."""
        s = as_side(side)
        key = ("D", int(s), i)
        if key not in self._cache:
            if s == Side.CENTRAL:
                self._cache[key] = 0.5 * (self.D(Side.MINUS, i) + self.D(Side.PLUS, i))
            else:
                self._cache[key] = (self.Minv @ self.B(s, i)).tocsr()
        return self._cache[key]

    def G(self, side, i: int, mask=None) -> sps.csr_matrix:
        """Linear part of the boundary-data partial (the operator with ``g = 0``)."""
        s = as_side(side)
        key = ("G", int(s), i, None if mask is None else mask.tobytes())
        if key not in self._cache:
            if s == Side.CENTRAL:
                self._cache[key] = 0.5 * (self.G(Side.MINUS, i, mask) + self.G(Side.PLUS, i, mask))
            else:
                A = (self.B(s, i) - self.Bnd(i, mask)).tocsr()
                self._cache[key] = (self.Minv @ A).tocsr()
        return self._cache[key]

    def c(self, g, i: int, mask=None, component=None) -> np.ndarray:
        """Affine part of the boundary-data partial: ``Minv <g n_i, phi>``."""
        return self.Minv @ self.gvec(g, i, mask, component)

    def apply(self, v: np.ndarray, side, i: int, g=None, mask=None, component=None) -> np.ndarray:
        s = as_side(side)
        if s == Side.CENTRAL:
            return 0.5 * (
                self.apply(v, Side.MINUS, i, g, mask, component)
                + self.apply(v, Side.PLUS, i, g, mask, component)
            )
        if g is None:
            return self.D(s, i) @ v
        return self.G(s, i, mask) @ v + self.c(g, i, mask, component)


def _interior_idx(self):
    return np.flatnonzero(~self.boundary)


Space.interior_edges_idx = _interior_idx


def get_operators(mesh: Mesh, r_out: int, r_in: int | None = None, pen: PenaltyConfig | None = None):
    """Cached :class:`DerivativeOperators` for a mesh, degree pair and penalty."""
    r_in = r_out if r_in is None else r_in
    pen = pen or ZERO_PENALTY
    key = ("ops", int(r_out), int(r_in), pen.key)
    ops = mesh._cache.get(key)
    if ops is None:
        ops = DerivativeOperators(mesh, r_out, r_in, pen)
        mesh._cache[key] = ops
    return ops


# ------------------------------------------------------------ public API
def trace_Q(field: DGField, edge: int, axis: int, side) -> np.ndarray:
    """Sided trace ``Q_axis^side`` of ``field`` at the quadrature points of ``edge``."""
    mesh = field.mesh
    if not (0 <= int(edge) < mesh.num_edges):
        raise IndexError(f"edge {edge} does not belong to this mesh")
    _check_axis(mesh, axis)
    s = as_side(side)
    vK, vKp, jump, avg = (a[int(edge)] for a in all_edge_traces(field))
    if mesh.boundary[int(edge)] or s == Side.CENTRAL:
        return avg
    sig = trace_sign(mesh.edge_normals[int(edge), axis])
    return avg - 0.5 * int(s) * sig * jump


def _check_axis(mesh, axis):
    if not (0 <= int(axis) < mesh.dim):
        raise ValueError(f"axis {axis} out of range for d={mesh.dim}")


def discrete_partial(
    field: DGField, axis: int, side="central", pen: PenaltyConfig | None = None, g=None,
    r_out: int | None = None,
) -> DGField:
    """Sided discrete partial derivative ``d_{h,x_axis}^side``.

    Parameters
    ----------
    field : DGField
    axis : int
        Zero-based coordinate index.
    side : {"-", "+", "central"}
    pen : PenaltyConfig, optional
        Jump weights gamma (default zero).
    g : callable or float, optional
        Boundary data; when given the boundary correction ``<(g - v) n, phi>`` is added.
    r_out : int, optional
        Degree of the result (default ``field.r``).
    """
    _check_axis(field.mesh, axis)
    r_out = field.r if r_out is None else r_out
    ops = get_operators(field.mesh, r_out, field.r, pen)
    return DGField(field.mesh, r_out, ops.apply(field.vector, side, axis, g))


def gradient(field: DGField, side="central", pen=None, g=None, r_out=None) -> VectorField:
    return VectorField(
        [discrete_partial(field, i, side, pen, g, r_out) for i in range(field.mesh.dim)]
    )


def divergence(vf: VectorField, side="central", pen=None, g=None) -> DGField:
    """Sum of sided partials of the components; ``g`` is vector boundary data (N, d)."""
    mesh = vf.mesh
    if len(vf) != mesh.dim:
        raise ValueError("vector field has wrong number of components")
    ops = get_operators(mesh, vf.r, vf.r, pen)
    out = np.zeros(ops.shape[0])
    for i, comp in enumerate(vf):
        out += ops.apply(comp.vector, side, i, g, component=None if g is None else i)
    return DGField(mesh, vf.r, out)


def curl2d(obj, side="central", pen=None):
    """Scalar curl of a 2D vector field, or vector curl ``(d_2 v, -d_1 v)`` of a scalar."""
    if isinstance(obj, VectorField):
        if obj.mesh.dim != 2 or len(obj) != 2:
            raise ValueError("curl2d needs a 2D vector field")
        return discrete_partial(obj[1], 0, side, pen) - discrete_partial(obj[0], 1, side, pen)
    if obj.mesh.dim != 2:
        raise ValueError("curl2d needs a 2D field")
    return VectorField([discrete_partial(obj, 1, side, pen), -discrete_partial(obj, 0, side, pen)])


def hessian(field: DGField, sides="central", pen=None, g=None) -> MatrixField:
    """Sided Hessian ``D^{s1 s2}``: entry (i, j) is ``d_j^{s1} (d_i^{s2} v)``.

    Boundary data, when given, enters only the inner gradient.
    """
    s1, s2 = as_side_pair(sides)
    d = field.mesh.dim
    inner = gradient(field, s2, pen, g)
    rows = [[discrete_partial(inner[i], j, s1, pen) for j in range(d)] for i in range(d)]
    return MatrixField(rows)


def laplacian(field: DGField, sides="central", pen=None, g=None) -> DGField:
    return hessian(field, sides, pen, g).trace()


def lifting(field: DGField, axis: int) -> DGField:
    """Lifting ``L_i``: ``(L_i v, phi) = <[v] n_i, {phi}>`` over interior edges."""
    _check_axis(field.mesh, axis)
    ops = get_operators(field.mesh, field.r, field.r)
    return DGField(field.mesh, field.r, ops.Minv @ (ops.lifting_rhs(axis) @ field.vector))


def piecewise_partial(field: DGField, axis: int) -> DGField:
    """Projection of the elementwise derivative (exact: it already lies in V_r^h)."""
    ops = get_operators(field.mesh, field.r, field.r)
    return DGField(field.mesh, field.r, ops.Minv @ (ops.piecewise(axis) @ field.vector))


# -------------------------------------------------- element-local matrices
@dataclass
class LocalOperatorSet:
    """Per-element realization of the sided partials.

    For axis ``i`` and side ``s`` the derivative coefficients on element ``K``
    are ``alpha_K = minv_K (Q_self beta_K + sum_f Q_f beta_{nbr(K, f)} + extra_K)``
    with ``minv_K = Mref^{-1} / |det DF_K|``.

    Attributes
    ----------
    mref, mref_inv : ndarray (n, n)
        Reference mass matrix and its inverse.
    minv : ndarray (nel, n, n)
    nbr : ndarray (nel, nf)
        Neighbour across each local face (-1 on the boundary).
    self_blocks, nbr_blocks : dict
        Keyed by ``(axis, side)``; shapes (nel, n, n) and (nel, nf, n, n).
    bface_blocks : dict
        Keyed by axis; ``<v n_i, phi>`` on boundary faces, (nel, nf, n, n).
    """

    mesh: Mesh
    r: int
    mref: np.ndarray
    mref_inv: np.ndarray
    minv: np.ndarray
    nbr: np.ndarray
    self_blocks: dict
    nbr_blocks: dict
    bface_blocks: dict
    face_x: np.ndarray
    face_w: np.ndarray
    face_n: np.ndarray
    face_phi: np.ndarray

    def boundary_load(self, g, axis: int, face_mask=None) -> np.ndarray:
        """``<g n_i, phi>`` over boundary faces, (nel, n)."""
        bf = self.nbr < 0
        if face_mask is not None:
            bf = bf & face_mask
        out = np.zeros(self.minv.shape[:2])
        k, f = np.nonzero(bf)
        if k.size == 0:
            return out
        gv = _call(g, self.face_x[k, f], ())
        wn = self.face_w[k, f] * self.face_n[k, f, axis][:, None]
        contrib = np.einsum("bq,bqj->bj", wn * gv, self.face_phi[k, f])
        np.add.at(out, k, contrib)
        return out

    def blocks(self, axis: int, side, g_faces=None):
        """Self and neighbour blocks, with boundary terms removed on ``g_faces``."""
        s = int(as_side(side))
        selfb = self.self_blocks[(axis, s)]
        if g_faces is not None and np.any(g_faces):
            selfb = selfb - np.einsum("kf,kfij->kij", g_faces.astype(float), self.bface_blocks[axis])
        return selfb, self.nbr_blocks[(axis, s)]

    def apply(self, beta, axis: int, side, g=None, face_mask=None) -> np.ndarray:
        """Coefficients of the sided partial of ``beta`` (nel, n)."""
        from .kernels import apply_local

        s = as_side(side)
        if s == Side.CENTRAL:
            return 0.5 * (
                self.apply(beta, axis, Side.MINUS, g, face_mask)
                + self.apply(beta, axis, Side.PLUS, g, face_mask)
            )
        beta = np.ascontiguousarray(np.asarray(beta, dtype=float).reshape(self.minv.shape[:2]))
        if g is None:
            selfb, nbrb = self.blocks(axis, s)
            extra = np.zeros_like(beta)
        else:
            gf = self.nbr < 0
            if face_mask is not None:
                gf = gf & face_mask
            selfb, nbrb = self.blocks(axis, s, gf)
            extra = self.boundary_load(g, axis, face_mask)
        return apply_local(selfb, self.nbr, nbrb, beta, extra, self.minv)


def _local_faces(mesh: Mesh, rule_pts):
    """Face quadrature points, weights and outward normals per element and local face."""
    v = mesh.vertices[mesh.cells]
    nel = mesh.num_elements
    if mesh.dim == 1:
        x = np.stack([v[:, 0], v[:, 1]], axis=1)[:, :, None, :]
        w = np.ones((nel, 2, 1))
        n = np.broadcast_to(np.array([[-1.0], [1.0]]), (nel, 2, 1)).copy()
        return x, w, n
    nf = v.shape[1]
    a = v
    b = np.roll(v, -1, axis=1)
    s = rule_pts[:, 0]
    x = a[:, :, None, :] + s[None, None, :, None] * (b - a)[:, :, None, :]
    t = b - a
    length = np.linalg.norm(t, axis=2)
    n = np.stack([t[..., 1], -t[..., 0]], axis=2) / length[..., None]
    return x, length[:, :, None], n


def local_derivative_matrices(mesh: Mesh, r: int, pen: PenaltyConfig | None = None) -> LocalOperatorSet:
    """Assemble the element-local derivative matrices.

    Each element is processed from its own point of view: for every face
    it decides from its outward normal whether it lies on the ``-x_i`` or
    ``+x_i`` side, and picks its own or the neighbour trace accordingly.
    """
    pen = pen or ZERO_PENALTY
    key = ("local", int(r), pen.key)
    if key in mesh._cache:
        return mesh._cache[key]
    from .basis import edge_quadrature, reference_mass_inverse, reference_mass_matrix, volume_quadrature

    basis = reference_basis(mesh.kind, r)
    n = basis.size
    nel, d = mesh.num_elements, mesh.dim
    nf = mesh.element_edges.shape[1]
    vrule = volume_quadrature(d, mesh.kind, 2 * r + 2)
    erule = edge_quadrature(2 * r + 2, d)
    mref = reference_mass_matrix(d, r, mesh.kind)
    mref_inv = reference_mass_inverse(mesh.kind, r)
    minv = mref_inv[None] / mesh.det[:, None, None]

    # volume term -(v, d_i phi)
    Vh = basis.eval(vrule.points)
    Gh = basis.grad(vrule.points)
    grads = np.einsum("kai,qja->kqji", mesh.jacobian_inv, Gh)
    wq = mesh.det[:, None] * vrule.weights[None, :]

    fx, flen, fn = _local_faces(mesh, erule.points)
    nqe = fx.shape[2]
    fw = flen * erule.weights[None, None, :] if d == 2 else flen

    # neighbour across each face
    edges = mesh.element_edges
    EK = mesh.edge_elements[edges, 0]
    EKp = mesh.edge_elements[edges, 1]
    own = np.arange(nel)[:, None]
    nbr = np.where(EK == own, EKp, EK)
    is_K = EK == own  # element has the smaller label on this face
    bface = nbr < 0
    safe_nbr = np.where(bface, own, nbr)

    flat_x = fx.reshape(-1, d)
    el_self = np.repeat(np.arange(nel), nf * nqe)
    el_nbr = np.repeat(safe_nbr.reshape(-1), nqe)
    phi_self = basis.eval(mesh.to_ref(el_self, flat_x)).reshape(nel, nf, nqe, n)
    phi_nbr = basis.eval(mesh.to_ref(el_nbr, flat_x)).reshape(nel, nf, nqe, n)

    self_blocks, nbr_blocks, bface_blocks = {}, {}, {}
    for i in range(d):
        vol = -np.einsum("kq,kqj,qm->kjm", wq, grads[..., i], Vh)
        nK = fn[..., i]
        minus_side = (nK > 0) | ((nK == 0) & is_K)
        wn = fw * nK[..., None]
        own_block = np.einsum("kfq,kfqj,kfqm->kfjm", wn, phi_self, phi_self)
        cross_block = np.einsum("kfq,kfqj,kfqm->kfjm", wn, phi_self, phi_nbr)
        mass_self = np.einsum("kfq,kfqj,kfqm->kfjm", fw, phi_self, phi_self)
        mass_cross = np.einsum("kfq,kfqj,kfqm->kfjm", fw, phi_self, phi_nbr)
        bmask = bface[..., None, None].astype(float)
        bface_blocks[i] = own_block * bmask
        gam_edge = {}
        for s in (-1, 1):
            gam_edge[s] = pen.gamma(mesh, s, i)[edges]
        for s in (-1, 1):
            uses_own = (minus_side if s == -1 else ~minus_side) | bface
            uo = uses_own[..., None, None].astype(float)
            gam = np.where(bface, 0.0, gam_edge[s])[..., None, None]
            sb = vol.copy()
            for f in range(nf):
                sb += own_block[:, f] * uo[:, f] + gam[:, f] * mass_self[:, f]
            nb = cross_block * (1.0 - uo) - gam * mass_cross
            nb = nb * (1.0 - bmask)
            self_blocks[(i, s)] = np.ascontiguousarray(sb)
            nbr_blocks[(i, s)] = np.ascontiguousarray(nb)

    out = LocalOperatorSet(
        mesh=mesh,
        r=int(r),
        mref=mref,
        mref_inv=mref_inv,
        minv=np.ascontiguousarray(minv),
        nbr=np.ascontiguousarray(nbr.astype(np.int64)),
        self_blocks=self_blocks,
        nbr_blocks=nbr_blocks,
        bface_blocks=bface_blocks,
        face_x=fx,
        face_w=fw,
        face_n=fn,
        face_phi=phi_self,
    )
    mesh._cache[key] = out
    return out
