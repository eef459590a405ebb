"""Broken polynomial spaces and fields on them.

A field of degree ``r`` stores modal coefficients, ``n_r`` per element, in
element-label order. Quadrature tables for a given mesh and degree live in a
:class:`Space`, cached on the mesh.

Callables passed to :func:`project`, :func:`l2_error` and friends receive an
array of points of shape ``(N, d)`` and return ``N`` values (or ``(N, d)`` for
vector data). Plain numbers are accepted as constant functions.
"""
from __future__ import annotations

import io
from typing import Callable, Sequence

import numpy as np

from .basis import (
    MAX_DEGREE,
    edge_quadrature,
    reference_basis,
    reference_mass_inverse,
    reference_mass_matrix,
    volume_quadrature,
)
from .errors import EvaluationError
from .mesh import Mesh


# ------------------------------------------------------------------- spaces
class Space:
    """Quadrature-sampled realization of V_r^h on a mesh.

    Attributes
    ----------
    V : ndarray (nq, n)
        Basis values at reference volume points (affine maps make it element independent).
    grad : ndarray (nel, nq, n, d)
        Physical basis gradients at volume points.
    xq : ndarray (nel, nq, d)
        Physical volume points.
    wq : ndarray (nel, nq)
        Physical volume weights.
    xe, we : ndarray (ne, nqe, d), (ne, nqe)
        Physical edge points and weights (edge length included).
    TK, TKp : ndarray (ne, nqe, n)
        Basis traces of the first and second edge element (zero on the boundary).
    GK, GKp : ndarray (ne, nqe, n, d)
        Gradient traces.
    """

    def __init__(self, mesh: Mesh, r: int, vol_degree: int, edge_degree: int):
        self.mesh = mesh
        self.r = int(r)
        self.kind = mesh.kind
        self.d = mesh.dim
        self.basis = reference_basis(mesh.kind, self.r)
        self.n = self.basis.size
        self.nel = mesh.num_elements
        self.N = self.nel * self.n
        cap = MAX_DEGREE[mesh.kind]
        self.vol_rule = volume_quadrature(self.d, mesh.kind, min(vol_degree, cap))
        self.edge_rule = edge_quadrature(min(edge_degree, MAX_DEGREE["interval"]), self.d)

        q = self.vol_rule
        self.V = self.basis.eval(q.points)
        ghat = self.basis.grad(q.points)
        self.grad = np.einsum("kai,qja->kqji", mesh.jacobian_inv, ghat)
        self.xq = mesh.origin[:, None, :] + np.einsum("kij,qj->kqi", mesh.jacobian, q.points)
        self.wq = mesh.det[:, None] * q.weights[None, :]
        self.ref_weights = q.weights
        self.Mref = reference_mass_matrix(self.d, self.r, mesh.kind)
        self.Minv_ref = reference_mass_inverse(mesh.kind, self.r)
        # inverse of the physical block mass matrix, per element
        self.Minv = self.Minv_ref[None, :, :] / mesh.det[:, None, None]

        self._edges()

    def _edges(self):
        mesh = self.mesh
        rule = self.edge_rule
        EK, EKp = mesh.edge_elements[:, 0], mesh.edge_elements[:, 1]
        if self.d == 1:
            xe = mesh.edge_points[:, :1, :].copy()
            we = np.ones((mesh.num_edges, 1))
        else:
            p0, p1 = mesh.edge_points[:, 0], mesh.edge_points[:, 1]
            s = rule.points[:, 0]
            xe = p0[:, None, :] + s[None, :, None] * (p1 - p0)[:, None, :]
            we = mesh.edge_measure[:, None] * rule.weights[None, :]
        self.xe, self.we = xe, we
        self.nqe = xe.shape[1]
        self.normals = mesh.edge_normals
        self.boundary = mesh.boundary
        self.EK = EK
        self.EKp = np.where(EKp < 0, EK, EKp)  # safe index; masked by boundary
        self.TK, self.GK = self._trace(EK, xe)
        TKp, GKp = self._trace(self.EKp, xe)
        TKp[self.boundary] = 0.0
        GKp[self.boundary] = 0.0
        self.TKp, self.GKp = TKp, GKp

    def _trace(self, elems, xe):
        ne, nqe, d = xe.shape
        xh = self.mesh.to_ref(np.repeat(elems, nqe).reshape(ne, nqe), xe)
        flat = xh.reshape(-1, d)
        vals = self.basis.eval(flat).reshape(ne, nqe, self.n)
        gh = self.basis.grad(flat).reshape(ne, nqe, self.n, d)
        grads = np.einsum("eai,eqja->eqji", self.mesh.jacobian_inv[elems], gh)
        return vals, grads

    # --------------------------------------------------------------- helpers
    def sample(self, f, points=None):
        """Evaluate a callable at volume points, returning (nel, nq)."""
        pts = self.xq if points is None else points
        return _call(f, pts, ())

    def sample_vector(self, f, points=None, width=None):
        pts = self.xq if points is None else points
        width = self.d if width is None else width
        return _call(f, pts, (width,))

    def project_values(self, vals):
        """Coefficients of the L2 projection of values sampled at volume points."""
        b = np.einsum("q,qj,kq->kj", self.ref_weights, self.V, vals)
        return b @ self.Minv_ref.T

    def values(self, coeffs):
        """Field values at volume points, shape (nel, nq)."""
        return coeffs @ self.V.T

    def grad_values(self, coeffs):
        """Piecewise gradient at volume points, shape (nel, nq, d)."""
        return np.einsum("kqji,kj->kqi", self.grad, coeffs)


def get_space(mesh: Mesh, r: int, vol_degree: int | None = None, edge_degree: int | None = None) -> Space:
    """Cached :class:`Space` for ``mesh`` at degree ``r`` (default exactness ``2r + 2``)."""
    vd = 2 * r + 2 if vol_degree is None else int(vol_degree)
    ed = 2 * r + 2 if edge_degree is None else int(edge_degree)
    key = ("space", int(r), vd, ed)
    sp = mesh._cache.get(key)
    if sp is None:
        sp = Space(mesh, r, vd, ed)
        mesh._cache[key] = sp
    return sp


def _call(f, pts, tail):
    shape = pts.shape[:-1]
    if callable(f):
        flat = pts.reshape(-1, pts.shape[-1])
        out = np.asarray(f(flat), dtype=float)
        if out.ndim == 0:
            out = np.full((flat.shape[0],) + tail, float(out))
        out = np.broadcast_to(out, (flat.shape[0],) + tail).reshape(shape + tail)
    else:
        out = np.broadcast_to(np.asarray(f, dtype=float), shape + tail)
    if not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(out.reshape(shape[0], -1)))[0, 0] if out.size else None
        raise EvaluationError(
            f"non-finite value of supplied function on element {bad}", element=int(bad)
        )
    return np.array(out, dtype=float)


# ------------------------------------------------------------------- fields
class DGField:
    """Element of V_r^h.

    Parameters
    ----------
    mesh : Mesh
    r : int
    coeffs : array_like, shape (nel, n_r) or (nel * n_r,)
    """

    __array_priority__ = 100

    def __init__(self, mesh: Mesh, r: int, coeffs):
        self.mesh = mesh
        self.r = int(r)
        n = reference_basis(mesh.kind, self.r).size
        c = np.array(coeffs, dtype=float).reshape(mesh.num_elements, n)
        c.setflags(write=False)
        self.coeffs = c

    @classmethod
    def zeros(cls, mesh, r):
        return cls(mesh, r, np.zeros((mesh.num_elements, reference_basis(mesh.kind, r).size)))

    @classmethod
    def from_vector(cls, mesh, r, vec):
        return cls(mesh, r, np.asarray(vec).reshape(mesh.num_elements, -1))

    @property
    def vector(self) -> np.ndarray:
        """Flat coefficient vector (element-major)."""
        return self.coeffs.reshape(-1)

    @property
    def space(self) -> Space:
        return get_space(self.mesh, self.r)

    @property
    def size(self) -> int:
        return self.coeffs.size

    def _check(self, other):
        if other.mesh is not self.mesh or other.r != self.r:
            raise ValueError("fields live on different spaces")

    def __add__(self, other):
        if isinstance(other, DGField):
            self._check(other)
            return DGField(self.mesh, self.r, self.coeffs + other.coeffs)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, DGField):
            self._check(other)
            return DGField(self.mesh, self.r, self.coeffs - other.coeffs)
        return NotImplemented

    def __neg__(self):
        return DGField(self.mesh, self.r, -self.coeffs)

    def __mul__(self, a):
        if np.isscalar(a):
            return DGField(self.mesh, self.r, a * self.coeffs)
        return NotImplemented

    __rmul__ = __mul__

    def at_ref(self, xhat) -> np.ndarray:
        """Values at reference points on every element, shape (nel, npts)."""
        return self.coeffs @ reference_basis(self.mesh.kind, self.r).eval(xhat).T

    def __call__(self, x, elements=None) -> np.ndarray:
        """Point evaluation; ``elements`` selects the element explicitly."""
        x = np.asarray(x, dtype=float)
        if self.mesh.dim == 1 and x.ndim <= 1:
            x = x.reshape(-1, 1)
        x = np.atleast_2d(x)
        if elements is None:
            elements = self.mesh.locate(x)
            if np.any(elements < 0):
                raise ValueError("evaluation point outside the mesh")
        elements = np.broadcast_to(np.asarray(elements), (x.shape[0],))
        xh = self.mesh.to_ref(elements, x)
        phi = reference_basis(self.mesh.kind, self.r).eval(xh)
        return np.einsum("pj,pj->p", phi, self.coeffs[elements])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("element,index,value\n")
        for k, row in enumerate(self.coeffs):
            for j, v in enumerate(row):
                buf.write(f"{int(self.mesh.labels[k])},{j},{v!r}\n")
        return buf.getvalue()

    def samples_csv(self, xhat=None) -> str:
        """Point samples (element centroids by default) for plotting."""
        mesh = self.mesh
        if xhat is None:
            xhat = mesh.to_ref(np.arange(mesh.num_elements), mesh.centroid)
            vals = np.array([self(mesh.centroid[k : k + 1], k)[0] for k in range(mesh.num_elements)])
            pts = mesh.centroid
        else:
            xhat = np.atleast_2d(xhat)
            vals = self.at_ref(xhat).reshape(-1)
            pts = mesh.to_physical(
                np.repeat(np.arange(mesh.num_elements), xhat.shape[0]),
                np.tile(xhat, (mesh.num_elements, 1)),
            )
        cols = [f"x{i + 1}" for i in range(mesh.dim)] + ["value"]
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        for p, v in zip(pts, vals):
            buf.write(",".join(repr(float(c)) for c in p) + f",{float(v)!r}\n")
        return buf.getvalue()

    def __repr__(self):
        return f"DGField(r={self.r}, elements={self.mesh.num_elements})"


class VectorField:
    """``d`` scalar fields sharing mesh and degree."""

    def __init__(self, components: Sequence[DGField]):
        components = tuple(components)
        if not components:
            raise ValueError("empty vector field")
        m, r = components[0].mesh, components[0].r
        for c in components:
            if c.mesh is not m or c.r != r:
                raise ValueError("components must share mesh and degree")
        self.components = components
        self.mesh, self.r = m, r

    def __getitem__(self, i) -> DGField:
        return self.components[i]

    def __len__(self):
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def __add__(self, other):
        return VectorField([a + b for a, b in zip(self, other)])

    def __sub__(self, other):
        return VectorField([a - b for a, b in zip(self, other)])

    def __mul__(self, a):
        return VectorField([a * c for c in self])

    __rmul__ = __mul__

    @property
    def vector(self):
        return np.concatenate([c.vector for c in self])


class MatrixField:
    """``d x d`` scalar fields sharing mesh and degree."""

    def __init__(self, rows: Sequence[Sequence[DGField]]):
        self.rows = tuple(tuple(r) for r in rows)
        d = len(self.rows)
        if any(len(r) != d for r in self.rows):
            raise ValueError("matrix field must be square")
        self.mesh = self.rows[0][0].mesh
        self.r = self.rows[0][0].r

    def __getitem__(self, ij) -> DGField:
        i, j = ij
        return self.rows[i][j]

    @property
    def dim(self):
        return len(self.rows)

    def trace(self) -> DGField:
        out = self.rows[0][0]
        for i in range(1, self.dim):
            out = out + self.rows[i][i]
        return out


# -------------------------------------------------------------- projections
def project(f, mesh: Mesh, r: int, vol_degree: int | None = None) -> DGField:
    """L2 projection of a callable (or constant) onto V_r^h.

    ``vol_degree`` sets the quadrature exactness (default ``2r + 4``).
    """
    vd = 2 * r + 4 if vol_degree is None else vol_degree
    sp = get_space(mesh, r, vd, 2 * r + 2)
    return DGField(mesh, r, sp.project_values(sp.sample(f)))


def project_vector(f, mesh: Mesh, r: int, vol_degree: int | None = None) -> VectorField:
    """Componentwise projection; ``f`` is a sequence of callables or returns (N, d)."""
    if isinstance(f, (list, tuple)):
        return VectorField([project(fi, mesh, r, vol_degree) for fi in f])
    vd = 2 * r + 4 if vol_degree is None else vol_degree
    sp = get_space(mesh, r, vd, 2 * r + 2)
    vals = sp.sample_vector(f)
    return VectorField(
        [DGField(mesh, r, sp.project_values(vals[..., i])) for i in range(mesh.dim)]
    )


def project_matrix(f, mesh: Mesh, r: int, vol_degree: int | None = None) -> MatrixField:
    """Componentwise projection of a matrix-valued callable returning (N, d, d)."""
    d = mesh.dim
    vd = 2 * r + 4 if vol_degree is None else vol_degree
    sp = get_space(mesh, r, vd, 2 * r + 2)
    vals = _call(f, sp.xq, (d, d))
    return MatrixField(
        [[DGField(mesh, r, sp.project_values(vals[..., i, j])) for j in range(d)] for i in range(d)]
    )


def embed(field: DGField, r: int) -> DGField:
    """Represent ``field`` exactly in the larger space V_r^h (``r >= field.r``)."""
    if r < field.r:
        raise ValueError("embedding requires a degree at least as large")
    sp = get_space(field.mesh, r)
    vals = field.at_ref(sp.vol_rule.points)
    return DGField(field.mesh, r, sp.project_values(vals))


# ------------------------------------------------------------- edge traces
def all_edge_traces(field: DGField, sp: Space | None = None):
    """Traces on every edge: (v_K, v_K', jump, average), each (ne, nqe).

    On boundary edges ``v_K'`` is set equal to ``v_K`` so that jump and
    average both reduce to the trace.
    """
    sp = sp or get_space(field.mesh, field.r)
    vK = np.einsum("eqj,ej->eq", sp.TK, field.coeffs[sp.EK])
    vKp = np.einsum("eqj,ej->eq", sp.TKp, field.coeffs[sp.EKp])
    vKp = np.where(sp.boundary[:, None], vK, vKp)
    jump = np.where(sp.boundary[:, None], vK, vK - vKp)
    avg = np.where(sp.boundary[:, None], vK, 0.5 * (vK + vKp))
    return vK, vKp, jump, avg


def edge_traces(field: DGField, edge: int):
    """Traces of ``field`` on one edge at its quadrature points.

    Returns
    -------
    tuple of ndarray
        ``(v_K, v_K', [v], {v})``.
    """
    if not (0 <= int(edge) < field.mesh.num_edges):
        raise IndexError(f"edge {edge} does not belong to this mesh")
    return tuple(a[int(edge)] for a in all_edge_traces(field))


# ----------------------------------------------------------------- norms
def _err_space(field, vol_degree):
    vd = 2 * field.r + 4 if vol_degree is None else vol_degree
    return get_space(field.mesh, field.r, vd, 2 * field.r + 2)


def l2_norm(field: DGField) -> float:
    sp = field.space
    return float(np.sqrt(np.sum(sp.wq * sp.values(field.coeffs) ** 2)))


def inner(a: DGField, b: DGField) -> float:
    """L2 inner product computed from the block mass matrices."""
    sp = get_space(a.mesh, max(a.r, b.r), a.r + b.r)
    va = a.at_ref(sp.vol_rule.points)
    vb = b.at_ref(sp.vol_rule.points)
    return float(np.sum(sp.wq * va * vb))


def l2_error(field: DGField, exact, vol_degree: int | None = None) -> float:
    """``||u_h - u||_{L2}`` with quadrature exactness ``2r + 4`` by default."""
    sp = _err_space(field, vol_degree)
    diff = sp.values(field.coeffs) - sp.sample(exact)
    return float(np.sqrt(np.sum(sp.wq * diff ** 2)))


def broken_h1_error(field, exact_grad, vol_degree: int | None = None) -> float:
    """Error of a gradient: piecewise gradient of a DGField or a VectorField."""
    if isinstance(field, DGField):
        sp = _err_space(field, vol_degree)
        g = sp.grad_values(field.coeffs)
    else:
        sp = _err_space(field[0], vol_degree)
        g = np.stack([sp.values(c.coeffs) for c in field], axis=-1)
    diff = g - sp.sample_vector(exact_grad)
    return float(np.sqrt(np.sum(sp.wq[..., None] * diff ** 2)))


def random_field(mesh: Mesh, r: int, rng: np.random.Generator, scale: float = 1.0) -> DGField:
    n = reference_basis(mesh.kind, r).size
    return DGField(mesh, r, scale * rng.standard_normal((mesh.num_elements, n)))


def as_callable(obj) -> Callable:
    if callable(obj):
        return obj
    c = float(obj)
    return lambda x: np.full(np.asarray(x).shape[0], c)
