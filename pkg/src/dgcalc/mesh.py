"""Interval, Cartesian and triangulated meshes with labelled edges.

Elements carry a global label equal to their index. For every interior edge
the element with the smaller label is stored first, and the edge normal is
the outward unit normal of that element. This fixes the sign of jumps
``[v] = v|_K - v|_K'`` once and for all.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

KINDS = ("interval", "box", "triangle")


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable conforming mesh of a box domain in one or two dimensions.

    Attributes
    ----------
    dim : int
        Spatial dimension (1 or 2).
    kind : str
        Cell type, one of ``"interval"``, ``"box"``, ``"triangle"``.
    vertices : ndarray, shape (nv, dim)
    cells : ndarray, shape (nel, nverts)
        Vertex indices, counter-clockwise in 2D.
    labels : ndarray, shape (nel,)
        Global element labels; constructors use ``arange(nel)``.
    edge_elements : ndarray, shape (ne, 2)
        ``(K, K')`` with ``label(K) < label(K')``; ``K' = -1`` on the boundary.
    edge_normals : ndarray, shape (ne, dim)
        Outward unit normal of ``K`` on the edge.
    edge_points : ndarray, shape (ne, npts, dim)
        Edge endpoints in the orientation of ``K`` (a single point in 1D).
    element_edges : ndarray, shape (nel, nfaces)
        Edge id of every local face, in local face order.
    extents : tuple of (float, float)
        Bounding box of the domain per axis.
    divisions : tuple of int
        Cells per axis of the generating Cartesian grid.
    """

    dim: int
    kind: str
    vertices: np.ndarray
    cells: np.ndarray
    labels: np.ndarray
    edge_elements: np.ndarray
    edge_normals: np.ndarray
    edge_points: np.ndarray
    element_edges: np.ndarray
    extents: tuple
    divisions: tuple
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # ------------------------------------------------------------------ sizes
    @property
    def num_elements(self) -> int:
        return self.cells.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edge_elements.shape[0]

    @property
    def faces_per_element(self) -> int:
        return self.element_edges.shape[1]

    @cached_property
    def boundary(self) -> np.ndarray:
        """Boolean mask of boundary edges."""
        return self.edge_elements[:, 1] < 0

    @cached_property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    # --------------------------------------------------------------- geometry
    @cached_property
    def origin(self) -> np.ndarray:
        """Image of the reference origin under each element map."""
        return self.vertices[self.cells[:, 0]]

    @cached_property
    def jacobian(self) -> np.ndarray:
        """Affine map Jacobians ``DF_K``, shape (nel, dim, dim)."""
        v = self.vertices[self.cells]
        if self.kind == "interval":
            return (v[:, 1] - v[:, 0])[:, :, None]
        if self.kind == "box":
            # reference cell is the unit square, vertices (0,0),(1,0),(1,1),(0,1)
            return np.stack([v[:, 1] - v[:, 0], v[:, 3] - v[:, 0]], axis=2)
        return np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)

    @cached_property
    def _signed_det(self) -> np.ndarray:
        # closed form: exact on dyadic grids, unlike an LU-based determinant
        J = self.jacobian
        if self.dim == 1:
            return J[:, 0, 0].copy()
        return J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]

    @cached_property
    def jacobian_inv(self) -> np.ndarray:
        J, det = self.jacobian, self._signed_det
        if self.dim == 1:
            return 1.0 / J
        adj = np.stack([np.stack([J[:, 1, 1], -J[:, 0, 1]], axis=1),
                        np.stack([-J[:, 1, 0], J[:, 0, 0]], axis=1)], axis=1)
        return adj / det[:, None, None]

    @cached_property
    def det(self) -> np.ndarray:
        """``|det DF_K|`` per element."""
        return np.abs(self._signed_det)

    @cached_property
    def measure(self) -> np.ndarray:
        """Element volumes ``|K|``."""
        if self.kind == "triangle":
            return 0.5 * self.det
        return self.det.copy()

    @cached_property
    def centroid(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @cached_property
    def diameter(self) -> np.ndarray:
        v = self.vertices[self.cells]
        diff = v[:, :, None, :] - v[:, None, :, :]
        return np.sqrt((diff ** 2).sum(-1)).max(axis=(1, 2))

    @property
    def h(self) -> float:
        """Characteristic size: the largest element diameter."""
        return float(self.diameter.max())

    @property
    def spacing(self) -> float:
        """Largest grid spacing of the generating Cartesian grid."""
        return max((hi - lo) / n for (lo, hi), n in zip(self.extents, self.divisions))

    @cached_property
    def edge_measure(self) -> np.ndarray:
        if self.dim == 1:
            return np.ones(self.num_edges)
        d = self.edge_points[:, 1] - self.edge_points[:, 0]
        return np.sqrt((d ** 2).sum(-1))

    @property
    def domain_measure(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.extents]))

    # ------------------------------------------------------------- utilities
    def to_ref(self, elements, x):
        """Map physical points ``x`` (..., dim) on ``elements`` (...) to reference coordinates."""
        elements = np.asarray(elements)
        y = np.asarray(x) - self.origin[elements]
        return np.einsum("...ij,...j->...i", self.jacobian_inv[elements], y)

    def to_physical(self, elements, xhat):
        elements = np.asarray(elements)
        return self.origin[elements] + np.einsum(
            "...ij,...j->...i", self.jacobian[elements], np.asarray(xhat)
        )

    def locate(self, x) -> np.ndarray:
        """Element index containing each point (first match; -1 if outside)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.dim == 1:
            x = x.reshape(-1, 1)
        out = np.full(x.shape[0], -1, dtype=np.int64)
        tol = 1e-12
        for k in range(self.num_elements):
            xh = (x - self.origin[k]) @ self.jacobian_inv[k].T
            if self.kind == "triangle":
                inside = (xh >= -tol).all(1) & (xh.sum(1) <= 1 + tol)
            else:
                inside = ((xh >= -tol) & (xh <= 1 + tol)).all(1)
            sel = inside & (out < 0)
            out[sel] = k
        return out

    def to_json(self) -> str:
        """Debug dump of vertices, cells and labels."""
        return json.dumps(
            {
                "dim": self.dim,
                "kind": self.kind,
                "vertices": self.vertices.tolist(),
                "cells": self.cells.tolist(),
                "labels": self.labels.tolist(),
                "extents": [list(e) for e in self.extents],
                "divisions": list(self.divisions),
            }
        )

    def info(self) -> dict:
        return {
            "dim": self.dim,
            "kind": self.kind,
            "elements": self.num_elements,
            "edges": self.num_edges,
            "interior_edges": int((~self.boundary).sum()),
            "boundary_edges": int(self.boundary.sum()),
            "h": self.h,
            "spacing": self.spacing,
        }


# ----------------------------------------------------------------- builders
def _check_axes(extents, cells, d):
    if len(extents) != d or len(cells) != d:
        raise ValueError(f"expected {d} extents and cell counts")
    for n in cells:
        if int(n) != n or n < 1:
            raise ValueError(f"cells per axis must be positive integers, got {cells}")
    for lo, hi in extents:
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
            raise ValueError(f"degenerate or inverted extent ({lo}, {hi})")


def _normalize(d, extents, cells):
    if d == 1 and len(extents) == 2 and np.isscalar(extents[0]):
        extents = (tuple(extents),)
    extents = tuple((float(lo), float(hi)) for lo, hi in extents)
    if np.isscalar(cells):
        cells = (int(cells),) * d
    cells = tuple(int(n) for n in cells)
    return extents, cells


def _grid_vertices(extents, cells):
    (x0, x1), (y0, y1) = extents
    nx, ny = cells
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # row j, column i; vertex id = j*(nx+1)+i
    return np.column_stack([X.ravel(), Y.ravel()])


def _edges_1d(nel):
    # vertex i is edge i; cells[k] = (k, k+1)
    ne = nel + 1
    elems = np.full((ne, 2), -1, dtype=np.int64)
    normals = np.ones((ne, 1))
    elems[1:-1, 0] = np.arange(nel - 1)
    elems[1:-1, 1] = np.arange(1, nel)
    elems[0, 0] = 0
    normals[0, 0] = -1.0
    elems[-1, 0] = nel - 1
    element_edges = np.column_stack([np.arange(nel), np.arange(1, nel + 1)])
    return elems, normals, element_edges


def _edges_2d(vertices, cells):
    nel, nf = cells.shape
    a = cells
    b = np.roll(cells, -1, axis=1)
    keys = np.sort(np.stack([a, b], axis=-1).reshape(-1, 2), axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    ne = uniq.shape[0]
    owner = np.repeat(np.arange(nel), nf)
    local = np.tile(np.arange(nf), nel)
    order = np.argsort(inv, kind="stable")
    counts = np.bincount(inv, minlength=ne)
    if counts.max() > 2:
        raise ValueError("non-manifold edge: more than two cells share an edge")
    start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    first = order[start]
    elems = np.full((ne, 2), -1, dtype=np.int64)
    elems[:, 0] = owner[first]
    two = counts == 2
    elems[two, 1] = owner[order[start[two] + 1]]
    # geometry in K's orientation
    fa = a.reshape(-1)[first]
    fb = b.reshape(-1)[first]
    pts = np.stack([vertices[fa], vertices[fb]], axis=1)
    t = pts[:, 1] - pts[:, 0]
    n = np.column_stack([t[:, 1], -t[:, 0]])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    element_edges = inv.reshape(nel, nf)
    del local
    return elems, n, pts, element_edges


def _assemble(dim, kind, vertices, cells, extents, divisions):
    vertices = np.asarray(vertices, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    if dim == 1:
        elems, normals, element_edges = _edges_1d(cells.shape[0])
        pts = vertices[np.arange(vertices.shape[0])][:, None, :]
    else:
        elems, normals, pts, element_edges = _edges_2d(vertices, cells)
    return Mesh(
        dim=dim,
        kind=kind,
        vertices=_frozen(vertices),
        cells=_frozen(cells),
        labels=_frozen(np.arange(cells.shape[0])),
        edge_elements=_frozen(elems),
        edge_normals=_frozen(normals),
        edge_points=_frozen(pts),
        element_edges=_frozen(element_edges),
        extents=tuple(extents),
        divisions=tuple(divisions),
    )


def build_cartesian(d: int, extents: Sequence, cells) -> Mesh:
    """Axis-aligned Cartesian mesh with lexicographic labels (x fastest).

    Parameters
    ----------
    d : int
        Dimension, 1 or 2.
    extents : sequence of (lo, hi)
        One pair per axis (a bare pair is accepted for ``d == 1``).
    cells : int or sequence of int
        Cells per axis.
    """
    if d not in (1, 2):
        raise ValueError(f"only d in (1, 2) is supported, got {d}")
    extents, cells = _normalize(d, extents, cells)
    _check_axes(extents, cells, d)
    if d == 1:
        ((x0, x1),), (n,) = extents, cells
        verts = np.linspace(x0, x1, n + 1)[:, None]
        conn = np.column_stack([np.arange(n), np.arange(1, n + 1)])
        return _assemble(1, "interval", verts, conn, extents, cells)
    nx, ny = cells
    verts = _grid_vertices(extents, cells)
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    v00 = j * (nx + 1) + i
    conn = np.column_stack([v00, v00 + 1, v00 + nx + 2, v00 + nx + 1])
    return _assemble(2, "box", verts, conn, extents, cells)


def build_triangulated(extents: Sequence, n) -> Mesh:
    """Cartesian grid with every cell cut along its rising diagonal.

    Cell ``(i, j)`` yields triangles ``2*(j*nx+i)`` (below the diagonal) and
    ``2*(j*nx+i)+1`` (above it).
    """
    extents, cells = _normalize(2, extents, n)
    _check_axes(extents, cells, 2)
    nx, ny = cells
    verts = _grid_vertices(extents, cells)
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    v00 = j * (nx + 1) + i
    v10, v11, v01 = v00 + 1, v00 + nx + 2, v00 + nx + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    conn = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return _assemble(2, "triangle", verts, conn, extents, cells)


def uniform_refine(mesh: Mesh) -> Mesh:
    """Halve the grid spacing along every axis (nested refinement)."""
    cells = tuple(2 * n for n in mesh.divisions)
    if mesh.kind == "triangle":
        return build_triangulated(mesh.extents, cells)
    return build_cartesian(mesh.dim, mesh.extents, cells)


# --------------------------------------------------------------- validation
def _face_vertices(mesh, k):
    c = mesh.cells[k]
    if mesh.dim == 1:
        return [(c[0],), (c[1],)]
    return [(c[f], c[(f + 1) % len(c)]) for f in range(len(c))]


def validate(mesh: Mesh) -> list:
    """Return a list of violated mesh invariants (empty when the mesh is valid)."""
    problems = []
    nel = mesh.num_elements
    labels = np.asarray(mesh.labels)
    if labels.shape != (nel,):
        problems.append("labels: wrong shape")
    else:
        if len(np.unique(labels)) != nel:
            problems.append("labels: duplicated element label")
        if nel > 1 and np.any(np.diff(labels) <= 0):
            problems.append("labels: not strictly increasing")
        if labels.min() != 0:
            problems.append("labels: not 0-based")
    if mesh.dim not in (1, 2):
        problems.append(f"dimension: unsupported d={mesh.dim}")

    elems = mesh.edge_elements
    # adjacency counts
    counts = np.zeros(mesh.num_edges, dtype=int)
    for k in range(nel):
        for e in mesh.element_edges[k]:
            counts[e] += 1
    interior = elems[:, 1] >= 0
    if np.any(counts[interior] != 2):
        problems.append("adjacency: interior edge not shared by exactly two elements")
    if np.any(counts[~interior] != 1):
        problems.append("adjacency: boundary edge not owned by exactly one element")
    if np.any(elems[interior, 0] >= elems[interior, 1]) or (
        len(labels) == nel
        and np.any(labels[elems[interior, 0]] >= labels[elems[interior, 1]])
    ):
        problems.append("labels: interior edge not ordered by label")

    norms = np.linalg.norm(mesh.edge_normals, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-14):
        problems.append("normals: not unit length")
    # orientation: outward from K
    if mesh.dim == 1:
        mid = mesh.edge_points[:, 0, :]
    else:
        mid = mesh.edge_points.mean(axis=1)
    cK = mesh.centroid[elems[:, 0]]
    if np.any(np.einsum("ij,ij->i", mesh.edge_normals, mid - cK) <= 0):
        problems.append("normals: orientation not outward from the smaller-label element")
    if mesh.kind in ("interval", "box"):
        n = np.abs(mesh.edge_normals)
        axis_aligned = np.isclose(n.max(axis=1), 1.0, atol=1e-14) & np.isclose(
            n.sum(axis=1), 1.0, atol=1e-14
        )
        if not axis_aligned.all():
            problems.append("normals: Cartesian edge normal not a coordinate direction")

    if abs(mesh.measure.sum() - mesh.domain_measure) > 1e-12 * max(1.0, mesh.domain_measure):
        problems.append("measure: element volumes do not sum to the domain measure")

    if mesh.dim == 2:
        v = mesh.vertices[mesh.cells]
        perim = np.linalg.norm(v - np.roll(v, -1, axis=1), axis=2).sum(axis=1)
        edge_sum = mesh.edge_measure[mesh.element_edges].sum(axis=1)
        if np.any(np.abs(perim - edge_sum) > 1e-12 * np.maximum(1.0, perim)):
            problems.append("tiling: element edges do not tile the element boundary")
        # geometric consistency of each face with its edge
        for k in range(nel):
            for f, verts in enumerate(_face_vertices(mesh, k)):
                e = mesh.element_edges[k, f]
                p = mesh.edge_points[e]
                ends = {tuple(np.round(x, 13)) for x in p}
                want = {tuple(np.round(mesh.vertices[i], 13)) for i in verts}
                if ends != want:
                    problems.append(f"tiling: face {f} of element {k} does not match edge {e}")
                    break
    return problems


def with_arrays(mesh: Mesh, **arrays) -> Mesh:
    """Copy of ``mesh`` with some arrays replaced (used to craft invalid meshes)."""
    return replace(mesh, _cache={}, **{k: _frozen(v) for k, v in arrays.items()})
