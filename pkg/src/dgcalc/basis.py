"""Reference-cell polynomial bases, quadrature rules and affine maps.

Reference cells are ``[0, 1]`` (interval), ``[0, 1]^2`` (box) and the unit
simplex with vertices ``(0,0), (1,0), (0,1)`` (triangle). The polynomial
space on every cell is the total-degree space P_r.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from scipy.special import roots_jacobi

REFERENCE_MEASURE = {"interval": 1.0, "box": 1.0, "triangle": 0.5}
MAX_DEGREE = {"interval": 20, "box": 20, "triangle": 12}
# monomials are kept up to this degree; above it the basis is orthonormalized
MONOMIAL_MAX_DEGREE = 2


def cell_dim(kind: str) -> int:
    if kind not in REFERENCE_MEASURE:
        raise ValueError(f"unsupported cell kind {kind!r}")
    return 1 if kind == "interval" else 2


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on a reference cell.

    Attributes
    ----------
    points : ndarray, shape (nq, d)
    weights : ndarray, shape (nq,)
    degree : int
        Polynomial exactness degree.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return self.weights.shape[0]


def _gauss01(m):
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (x + 1.0), 0.5 * w


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


@lru_cache(maxsize=None)
def volume_quadrature(d: int, kind: str, degree: int) -> QuadratureRule:
    """Gauss-type rule on the reference cell, exact for polynomials of ``degree``."""
    if cell_dim(kind) != d:
        raise ValueError(f"cell kind {kind!r} is not {d}-dimensional")
    degree = max(int(degree), 0)
    if degree > MAX_DEGREE[kind]:
        raise ValueError(f"quadrature degree {degree} exceeds cap {MAX_DEGREE[kind]} for {kind}")
    m = degree // 2 + 1
    x, w = _gauss01(m)
    if kind == "interval":
        pts, wts = x[:, None], w
    elif kind == "box":
        X, Y = np.meshgrid(x, x, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        wts = np.outer(w, w).ravel()
    else:
        # collapsed (Duffy) rule: Gauss-Jacobi in x2 absorbs the (1 - x2) factor
        s, ws = roots_jacobi(m, 1.0, 0.0)
        t, wt = 0.5 * (s + 1.0), ws / 4.0
        U, T = np.meshgrid(x, t, indexing="ij")
        pts = np.column_stack([(U * (1.0 - T)).ravel(), T.ravel()])
        wts = np.outer(w, wt).ravel()
    pts = np.ascontiguousarray(pts, dtype=float)
    wts = np.ascontiguousarray(wts, dtype=float)
    _freeze(pts, wts)
    return QuadratureRule(pts, wts, degree)


@lru_cache(maxsize=None)
def edge_quadrature(degree: int, d: int = 2) -> QuadratureRule:
    """Rule on the unit segment ``[0, 1]`` (a single unit-weight point when ``d == 1``)."""
    if d == 1:
        pts, wts = np.zeros((1, 1)), np.ones(1)
        _freeze(pts, wts)
        return QuadratureRule(pts, wts, 10 ** 6)
    degree = max(int(degree), 0)
    if degree > MAX_DEGREE["interval"]:
        raise ValueError(f"edge quadrature degree {degree} exceeds cap {MAX_DEGREE['interval']}")
    x, w = _gauss01(degree // 2 + 1)
    pts = np.ascontiguousarray(x[:, None])
    _freeze(pts, w)
    return QuadratureRule(pts, w, degree)


def monomial_exponents(d: int, r: int) -> np.ndarray:
    """Exponents of P_r ordered by total degree, shape (n_r, d)."""
    if d == 1:
        return np.arange(r + 1)[:, None]
    out = [(k - j, j) for k in range(r + 1) for j in range(k + 1)]
    return np.array(out, dtype=np.int64)


def _monomials(exps, x):
    # values (nq, n) and gradients (nq, n, d) of x^a
    x = np.asarray(x, dtype=float)
    nq, d = x.shape
    vals = np.ones((nq, exps.shape[0]))
    for i in range(d):
        vals *= x[:, i : i + 1] ** exps[:, i]
    grads = np.empty((nq, exps.shape[0], d))
    for i in range(d):
        g = np.ones((nq, exps.shape[0]))
        for k in range(d):
            if k == i:
                e = exps[:, k]
                g *= e * x[:, k : k + 1] ** np.maximum(e - 1, 0)
            else:
                g *= x[:, k : k + 1] ** exps[:, k]
        grads[:, :, i] = g
    return vals, grads


class ReferenceBasis:
    """Basis of P_r on a reference cell.

    Monomials are used for ``r <= 2``. For higher degrees the monomials are
    orthonormalized in the reference L2 inner product, which keeps the mass
    matrix well conditioned.

    Parameters
    ----------
    kind : {"interval", "box", "triangle"}
    r : int
        Polynomial degree, ``r >= 0``.
    """

    def __init__(self, kind: str, r: int):
        if r < 0:
            raise ValueError("degree must be nonnegative")
        self.kind = kind
        self.d = cell_dim(kind)
        self.r = int(r)
        self.exponents = monomial_exponents(self.d, self.r)
        self.size = comb(self.d + self.r, self.r)
        assert self.exponents.shape[0] == self.size
        if self.r <= MONOMIAL_MAX_DEGREE:
            self.coeffs = np.eye(self.size)
        else:
            q = volume_quadrature(self.d, kind, min(2 * self.r, MAX_DEGREE[kind]))
            v, _ = _monomials(self.exponents, q.points)
            gram = (v * q.weights[:, None]).T @ v
            L = np.linalg.cholesky(gram)
            # rows of coeffs express basis functions in monomials
            self.coeffs = np.linalg.inv(L)

    @property
    def orthonormal(self) -> bool:
        return self.r > MONOMIAL_MAX_DEGREE

    def eval(self, xhat) -> np.ndarray:
        """Basis values at reference points, shape (nq, n_r)."""
        v, _ = _monomials(self.exponents, np.atleast_2d(xhat))
        return v @ self.coeffs.T

    def grad(self, xhat) -> np.ndarray:
        """Reference gradients, shape (nq, n_r, d)."""
        _, g = _monomials(self.exponents, np.atleast_2d(xhat))
        return np.einsum("qmi,jm->qji", g, self.coeffs)

    def __repr__(self):
        return f"ReferenceBasis(kind={self.kind!r}, r={self.r})"


@lru_cache(maxsize=None)
def reference_basis(kind: str, r: int) -> ReferenceBasis:
    return ReferenceBasis(kind, r)


@lru_cache(maxsize=None)
def _mass(kind: str, r: int):
    b = reference_basis(kind, r)
    q = volume_quadrature(b.d, kind, min(2 * r, MAX_DEGREE[kind]))
    v = b.eval(q.points)
    m = (v * q.weights[:, None]).T @ v
    m = 0.5 * (m + m.T)
    minv = np.linalg.inv(m)
    minv = 0.5 * (minv + minv.T)
    _freeze(m, minv)
    return m, minv


def reference_mass_matrix(d: int, r: int, kind: str | None = None) -> np.ndarray:
    """Reference mass matrix of the basis on the reference cell.

    The physical mass matrix of an affine element is ``|det DF_K|`` times this
    matrix, that is ``d! |K|`` for simplices and ``|K|`` for boxes.
    """
    if kind is None:
        kind = "interval" if d == 1 else "box"
    if cell_dim(kind) != d:
        raise ValueError(f"cell kind {kind!r} is not {d}-dimensional")
    if r < 0:
        raise ValueError("degree must be nonnegative")
    return _mass(kind, int(r))[0]


def reference_mass_inverse(kind: str, r: int) -> np.ndarray:
    return _mass(kind, int(r))[1]


@dataclass(frozen=True)
class AffineMap:
    """Element maps ``F_K(xhat) = origin + J xhat`` for all elements of a mesh."""

    origin: np.ndarray
    jacobian: np.ndarray
    jacobian_inv: np.ndarray
    det: np.ndarray

    def __call__(self, xhat, elements=None):
        sl = slice(None) if elements is None else elements
        return self.origin[sl, None, :] + np.einsum(
            "kij,qj->kqi", self.jacobian[sl], np.atleast_2d(xhat)
        )


def affine_map(mesh) -> AffineMap:
    return AffineMap(mesh.origin, mesh.jacobian, mesh.jacobian_inv, mesh.det)
