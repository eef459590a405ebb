"""Randomized identity suites for the discrete calculus.

Every identity is checked against the whole basis of the test space, so
"for all phi" is exact rather than sampled. Pairings with test functions
(volume integrals, edge integrals of jumps and averages, boundary terms) are
assembled here directly from quadrature tables, independently of the sparse
matrices used by :mod:`dgcalc.calculus`.

Violations are reported as ``max |lhs - rhs| / max(1, max |lhs|, max |rhs|)``
except for the finite difference stencils, which use absolute differences.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..calculus import (
    PenaltyConfig,
    discrete_partial,
    divergence,
    get_operators,
    laplacian,
    lifting,
    piecewise_partial,
)
from ..field import DGField, VectorField, get_space
from ..mesh import _assemble, build_cartesian, build_triangulated

SELECTORS = (
    "projection", "ibp", "product_rule", "fd_equivalence", "lifting", "approximation", "monotonicity",
)
IDENTITY_TOL = 1e-10
IBP_TOL = 1e-11
FD_TOL = 1e-12
SIDES = ("-", "+", "central")
_OPP = {"-": "+", "+": "-", "central": "central"}


@dataclass
class PropertyResult:
    """Outcome of one named invariant."""

    name: str
    group: str
    count: int
    max_violation: float
    tol: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_violation) and self.max_violation <= self.tol)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return (f"{tag} {self.group}/{self.name}: checks={self.count} "
                f"max_violation={self.max_violation:.3e} tol={self.tol:.0e}{extra}")


@dataclass
class PropertyReport:
    results: list = field(default_factory=list)
    seed: int = 0
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def lines(self) -> list:
        return [r.line() for r in self.results]

    def by_name(self, name: str) -> PropertyResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)


def _rel(lhs, rhs) -> float:
    lhs, rhs = np.asarray(lhs, dtype=float), np.asarray(rhs, dtype=float)
    scale = max(1.0, float(np.max(np.abs(lhs), initial=0.0)), float(np.max(np.abs(rhs), initial=0.0)))
    return float(np.max(np.abs(lhs - rhs), initial=0.0)) / scale


# ------------------------------------------------------------------ meshes
def property_meshes(rng: np.random.Generator) -> list:
    """A jittered interval mesh, an anisotropic box mesh and a jittered triangle mesh."""
    n1 = 7
    x = np.linspace(0.0, 1.0, n1 + 1)
    x[1:-1] += rng.uniform(-0.3, 0.3, n1 - 1) / n1
    conn = np.column_stack([np.arange(n1), np.arange(1, n1 + 1)])
    interval = _assemble(1, "interval", x[:, None], conn, ((0.0, 1.0),), (n1,))

    box = build_cartesian(2, [(0.0, 1.0), (0.0, 0.75)], (4, 3))

    tri = build_triangulated([(0.0, 1.0), (0.0, 1.0)], 3)
    v = np.array(tri.vertices)
    inner = (v[:, 0] > 1e-12) & (v[:, 0] < 1 - 1e-12) & (v[:, 1] > 1e-12) & (v[:, 1] < 1 - 1e-12)
    v[inner] += rng.uniform(-0.2, 0.2, (int(inner.sum()), 2)) / 3
    tri = _assemble(2, "triangle", v, np.array(tri.cells), tri.extents, tri.divisions)
    return [("interval-jitter", interval), ("box-4x3", box), ("triangle-jitter", tri)]


# --------------------------------------------------------------- pairings
class _Pairing:
    """Test-function functionals on V_r^h computed from quadrature tables."""

    def __init__(self, mesh, r: int, deg: int):
        self.mesh = mesh
        self.r = r
        self.deg = deg
        self.sp = sp = get_space(mesh, r, deg, deg)
        self.M = sp.Mref[None] * mesh.det[:, None, None]
        self.interior = ~sp.boundary
        self.bnd = sp.boundary

    def space(self, r_in: int):
        return get_space(self.mesh, r_in, self.deg, self.deg)

    def mass(self, c):
        """``(w, phi_j)`` for fields ``w`` of degree r; c has shape (F, nel, n)."""
        return np.einsum("kjm,fkm->fkj", self.M, c)

    def vol(self, vals):
        """``(f, phi_j)`` for values at volume points, (F, nel, nq)."""
        sp = self.sp
        return np.einsum("kq,qj,fkq->fkj", sp.wq, sp.V, vals)

    def edge(self, cK, cKp=None):
        """``sum_e <cK, phi_K> + <cKp, phi_K'>``; coefficients (F, ne, nqe)."""
        sp = self.sp
        F = cK.shape[0]
        out = np.zeros((F, sp.nel, sp.n))
        a = np.einsum("eq,eqj,feq->efj", sp.we, sp.TK, cK)
        np.add.at(out.transpose(1, 0, 2), sp.EK, a)
        if cKp is not None:
            ii = np.flatnonzero(self.interior)
            b = np.einsum("eq,eqj,feq->efj", sp.we[ii], sp.TKp[ii], cKp[:, ii])
            np.add.at(out.transpose(1, 0, 2), sp.EKp[ii], b)
        return out

    def traces(self, c, r_in=None):
        """``(v_K, v_K', [v], {v})`` at edge points; interior-only quantities are 0 on the boundary."""
        sp = self.space(self.r if r_in is None else r_in)
        vK = np.einsum("eqj,fej->feq", sp.TK, c[:, sp.EK])
        vKp = np.einsum("eqj,fej->feq", sp.TKp, c[:, sp.EKp])
        m = self.interior[None, :, None]
        return vK, vKp, np.where(m, vK - vKp, 0.0), np.where(m, 0.5 * (vK + vKp), 0.0)

    def avg_test(self, w):
        """Coefficients pairing ``w`` with ``{phi}`` on interior edges."""
        m = self.interior[None, :, None]
        return self.edge(np.where(m, 0.5 * w, 0.0), np.where(m, 0.5 * w, 0.0))

    def jump_test(self, w):
        """Coefficients pairing ``w`` with ``[phi]`` on interior edges."""
        m = self.interior[None, :, None]
        return self.edge(np.where(m, w, 0.0), np.where(m, -w, 0.0))

    def boundary_test(self, w):
        """Coefficients pairing ``w`` with ``phi`` on boundary edges."""
        return self.edge(np.where(self.bnd[None, :, None], w, 0.0))

    def normal(self, i):
        return self.sp.normals[:, i][None, :, None]


def _apply(mat, c):
    """Apply a sparse operator to a batch of coefficient arrays (F, nel, n_in)."""
    F = c.shape[0]
    out = (mat @ c.reshape(F, -1).T).T
    return out.reshape(F, c.shape[1], -1)


def _apply_T(mat, c):
    F = c.shape[0]
    out = (mat.T @ c.reshape(F, -1).T).T
    return out.reshape(F, c.shape[1], -1)


def _random(rng, nf, mesh, r):
    n = get_space(mesh, r).n
    return rng.standard_normal((nf, mesh.num_elements, n))


def _random_gamma(rng, mesh, kind):
    ne, d = mesh.num_edges, mesh.dim
    gm = rng.uniform(-2.0, 2.0, (ne, d))
    if kind == "antisymmetric":
        return PenaltyConfig(gm, -gm)
    if kind == "ones":
        return PenaltyConfig(np.ones((ne, d)), np.ones((ne, d)))
    return PenaltyConfig(gm, rng.uniform(-2.0, 2.0, (ne, d)))


# --------------------------------------------- continuous test functions
class _Continuous:
    """Random continuous function: a global polynomial plus a nodal interpolant.

    The interpolant is piecewise linear on intervals and triangles and
    piecewise bilinear on boxes.
    """

    def __init__(self, rng, mesh, poly_degree: int, nodal: bool):
        d = mesh.dim
        self.mesh = mesh
        exps = [e for e in np.ndindex(*(poly_degree + 1,) * d) if sum(e) <= poly_degree]
        self.exps = np.array(exps, dtype=int).reshape(-1, d)
        self.coef = rng.standard_normal(len(exps))
        self.center = rng.uniform(0.2, 0.8, d)
        self.nodal = None
        if nodal:
            vals = rng.standard_normal(mesh.vertices.shape[0])
            X = mesh.vertices[mesh.cells]  # (nel, nv, d)
            cols = [np.ones(X.shape[:2])] + [X[..., i] for i in range(d)]
            if mesh.kind == "box":
                cols.append(X[..., 0] * X[..., 1])
            A = np.stack(cols, axis=-1)
            self.nodal = np.linalg.solve(A, vals[mesh.cells][..., None])[..., 0]

    @property
    def degree(self) -> int:
        p = int(self.exps.sum(axis=1).max()) if len(self.exps) else 0
        if self.nodal is not None:
            p = max(p, 2 if self.mesh.kind == "box" else 1)
        return p

    def values(self, x):
        """Values and gradients at element points x of shape (nel, nq, d)."""
        d = x.shape[-1]
        y = x - self.center
        val = np.zeros(x.shape[:-1])
        grad = np.zeros(x.shape)
        for c, e in zip(self.coef, self.exps):
            val += c * np.prod(y ** e, axis=-1)
            for i in range(d):
                if e[i] == 0:
                    continue
                ed = e.copy()
                ed[i] -= 1
                grad[..., i] += c * e[i] * np.prod(y ** ed, axis=-1)
        if self.nodal is not None:
            a = self.nodal[:, None, :]
            val += a[..., 0] + sum(a[..., 1 + i] * x[..., i] for i in range(d))
            for i in range(d):
                grad[..., i] += a[..., 1 + i]
            if self.mesh.kind == "box":
                val += a[..., 3] * x[..., 0] * x[..., 1]
                grad[..., 0] += a[..., 3] * x[..., 1]
                grad[..., 1] += a[..., 3] * x[..., 0]
        return val, grad


def _continuous_batch(rng, mesh, r, nf, max_degree, pair: _Pairing, r_in: int):
    """Coefficients in V_{r_in} and exact gradient values at volume points."""
    sp_in = pair.space(r_in)
    coeffs, grads = [], []
    for _ in range(nf):
        nodal = (2 if mesh.kind == "box" else 1) <= max_degree and rng.random() < 0.7
        deg = int(rng.integers(0, max_degree + 1))
        f = _Continuous(rng, mesh, deg, nodal)
        v, g = f.values(sp_in.xq)
        coeffs.append(sp_in.project_values(v))
        grads.append(g)
    return np.array(coeffs), np.array(grads)


def _project(pair: _Pairing, vals):
    return np.array([pair.sp.project_values(v) for v in vals])


# ------------------------------------------------------------ invariants
def check_projection(mesh, r, rng, nf=50):
    """Continuous piecewise P_{r+1}: every sided partial is the L2 projection of the derivative."""
    pair = _Pairing(mesh, r, 2 * r + 4)
    r_in = r + 1
    c, g = _continuous_batch(rng, mesh, r, nf, r + 1, pair, r_in)
    ops = get_operators(mesh, r, r_in)
    worst = 0.0
    for i in range(mesh.dim):
        want = _project(pair, g[..., i])
        for s in SIDES:
            worst = max(worst, _rel(_apply(ops.D(s, i), c), want))
    return worst, nf


def check_distributional(mesh, r, rng, nf=50):
    """gamma = 0: (d_h v, phi) = (dv, phi)_T - <[v] n, {phi}>; sided form adds -s/2 <|n| [v], [phi]>."""
    pair = _Pairing(mesh, r, 2 * r + 2)
    c = _random(rng, nf, mesh, r)
    ops = get_operators(mesh, r, r)
    sp = pair.sp
    grads = np.einsum("kqji,fkj->fkqi", sp.grad, c)
    _, _, jump, _ = pair.traces(c)
    worst = 0.0
    for i in range(mesh.dim):
        n = pair.normal(i)
        base = pair.vol(grads[..., i]) - pair.avg_test(jump * n)
        for s, sg in (("central", 0.0), ("-", -1.0), ("+", 1.0)):
            rhs = base - 0.5 * sg * pair.jump_test(np.abs(n) * jump)
            worst = max(worst, _rel(pair.mass(_apply(ops.D(s, i), c)), rhs))
    return worst, nf


def check_sided_representation(mesh, r, rng, nf=50):
    """Random gamma: (d^s v, phi) = (dv, phi)_T + <[v], (gamma^s - s|n|/2)[phi] - {phi} n>."""
    pair = _Pairing(mesh, r, 2 * r + 2)
    pen = _random_gamma(rng, mesh, "general")
    c = _random(rng, nf, mesh, r)
    ops = get_operators(mesh, r, r, pen)
    grads = np.einsum("kqji,fkj->fkqi", pair.sp.grad, c)
    _, _, jump, _ = pair.traces(c)
    worst = 0.0
    for i in range(mesh.dim):
        n = pair.normal(i)
        for s, sg in (("-", -1.0), ("+", 1.0)):
            gam = pen.gamma(mesh, s, i)[None, :, None]
            rhs = (pair.vol(grads[..., i]) - pair.avg_test(jump * n)
                   + pair.jump_test((gam - 0.5 * sg * np.abs(n)) * jump))
            worst = max(worst, _rel(pair.mass(_apply(ops.D(s, i), c)), rhs))
    return worst, nf


def check_lifting(mesh, r, rng, nf=50):
    """(L_i v, phi) = <[v] n_i, {phi}> and, with gamma = 0, d_h v = piecewise derivative - L_i v."""
    pair = _Pairing(mesh, r, 2 * r + 2)
    c = _random(rng, nf, mesh, r)
    _, _, jump, _ = pair.traces(c)
    worst = 0.0
    for i in range(mesh.dim):
        n = pair.normal(i)
        for k in range(nf):
            v = DGField(mesh, r, c[k])
            L = lifting(v, i)
            worst = max(worst, _rel(pair.mass(L.coeffs[None])[0], pair.avg_test(jump[k:k + 1] * n)[0]))
            dh = discrete_partial(v, i, "central")
            worst = max(worst, _rel(dh.coeffs, (piecewise_partial(v, i) - L).coeffs))
    return worst, nf


def check_approximation(mesh, r, rng, nf=50, competitors=20):
    """||dv - d_h^* v|| <= ||dv - d psi|| for psi = P_{r+1} v and random psi, globally and per element.

    Returns the largest relative excess ``(lhs - rhs) / rhs`` (0 when every inequality holds).
    """
    deg = 2 * r + 6
    pair = _Pairing(mesh, r, deg)
    r_in = r + 2
    c, g = _continuous_batch(rng, mesh, r, nf, r + 2, pair, r_in)
    ops = get_operators(mesh, r, r_in)
    sp, sp1 = pair.sp, pair.space(r + 1)
    sp_in = pair.space(r_in)
    wq = sp.wq
    psi0 = np.array([sp1.project_values(sp_in.values(ck)) for ck in c])
    worst = 0.0
    for i in range(mesh.dim):
        for s in SIDES:
            dh = _apply(ops.D(s, i), c)
            err = np.einsum("kq,fkq->fk", wq, (g[..., i] - dh @ sp.V.T) ** 2)
            for j in range(competitors + 1):
                psi = psi0 if j == 0 else psi0 + rng.standard_normal(psi0.shape) * 10.0 ** rng.uniform(-3, 0)
                dpsi = np.einsum("kqj,fkj->fkq", sp1.grad[..., i], psi)
                ref = np.einsum("kq,fkq->fk", wq, (g[..., i] - dpsi) ** 2)
                for a, b in ((err.sum(1), ref.sum(1)), (err.ravel(), ref.ravel())):
                    a, b = np.sqrt(a), np.sqrt(b)
                    excess = (a - b) / np.maximum(b, 1e-300)
                    ok = b > 1e-12
                    worst = max(worst, float(np.max(np.where(ok, excess, a), initial=0.0)))
    return worst, nf * (competitors + 1)


def check_product_continuous(mesh, r, rng, nf=50):
    """Continuous u, w: d_h(uw) = P_r(u dw + w du); the chain rule with F(t) = t^2 as the case u = w."""
    pair = _Pairing(mesh, r, 3 * r + 8)
    wdeg = 2 if mesh.kind == "box" else 1
    r_in = r + 1 + wdeg
    sp_in = pair.space(r_in)
    ops = get_operators(mesh, r, r_in)
    worst = 0.0
    for k in range(nf):
        if k % 5 == 0:
            # chain rule for F(t) = t^2, with u^2 still inside V_{r_in}
            u = w = _Continuous(rng, mesh, r_in // 2, wdeg <= r_in // 2)
        else:
            u = _Continuous(rng, mesh, r + 1, False)
            w = _Continuous(rng, mesh, int(rng.integers(0, 2)), True)
        uv, ug = u.values(sp_in.xq)
        wv, wg = w.values(sp_in.xq)
        prod = sp_in.project_values(uv * wv)[None]
        for i in range(mesh.dim):
            want = pair.sp.project_values(uv * wg[..., i] + wv * ug[..., i])
            for s in SIDES:
                worst = max(worst, _rel(_apply(ops.D(s, i), prod)[0], want))
    return worst, nf


def check_product_general(mesh, r, rng, nf=50):
    """gamma = 0: (d_h(uw), phi) = (u dw + w du, phi)_T - <n ({u}[w] + {w}[u]), {phi}>."""
    pair = _Pairing(mesh, r, 2 * r + 6)
    sp1, sp2 = pair.space(1), pair.space(2)
    ops = get_operators(mesh, r, 2)
    cu = _random(rng, nf, mesh, 1)
    cw = _random(rng, nf, mesh, 1)
    uq = cu @ sp1.V.T
    wq = cw @ sp1.V.T
    gu = np.einsum("kqji,fkj->fkqi", sp1.grad, cu)
    gw = np.einsum("kqji,fkj->fkqi", sp1.grad, cw)
    prod = np.array([sp2.project_values(a * b) for a, b in zip(uq, wq)])
    _, _, ju, au = pair.traces(cu, 1)
    _, _, jw, aw = pair.traces(cw, 1)
    worst = 0.0
    for i in range(mesh.dim):
        n = pair.normal(i)
        rhs = pair.vol(uq * gw[..., i] + wq * gu[..., i]) - pair.avg_test(n * (au * jw + aw * ju))
        lhs = pair.mass(_apply(ops.D("central", i), prod))
        worst = max(worst, _rel(lhs, rhs))
    return worst, nf


def check_sided_collapse(mesh, r, rng, nf=50):
    """gamma^+ - gamma^- = |n_i| edgewise makes the two sided partials coincide."""
    gm = rng.uniform(-2.0, 2.0, (mesh.num_edges, mesh.dim))
    pen = PenaltyConfig(gm, gm + np.abs(mesh.edge_normals))
    c = _random(rng, nf, mesh, r)
    ops = get_operators(mesh, r, r, pen)
    worst = 0.0
    for i in range(mesh.dim):
        worst = max(worst, _rel(_apply(ops.D("-", i), c), _apply(ops.D("+", i), c)))
    return worst, nf


def _ibp_residual(mesh, r, pen, c, pair):
    """(d^s v, phi) + (v, d^{-s} phi) - <v phi n>_B for every basis phi, per side and axis."""
    ops = get_operators(mesh, r, r, pen)
    vK, _, _, _ = pair.traces(c)
    out = {}
    for i in range(mesh.dim):
        n = pair.normal(i)
        bnd = pair.boundary_test(vK * n)
        for s in ("-", "+"):
            lhs = pair.mass(_apply(ops.D(s, i), c))
            adj = _apply_T(ops.D(_OPP[s], i), pair.mass(c))
            out[(s, i)] = (lhs, -adj + bnd)
    return out


def check_ibp(mesh, r, rng, nf=50):
    """gamma^+ = -gamma^- (random edgewise): (d^s v, phi) = -(v, d^{-s} phi) + <v, phi n>_B."""
    pair = _Pairing(mesh, r, 2 * r + 2)
    c = _random(rng, nf, mesh, r)
    res = _ibp_residual(mesh, r, _random_gamma(rng, mesh, "antisymmetric"), c, pair)
    return max(_rel(a, b) for a, b in res.values()), nf


def check_general_ibp(mesh, r, rng, nf=50):
    """Arbitrary gamma (random, and gamma^+ = gamma^- = 1): the residual is <(gamma^+ + gamma^-)[phi], [v]>."""
    pair = _Pairing(mesh, r, 2 * r + 2)
    worst = 0.0
    for kind in ("general", "ones"):
        pen = _random_gamma(rng, mesh, kind)
        c = _random(rng, nf, mesh, r)
        _, _, jump, _ = pair.traces(c)
        res = _ibp_residual(mesh, r, pen, c, pair)
        for (s, i), (lhs, rhs) in res.items():
            gsum = (pen.gamma(mesh, "-", i) + pen.gamma(mesh, "+", i))[None, :, None]
            worst = max(worst, _rel(lhs, rhs + pair.jump_test(gsum * jump)))
    return worst, 2 * nf


def check_divergence(mesh, r, rng, nf=50):
    """Divergence theorem and adjointness of div^s with -grad_0^{-s} (and div_0^s with -grad^{-s})."""
    pair = _Pairing(mesh, r, 2 * r + 2)
    pen = _random_gamma(rng, mesh, "antisymmetric")
    ops = get_operators(mesh, r, r, pen)
    d = mesh.dim
    c = rng.standard_normal((nf, d, mesh.num_elements, pair.sp.n))
    zero = lambda x: np.zeros((x.shape[0], d))  # noqa: E731
    worst = 0.0
    for s in SIDES:
        t = _OPP[s]
        div = np.array([divergence(VectorField([DGField(mesh, r, c[k, i]) for i in range(d)]), s, pen).coeffs
                        for k in range(nf)])
        div0 = np.array([divergence(VectorField([DGField(mesh, r, c[k, i]) for i in range(d)]), s, pen, zero).coeffs
                         for k in range(nf)])
        lhs, lhs0 = pair.mass(div), pair.mass(div0)
        rhs = np.zeros_like(lhs)
        rhs0 = np.zeros_like(lhs)
        for i in range(d):
            Mv = pair.mass(c[:, i])
            vK = pair.traces(c[:, i])[0]
            rhs += -_apply_T(ops.D(t, i), Mv) + pair.boundary_test(vK * pair.normal(i))
            rhs0 += -_apply_T(ops.G(t, i), Mv)
        worst = max(worst, _rel(lhs, rhs), _rel(lhs, rhs0))
        # div_0^s is adjoint to -grad^{-s}
        adj = sum(-_apply_T(ops.D(t, i), pair.mass(c[:, i])) for i in range(d))
        worst = max(worst, _rel(lhs0, adj))
    return worst, nf


def check_green(mesh, r, rng, nf=50):
    """Discrete Green identities for the sided Laplacians, without and with boundary data."""
    pair = _Pairing(mesh, r, 2 * r + 2)
    pen = _random_gamma(rng, mesh, "antisymmetric")
    ops = get_operators(mesh, r, r, pen)
    d = mesh.dim
    c = _random(rng, nf, mesh, r)
    a = rng.uniform(-2, 2, d)
    b = rng.uniform(-1, 1)
    g = lambda x: np.sin(x @ a + b)  # noqa: E731
    pairs = [("-", "-"), ("-", "+"), ("+", "-"), ("+", "+"), ("central", "central")]
    worst = 0.0
    for s, t in pairs:
        lap = np.array([laplacian(DGField(mesh, r, ck), (s, t), pen).coeffs for ck in c])
        lapg = np.array([laplacian(DGField(mesh, r, ck), (s, t), pen, g).coeffs for ck in c])
        rhs = np.zeros_like(c)
        rhsg = np.zeros_like(c)
        for i in range(d):
            gi = _apply(ops.D(t, i), c)
            gig = np.array([discrete_partial(DGField(mesh, r, ck), i, t, pen, g).coeffs for ck in c])
            rhs += _apply_T(ops.D(_OPP[s], i), pair.mass(gi))
            rhs -= pair.boundary_test(pair.traces(gi)[0] * pair.normal(i))
            rhsg += _apply_T(ops.G(_OPP[s], i), pair.mass(gig))
        worst = max(worst, _rel(-pair.mass(lap), rhs), _rel(-pair.mass(lapg), rhsg))
    return worst, nf


def check_fd_equivalence(n=(8, 8), extents=((0.0, 1.0), (0.0, 1.5)), rng=None, nf=50):
    """r = 0 Cartesian stencils: forward, backward, central, 3-point, wide, 7-point and 4-point mixed.

    Returns the largest absolute difference over interior cells.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    nx, ny = n
    mesh = build_cartesian(2, list(extents), (nx, ny))
    h1 = (extents[0][1] - extents[0][0]) / nx
    h2 = (extents[1][1] - extents[1][0]) / ny
    ops = get_operators(mesh, 0, 0)
    D = {(s, i): ops.D(s, i) for s in SIDES for i in range(2)}
    sl = (slice(2, ny - 2), slice(2, nx - 2))  # [j, i] layout, labels j * nx + i

    def grid(vec):
        return np.asarray(vec).reshape(ny, nx)

    def sh(V, di, dj):
        return V[2 + dj:ny - 2 + dj, 2 + di:nx - 2 + di]

    worst = 0.0
    for _ in range(nf):
        v = rng.standard_normal(nx * ny)
        V = grid(v)

        def op(*chain):
            w = v
            for s, i in reversed(chain):
                w = D[(s, i)] @ w
            return grid(w)[sl]

        want = {
            (("+", 0),): (sh(V, 1, 0) - sh(V, 0, 0)) / h1,
            (("-", 0),): (sh(V, 0, 0) - sh(V, -1, 0)) / h1,
            (("+", 1),): (sh(V, 0, 1) - sh(V, 0, 0)) / h2,
            (("-", 1),): (sh(V, 0, 0) - sh(V, 0, -1)) / h2,
            (("central", 0),): (sh(V, 1, 0) - sh(V, -1, 0)) / (2 * h1),
            (("central", 1),): (sh(V, 0, 1) - sh(V, 0, -1)) / (2 * h2),
            (("+", 0), ("-", 0)): (sh(V, -1, 0) - 2 * sh(V, 0, 0) + sh(V, 1, 0)) / h1 ** 2,
            (("-", 0), ("+", 0)): (sh(V, -1, 0) - 2 * sh(V, 0, 0) + sh(V, 1, 0)) / h1 ** 2,
            (("+", 1), ("-", 1)): (sh(V, 0, -1) - 2 * sh(V, 0, 0) + sh(V, 0, 1)) / h2 ** 2,
            (("central", 0), ("central", 0)): (sh(V, -2, 0) - 2 * sh(V, 0, 0) + sh(V, 2, 0)) / (4 * h1 ** 2),
            (("central", 1), ("central", 1)): (sh(V, 0, -2) - 2 * sh(V, 0, 0) + sh(V, 0, 2)) / (4 * h2 ** 2),
            (("central", 0), ("central", 1)): (sh(V, 1, 1) - sh(V, 1, -1) - sh(V, -1, 1) + sh(V, -1, -1))
            / (4 * h1 * h2),
        }
        for chain, w in want.items():
            worst = max(worst, float(np.max(np.abs(op(*chain) - w))))
        seven = (sh(V, -1, 0) + sh(V, 0, -1) - sh(V, -1, 1) - 2 * sh(V, 0, 0) - sh(V, 1, -1)
                 + sh(V, 0, 1) + sh(V, 1, 0)) / (2 * h1 * h2)
        worst = max(worst, float(np.max(np.abs(0.5 * (op(("+", 0), ("-", 1)) + op(("-", 0), ("+", 1))) - seven))))
        four = sum(op((a, 0), (b, 1)) for a in "+-" for b in "+-") / 4
        worst = max(worst, float(np.max(np.abs(four - want[(("central", 0), ("central", 1))]))))
    return worst, nf


# ------------------------------------------------------- monotonicity
def monotonicity_results(rng) -> list:
    """Consistency and sampled monotonicity of the numerical Hamiltonian and operator."""
    from ..solvers.fully_nonlinear import gmonotonicity_violations, lf_hat_F, moment_bound
    from ..solvers.hamilton_jacobi import HamiltonianSpec, estimate_beta, lf_hamiltonian, lf_monotonicity_violations

    out = []
    hams = {
        "burgers": (lambda q: 0.5 * np.sum(q ** 2, axis=1), 1),
        "linear": (lambda q: q[:, 0], 1),
        "eikonal-2d": (lambda q: np.sqrt(1e-2 + np.sum(q ** 2, axis=1)), 2),
    }
    for name, (H, d) in hams.items():
        q = rng.uniform(-2, 2, (200, d))
        cons = float(np.max(np.abs(lf_hamiltonian(H, np.ones(d), q, q) - H(q))))
        out.append(PropertyResult(f"lf-consistency-{name}", "monotonicity", 200, cons, 1e-12))
        beta = estimate_beta(HamiltonianSpec(H), -2 * np.ones(d), 2 * np.ones(d), safety=1.05)
        cnt, _ = lf_monotonicity_violations(H, beta, -2 * np.ones(d), 2 * np.ones(d), pairs=200, rng=rng)
        out.append(PropertyResult(f"lf-monotone-{name}", "monotonicity", 200 * 2 * d, float(cnt), 0.0,
                                  "violation count"))

    ops = {
        "abs-quadratic-1d": (lambda P, x: -P[:, 0, 0] * np.abs(P[:, 0, 0]) + 1.0, 1),
        "poisson-2d": (lambda P, x: -(P[:, 0, 0] + P[:, 1, 1]) - np.sin(x[:, 0]), 2),
        "bellman-2d": (lambda P, x: -np.maximum(P[:, 0, 0] + 2 * P[:, 1, 1], 2 * P[:, 0, 0] + P[:, 1, 1]), 2),
    }
    for name, (F, d) in ops.items():
        x = rng.uniform(0, 1, (50, d))
        P = rng.uniform(-2, 2, (200, d, d))
        P = 0.5 * (P + np.swapaxes(P, 1, 2))
        xs = x[rng.integers(50, size=200)]
        cons = float(np.max(np.abs(lf_hat_F(F, 1.0, P, P, P, P, xs) - F(P, xs))))
        out.append(PropertyResult(f"fhat-consistency-{name}", "monotonicity", 200, cons, 0.0, "exact"))
        A = max(moment_bound(F, d, x, scale=2.0, rng=rng), 1e-3) * 1.05
        cnt, _ = gmonotonicity_violations(F, A, d, x, samples=200, scale=2.0, rng=rng)
        out.append(PropertyResult(f"g-monotone-{name}", "monotonicity", 200 * 4 * d, float(cnt), 0.0,
                                  f"A={A:.3g}, violation count"))
    return out


# ---------------------------------------------------------------- suite
_GROUPS = {
    "projection": [("projection", check_projection)],
    "lifting": [("distributional", check_distributional), ("sided-representation", check_sided_representation),
                ("lifting", check_lifting)],
    "approximation": [("approximation", check_approximation)],
    "product_rule": [("product-continuous", check_product_continuous), ("product-general", check_product_general)],
    "ibp": [("sided-collapse", check_sided_collapse), ("ibp", check_ibp), ("general-ibp", check_general_ibp),
            ("divergence", check_divergence), ("green", check_green)],
}
_TOLS = {"ibp": IBP_TOL, "general-ibp": IBP_TOL}


def property_suite(selector: str = "all", seed: int = 0, fields: int = 50, degrees=(0, 1, 2),
                   fd_cells=(8, 8)) -> PropertyReport:
    """Run the identity suites named by ``selector``.

    Parameters
    ----------
    selector : str
        One of ``SELECTORS`` or ``"all"``.
    seed : int
        Seeds every random draw (meshes, fields, penalties).
    fields : int
        Random fields per mesh and degree.
    """
    if selector != "all" and selector not in SELECTORS:
        raise ValueError(f"unknown selector {selector!r}; expected one of {SELECTORS + ('all',)}")
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    meshes = property_meshes(rng)
    groups = SELECTORS if selector == "all" else (selector,)
    results = []
    for grp in groups:
        if grp == "fd_equivalence":
            v, n = check_fd_equivalence(fd_cells, rng=rng, nf=fields)
            results.append(PropertyResult("fd-stencils", grp, n, v, FD_TOL, f"{fd_cells[0]}x{fd_cells[1]} r=0"))
            continue
        if grp == "monotonicity":
            results.extend(monotonicity_results(rng))
            continue
        for name, fn in _GROUPS[grp]:
            worst, count = 0.0, 0
            for _, mesh in meshes:
                for r in degrees:
                    v, n = fn(mesh, r, rng, fields)
                    worst, count = max(worst, v), count + n
            results.append(PropertyResult(name, grp, count, worst, _TOLS.get(name, IDENTITY_TOL),
                                          f"{len(meshes)} meshes, r in {tuple(degrees)}"))
    return PropertyReport(results=results, seed=seed, seconds=time.perf_counter() - t0)
