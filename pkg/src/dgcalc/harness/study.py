"""Convergence studies: solve on a mesh hierarchy, measure errors and observed orders."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from ..field import broken_h1_error, l2_error
from ..mesh import build_cartesian, build_triangulated
from ..solvers.elliptic import (
    solve_biharmonic_clamped,
    solve_nondivergence,
    solve_poisson_dwdg,
    solve_poisson_ldg,
)
from ..solvers.newton import NewtonOptions
from .config import StudyConfig
from .expr import Expression, parse, vector_callable

log = logging.getLogger(__name__)

# default penalty powers: eta = C / h^power
_ETA1_POWER = {"poisson_ldg": 1, "poisson_dwdg": 1, "nondivergence": 1, "biharmonic_clamped": 3}


class StudyError(RuntimeError):
    """A solver failed on one level of a study; the original error is chained."""

    def __init__(self, level: int, error: Exception):
        super().__init__(f"level {level}: {type(error).__name__}: {error}")
        self.level = level
        self.error = error


@dataclass
class StudyRow:
    level: int
    h: float
    dof: int
    l2_error: float
    l2_order: float | None
    h1_error: float
    h1_order: float | None
    seconds: float | None = None
    iterations: int | None = None


@dataclass
class StudyReport:
    """Per-level results of a convergence study."""

    rows: list = field(default_factory=list)
    name: str = "study"
    timing: bool = False
    finest: object = field(default=None, repr=False, compare=False)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    def __len__(self):
        return len(self.rows)


def observed_orders(errors, hs) -> list:
    """``log(e_{k-1} / e_k) / log(h_{k-1} / h_k)``; undefined (None) on the first level."""
    out = [None]
    for k in range(1, len(errors)):
        e0, e1 = errors[k - 1], errors[k]
        if e0 > 0 and e1 > 0 and hs[k - 1] != hs[k]:
            out.append(math.log(e0 / e1) / math.log(hs[k - 1] / hs[k]))
        else:
            out.append(None)
    return out


def build_level_mesh(cfg: StudyConfig, level: int):
    n = cfg.base * 2 ** level
    ext = [tuple(float(v) for v in e) for e in cfg.extents]
    if cfg.mesh_kind == "interval":
        return build_cartesian(1, ext, (n,))
    if cfg.mesh_kind == "box":
        return build_cartesian(2, ext, (n, n))
    return build_triangulated(ext, n)


# ------------------------------------------------------ derived data
def _syms(u: Expression, d: int):
    return [u.symbols[u.variables[i]] for i in range(d)]


def derived_source(cfg: StudyConfig, u: Expression) -> Expression:
    """Manufactured right-hand side for the configured operator."""
    d = cfg.dim
    X = _syms(u, d)
    U = u.sym
    if cfg.kind in ("poisson_ldg", "poisson_dwdg"):
        expr = -sum(sp.diff(U, x, 2) for x in X)
    elif cfg.kind == "biharmonic_clamped":
        lap = sum(sp.diff(U, x, 2) for x in X)
        expr = sum(sp.diff(lap, x, 2) for x in X)
    elif cfg.kind == "nondivergence":
        A = [[parse(e).sym for e in row] for row in cfg.A]
        expr = -sum(A[i][j] * sp.diff(U, X[i], X[j]) for i in range(d) for j in range(d))
    elif cfg.kind == "plaplace":
        p = sp.nsimplify(cfg.p)
        grad = [sp.diff(U, x) for x in X]
        nrm2 = sum(gi ** 2 for gi in grad)
        expr = -sum(sp.diff(nrm2 ** ((p - 2) / 2) * grad[i], X[i]) for i in range(d))
    else:
        raise ValueError(f"no manufactured source for {cfg.kind!r}")
    return Expression.from_sympy(expr, u.variables)


def _normal_derivative(u: Expression, cfg: StudyConfig):
    """``grad u . n`` on the boundary of the box domain (nearest face decides ``n``)."""
    grads = u.gradient(cfg.dim)
    ext = np.asarray(cfg.extents, dtype=float)

    def q(x):
        x = np.asarray(x, dtype=float)
        gv = np.stack([g(x) for g in grads], axis=-1)
        dist = np.concatenate([x - ext[:, 0], ext[:, 1] - x], axis=-1)
        k = np.argmin(np.abs(dist), axis=-1)
        d = x.shape[-1]
        axis = k % d
        sign = np.where(k < d, -1.0, 1.0)
        return sign * np.take_along_axis(gv, axis[..., None], axis=-1)[..., 0]

    return q


def _matrix_callable(rows):
    exprs = [[parse(e) for e in row] for row in rows]

    def A(x):
        return np.stack([np.stack([e(x) for e in row], axis=-1) for row in exprs], axis=-2)

    return A


def _eta(cfg: StudyConfig, h: float, which: int):
    C = cfg.eta1 if which == 1 else cfg.eta2
    if C is None:
        return None
    power = cfg.eta1_power if which == 1 else cfg.eta2_power
    if power is None:
        if which == 2:
            power = 1
        elif cfg.kind == "plaplace":
            power = cfg.p - 1
        else:
            power = _ETA1_POWER.get(cfg.kind, 1)
    return C / h ** power


def _newton_options(cfg: StudyConfig, **defaults) -> NewtonOptions:
    kw = dict(defaults)
    kw.update(cfg.solver)
    return NewtonOptions(**kw)


# ---------------------------------------------------------- solving
def solve_level(cfg: StudyConfig, mesh, data: dict):
    """Solve the configured problem on one mesh; returns ``(u, iterations)``."""
    h = mesh.spacing
    r = cfg.r
    f, g = data.get("f"), data.get("g")
    if cfg.kind == "poisson_ldg":
        return solve_poisson_ldg(mesh, r, f, g, _eta(cfg, h, 1)), None
    if cfg.kind == "poisson_dwdg":
        return solve_poisson_dwdg(mesh, r, f, g, _eta(cfg, h, 1)), None
    if cfg.kind == "biharmonic_clamped":
        return solve_biharmonic_clamped(mesh, r, f, g, data["q"], _eta(cfg, h, 1), _eta(cfg, h, 2)), None
    if cfg.kind == "nondivergence":
        return solve_nondivergence(mesh, r, data["A"], f, g, _eta(cfg, h, 1)), None
    if cfg.kind == "plaplace":
        from ..solvers.plaplace import solve_plaplace

        u, hist = solve_plaplace(
            mesh, r, cfg.p, f, g, _eta(cfg, h, 1), options=_newton_options(cfg, atol=1e-14, max_iter=80),
            return_history=True,
        )
        return u, len(hist) - 1
    if cfg.kind == "hj":
        from ..solvers.hamilton_jacobi import hj_evolve

        hj = data["hj"]
        traj = hj_evolve(
            mesh, r, hj["spec"], hj["u0"], hj["g"], dt=hj["dt_factor"] * h if hj["dt_factor"] else None,
            T=hj["T"], scheme=hj["scheme"], cfl=hj["cfl"],
        )
        return traj.final, traj.steps
    if cfg.kind == "fnl":
        from ..solvers.fully_nonlinear import solve_fnl_newton, solve_fnl_split

        spec, method = data["fnl"]["spec"], data["fnl"]["method"]
        if method == "split":
            u, hist = solve_fnl_split(mesh, r, spec, return_history=True)
        else:
            u, hist = solve_fnl_newton(mesh, r, spec, return_history=True)
            return u, len(hist) - 1
        return u, len(hist)
    raise ValueError(f"unknown problem kind {cfg.kind!r}")


def hamiltonian_from_text(text: str, d: int):
    e = parse(text, ("q1", "q2"))

    def H(q):
        q = np.asarray(q, dtype=float)
        cols = [q[:, i] for i in range(q.shape[1])] + [np.zeros(q.shape[0])] * (2 - q.shape[1])
        return e.evaluate(*cols)

    return H


def operator_from_text(text: str, d: int):
    """``F(P, x)`` from an expression in ``x1, x2, p11, p12, p21, p22``."""
    names = ("x1", "x2", "p11", "p12", "p21", "p22")
    e = parse(text, names)

    def F(P, x):
        P = np.asarray(P, dtype=float)
        x = np.asarray(x, dtype=float)
        m = P.shape[0]
        z = np.zeros(m)
        xs = [x[:, 0], x[:, 1] if d > 1 else z]
        ps = [P[:, 0, 0], P[:, 0, 1] if d > 1 else z, P[:, 1, 0] if d > 1 else z, P[:, 1, 1] if d > 1 else z]
        return e.evaluate(*xs, *ps)

    return F


def prepare_data(cfg: StudyConfig) -> dict:
    """Callables for the data of the configured problem (derived from ``exact`` when omitted)."""
    d = cfg.dim
    data = {}
    u = parse(cfg.exact) if cfg.exact is not None else None
    data["exact"] = u
    if cfg.kind == "hj":
        from ..solvers.hamilton_jacobi import HamiltonianSpec

        hj = cfg.hj
        T = float(hj.get("T", 0.1))
        spec = HamiltonianSpec(
            H=hamiltonian_from_text(hj.get("H", "q1"), d),
            flavor=hj.get("flux", "lax_friedrichs"),
            beta=hj.get("beta"),
        )
        u0 = parse(hj["u0"]) if "u0" in hj else u.at_time(0.0)
        gtxt = hj.get("g", cfg.g if cfg.g is not None else cfg.exact)
        g = None if gtxt is None else parse(gtxt)
        data["hj"] = {
            "spec": spec, "u0": u0, "g": g, "T": T, "scheme": hj.get("scheme", "tvd_rk3"),
            "cfl": float(hj.get("cfl", 0.5)), "dt_factor": hj.get("dt_factor"),
        }
        if u is not None:
            data["exact"] = u.at_time(T)
        return data
    data["f"] = parse(cfg.f) if cfg.f is not None else (
        None if cfg.kind == "fnl" else derived_source(cfg, u)
    )
    data["g"] = parse(cfg.g) if cfg.g is not None else u
    if cfg.kind == "biharmonic_clamped":
        data["q"] = parse(cfg.q) if cfg.q is not None else _normal_derivative(u, cfg)
    if cfg.kind == "nondivergence":
        if cfg.A is None:
            raise ValueError("non-divergence problems need a coefficient matrix A")
        data["A"] = _matrix_callable(cfg.A)
    if cfg.kind == "fnl":
        from ..solvers.fully_nonlinear import FullyNonlinearSpec, SplitOptions

        fn = cfg.fnl
        A = fn.get("A", 2.0)
        spec = FullyNonlinearSpec(
            F=operator_from_text(fn["F"], d), A=A, g=data["g"],
            newton=_newton_options(cfg, jacobian="user_supplied"),
            split=SplitOptions(A=float(fn.get("split_A", A if np.ndim(A) == 0 else 2.0))),
        )
        data["fnl"] = {"spec": spec, "method": fn.get("method", "newton")}
    return data


def run_study(cfg: StudyConfig, progress=None) -> StudyReport:
    """Run every refinement level of ``cfg`` and collect errors and orders.

    Raises
    ------
    StudyError
        Wrapping the solver error, with the failing level attached.
    """
    data = prepare_data(cfg)
    u = data["exact"]
    grad = vector_callable(u.gradient(cfg.dim)) if u is not None else None
    rows = []
    finest = None
    for level in range(cfg.levels):
        mesh = build_level_mesh(cfg, level)
        t0 = time.perf_counter()
        try:
            uh, iters = solve_level(cfg, mesh, data)
        except Exception as exc:
            raise StudyError(level, exc) from exc
        secs = time.perf_counter() - t0
        l2 = l2_error(uh, u) if u is not None else float("nan")
        h1 = broken_h1_error(uh, grad) if u is not None else float("nan")
        rows.append(StudyRow(level, float(mesh.spacing), int(uh.vector.size), l2, None, h1, None, secs, iters))
        finest = uh
        if progress is not None:
            progress(rows[-1])
        log.info("level %d h=%.4g dof=%d l2=%.3e h1=%.3e (%.2fs)", level, mesh.spacing, uh.vector.size, l2, h1, secs)
    hs = [r.h for r in rows]
    for r, o1, o2 in zip(rows, observed_orders([r.l2_error for r in rows], hs),
                         observed_orders([r.h1_error for r in rows], hs)):
        r.l2_order, r.h1_order = o1, o2
    return StudyReport(rows=rows, name=cfg.name, timing=cfg.timing, finest=finest)
