"""Study configuration: TOML files mapped onto :class:`StudyConfig`.

A configuration looks like::

    name = "plaplace"
    seed = 0

    [problem]
    kind = "plaplace"
    exact = "sin(pi*x1)*sin(pi*x2)"
    p = 5

    [mesh]
    kind = "triangle"
    extents = [[0, 1], [0, 1]]
    base = 10
    refinements = 3

    [discretization]
    r = 1

    [penalty]
    eta1 = 20.0
    eta1_power = 4

Missing source terms and boundary data are derived from ``exact``.
"""
from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .expr import parse

PROBLEM_KINDS = (
    "poisson_ldg", "poisson_dwdg", "biharmonic_clamped", "nondivergence", "plaplace", "hj", "fnl",
)
MESH_KINDS = ("interval", "box", "triangle")


class ConfigError(ValueError):
    """Invalid study configuration."""


@dataclass
class StudyConfig:
    """Declarative convergence study.

    Attributes
    ----------
    kind : str
        One of ``PROBLEM_KINDS``.
    exact, f, g, q : str or None
        Expressions in ``x1, x2`` (and ``t`` for time dependent data).
    A : list of list of str or None
        Coefficient matrix for non-divergence problems.
    p : float
        p-Laplace exponent.
    mesh_kind, extents, base, refinements
        Mesh family: ``base`` cells per axis on the coarsest level and
        ``refinements`` uniform refinements (``refinements + 1`` levels).
    r : int
    eta1, eta1_power, eta2, eta2_power : float
        Penalties ``eta = C / h^power`` with ``h`` the grid spacing. ``None``
        selects the solver default.
    hj, fnl, solver : dict
        Extra parameters for Hamilton-Jacobi, fully nonlinear and Newton runs.
    csv, svg, samples_csv : str or None
        Output paths.
    seed : int
    timing : bool
        Record wall times in the CSV (off by default so reruns are byte-identical).
    """

    kind: str = "poisson_ldg"
    name: str = "study"
    exact: str | None = None
    f: str | None = None
    g: str | None = None
    q: str | None = None
    A: list | None = None
    p: float = 2.0
    mesh_kind: str = "box"
    extents: list = field(default_factory=lambda: [[0.0, 1.0], [0.0, 1.0]])
    base: int = 10
    refinements: int = 2
    r: int = 1
    eta1: float | None = None
    eta1_power: float | None = None
    eta2: float | None = None
    eta2_power: float | None = None
    hj: dict = field(default_factory=dict)
    fnl: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    csv: str | None = None
    svg: str | None = None
    samples_csv: str | None = None
    seed: int = 0
    timing: bool = False

    def __post_init__(self):
        self.validate()

    @property
    def dim(self) -> int:
        return len(self.extents)

    @property
    def levels(self) -> int:
        return self.refinements + 1

    def validate(self):
        if self.kind not in PROBLEM_KINDS:
            raise ConfigError(f"unknown problem kind {self.kind!r}; expected one of {PROBLEM_KINDS}")
        if self.mesh_kind not in MESH_KINDS:
            raise ConfigError(f"unknown mesh kind {self.mesh_kind!r}")
        if self.refinements < 1:
            raise ConfigError("a study needs at least one refinement")
        if self.base < 1:
            raise ConfigError("base resolution must be positive")
        if self.r < 0:
            raise ConfigError("polynomial degree must be nonnegative")
        if (self.mesh_kind == "interval") != (self.dim == 1):
            raise ConfigError("interval meshes need one extent, box and triangle meshes two")
        for ext in self.extents:
            if len(ext) != 2 or not ext[0] < ext[1]:
                raise ConfigError(f"bad extent {ext!r}")
        for name in ("exact", "f", "g", "q"):
            val = getattr(self, name)
            if val is not None:
                try:
                    parse(val)
                except ValueError as exc:
                    raise ConfigError(f"{name}: {exc}") from exc
        if self.A is not None:
            for row in self.A:
                for e in row:
                    parse(e)
        if self.exact is None and self.kind != "hj" and (self.f is None or self.g is None):
            raise ConfigError("give an exact solution or both f and g")
        return self

    def override(self, **kw) -> "StudyConfig":
        """Copy with fields replaced (``None`` values are ignored)."""
        new = copy.deepcopy(self)
        names = {f.name for f in fields(self)}
        for k, v in kw.items():
            if v is None:
                continue
            if k not in names:
                raise ConfigError(f"unknown configuration key {k!r}")
            setattr(new, k, v)
        return new.validate()


_SECTIONS = {
    "problem": {"kind", "exact", "f", "g", "q", "A", "p"},
    "mesh": {"kind", "extents", "base", "refinements"},
    "discretization": {"r"},
    "penalty": {"eta1", "eta1_power", "eta2", "eta2_power"},
    "output": {"csv", "svg", "samples_csv"},
}


def config_from_dict(data: dict) -> StudyConfig:
    """Build a :class:`StudyConfig` from parsed TOML."""
    data = copy.deepcopy(data)
    kw = {}
    for key in ("name", "seed", "timing"):
        if key in data:
            kw[key] = data.pop(key)
    for sec, keys in _SECTIONS.items():
        block = data.pop(sec, {})
        unknown = set(block) - keys
        if unknown:
            raise ConfigError(f"unknown keys in [{sec}]: {sorted(unknown)}")
        for k, v in block.items():
            kw["mesh_kind" if (sec == "mesh" and k == "kind") else k] = v
    for sec in ("hj", "fnl", "solver"):
        if sec in data:
            kw[sec] = data.pop(sec)
    if data:
        raise ConfigError(f"unknown top-level keys: {sorted(data)}")
    for k in ("exact", "f", "g", "q"):
        if k in kw and not isinstance(kw[k], str):
            kw[k] = repr(kw[k])
    if "A" in kw:
        kw["A"] = [[e if isinstance(e, str) else repr(e) for e in row] for row in kw["A"]]
    try:
        return StudyConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> StudyConfig:
    """Read a TOML study configuration."""
    with open(Path(path), "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def builtin_config_path(name: str) -> Path:
    """Path of a configuration shipped with the package (``configs/<name>.toml``)."""
    p = Path(__file__).resolve().parent.parent / "configs" / f"{name}.toml"
    if not p.exists():
        raise ConfigError(f"no built-in configuration named {name!r}")
    return p
