"""TOML run configuration with line-numbered validation errors."""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import elasticity as el
from .errors import ConfigError, PerfHomogError
from .geometry import CellGeometry, DomainSpec, HoleSpec

_LINE_RE = re.compile(r"^\s*(\[\[?\s*([A-Za-z0-9_.\-]+)\s*\]\]?|([A-Za-z0-9_\-]+)\s*=)")
_TOML_LINE = re.compile(r"line (\d+)")


def _key_lines(text: str) -> dict:
    """Map dotted keys (and section names) to their 1-based line numbers."""
    lines = {}
    section = ""
    for n, line in enumerate(text.splitlines(), start=1):
        m = _LINE_RE.match(line)
        if not m:
            continue
        if m.group(2):
            section = m.group(2)
            lines.setdefault(section, n)
        else:
            key = f"{section}.{m.group(3)}" if section else m.group(3)
            lines.setdefault(key, n)
    return lines


@dataclass(frozen=True)
class ProbeConfig:
    epsilons: tuple = (1 / 16, 1 / 32)
    R: float = 1.0
    x0: tuple = (0.0, 0.0)
    h_over_eps: float = 1 / 8
    theta: float = 0.25
    centers: tuple = ((0.0, 0.0),)
    cacc_radius: float | None = None
    drift_threshold: float = 0.10


@dataclass(frozen=True)
class RunConfig:
    path: str
    cell: CellGeometry
    cell_h: float
    lam: float
    mu: float
    tol: float = 1e-10
    cell_tol: float = 1e-12
    domain: DomainSpec = field(default_factory=DomainSpec.unit_square)
    mesh_h: float | None = None
    epsilons: tuple = (1 / 4, 1 / 8, 1 / 16, 1 / 32)
    h_over_eps: float = 1 / 16
    grid_ratio: int = 8
    slope_threshold: float = 0.4
    M: np.ndarray = field(default_factory=lambda: np.array([[1.0, 0.3], [0.3, -0.5]]))
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    seed: int = 0
    has_sweep: bool = False
    has_probe: bool = False

    @property
    def tensor(self) -> np.ndarray:
        return el.make_isotropic(self.lam, self.mu)


class _Reader:
    def __init__(self, data, lines, path):
        self.data, self.lines, self.path = data, lines, path

    def fail(self, key, msg):
        line = self.lines.get(key)
        if line is None and "." in key:
            line = self.lines.get(key.rsplit(".", 1)[0])
        raise ConfigError(msg, line=line if line is not None else 1, path=self.path)

    def section(self, name, required=False):
        sec = self.data.get(name)
        if sec is None:
            if required:
                self.fail(name, f"missing required section [{name}]")
            return None
        if not isinstance(sec, dict):
            self.fail(name, f"[{name}] must be a table")
        return sec

    def number(self, sec, name, key, default=None, positive=False, integer=False):
        if key not in sec:
            if default is None:
                self.fail(name, f"missing key {name}.{key}")
            return default
        v = sec[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.fail(f"{name}.{key}", f"{name}.{key} must be a finite number")
        if integer and int(v) != v:
            self.fail(f"{name}.{key}", f"{name}.{key} must be an integer")
        if positive and not v > 0:
            self.fail(f"{name}.{key}", f"{name}.{key} must be positive")
        return int(v) if integer else float(v)

    def vector(self, sec, name, key, default=None, length=2):
        if key not in sec:
            if default is None:
                self.fail(name, f"missing key {name}.{key}")
            return default
        try:
            v = np.asarray(sec[key], dtype=float)
        except (TypeError, ValueError):
            self.fail(f"{name}.{key}", f"{name}.{key} must be numeric")
        if length is not None and v.shape != (length,):
            self.fail(f"{name}.{key}", f"{name}.{key} must have {length} entries")
        return v

    def number_list(self, sec, name, key, default):
        if key not in sec:
            return default
        v = sec[key]
        if not isinstance(v, list) or not v:
            self.fail(f"{name}.{key}", f"{name}.{key} must be a nonempty list")
        try:
            return tuple(float(x) for x in v)
        except (TypeError, ValueError):
            self.fail(f"{name}.{key}", f"{name}.{key} must contain numbers")


def _lattice_aligned(eps):
    n = 1.0 / eps
    return abs(n - round(n)) <= 1e-9 * n


def parse_config(text: str, path: str = "<config>") -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = _TOML_LINE.search(str(exc))
        raise ConfigError(f"invalid TOML: {exc}", line=int(m.group(1)) if m else None, path=path) from exc
    rd = _Reader(data, _key_lines(text), path)

    cell_sec = rd.section("cell", required=True)
    holes = []
    raw = cell_sec.get("holes", [])
    if not isinstance(raw, list):
        rd.fail("cell.holes", "cell.holes must be a list of {center, radius} tables")
    for k, hole in enumerate(raw):
        if not isinstance(hole, dict):
            rd.fail("cell.holes", f"cell.holes[{k}] must be a table")
        c = rd.vector(hole, "cell.holes", "center", default=np.zeros(2))
        r = rd.number(hole, "cell.holes", "radius", positive=True)
        holes.append(HoleSpec(tuple(c), r))
    try:
        cell = CellGeometry(tuple(holes))
    except PerfHomogError as exc:
        rd.fail("cell.holes", str(exc))
    cell_h = rd.number(cell_sec, "cell", "h", default=0.05, positive=True)

    mat = rd.section("material") or {}
    lam = rd.number(mat, "material", "lambda", default=1.0)
    mu = rd.number(mat, "material", "mu", default=1.0)
    if not mu > 0 or lam < 0:
        rd.fail("material", "material needs mu > 0 and lambda >= 0")

    solver = rd.section("solver") or {}
    tol = rd.number(solver, "solver", "tol", default=1e-10, positive=True)
    cell_tol = rd.number(solver, "solver", "cell_tol", default=1e-12, positive=True)

    dom = rd.section("domain") or {}
    shape = dom.get("shape", "square")
    if shape == "square":
        domain = DomainSpec.unit_square()
    elif shape == "ball":
        domain = DomainSpec.ball(tuple(rd.vector(dom, "domain", "center", default=np.zeros(2))),
                                 rd.number(dom, "domain", "radius", default=1.0, positive=True))
    else:
        rd.fail("domain.shape", f"domain.shape must be 'square' or 'ball', got {shape!r}")
    mesh_sec = rd.section("mesh") or {}
    mesh_h = rd.number(mesh_sec, "mesh", "h", default=0.0) or None

    sweep = rd.section("sweep")
    kw = {}
    if sweep is not None:
        eps = rd.number_list(sweep, "sweep", "epsilons", (1 / 4, 1 / 8, 1 / 16, 1 / 32))
        if any(e <= 0 for e in eps):
            rd.fail("sweep.epsilons", "sweep.epsilons must be positive")
        if shape == "square" and not all(_lattice_aligned(e) for e in eps):
            rd.fail("sweep.epsilons", "sweep.epsilons must be reciprocals of integers")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            rd.fail("sweep.epsilons", "sweep.epsilons must be strictly decreasing")
        kw.update(
            epsilons=eps,
            h_over_eps=rd.number(sweep, "sweep", "h_over_eps", default=1 / 16, positive=True),
            grid_ratio=rd.number(sweep, "sweep", "grid_ratio", default=8, integer=True),
            slope_threshold=rd.number(sweep, "sweep", "slope_threshold", default=0.4),
            has_sweep=True,
        )
        if kw["grid_ratio"] < 8:
            rd.fail("sweep.grid_ratio", "sweep.grid_ratio must be at least 8")

    data_sec = rd.section("data") or {}
    if "M" in data_sec:
        try:
            M = np.asarray(data_sec["M"], dtype=float)
        except (TypeError, ValueError):
            rd.fail("data.M", "data.M must be a 2x2 numeric matrix")
        if M.shape != (2, 2):
            rd.fail("data.M", "data.M must be a 2x2 matrix")
        kw["M"] = M

    probe_sec = rd.section("probe")
    if probe_sec is not None:
        eps = rd.number_list(probe_sec, "probe", "epsilons", (1 / 16, 1 / 32))
        R = rd.number(probe_sec, "probe", "R", default=1.0, positive=True)
        if any(e > R / 3 for e in eps):
            rd.fail("probe.epsilons", f"probe.epsilons must not exceed R/3 = {R / 3:g}")
        theta = rd.number(probe_sec, "probe", "theta", default=0.25)
        if not 0 < theta <= 0.25:
            rd.fail("probe.theta", "probe.theta must lie in (0, 1/4]")
        x0 = tuple(rd.vector(probe_sec, "probe", "x0", default=np.zeros(2)))
        centers = probe_sec.get("centers", [list(x0)])
        try:
            centers = tuple(tuple(float(v) for v in c) for c in centers)
            assert all(len(c) == 2 for c in centers)
        except (TypeError, ValueError, AssertionError):
            rd.fail("probe.centers", "probe.centers must be a list of [x, y] points")
        cr = rd.number(probe_sec, "probe", "cacc_radius", default=0.0) or None
        kw["probe"] = ProbeConfig(
            epsilons=eps, R=R, x0=x0,
            h_over_eps=rd.number(probe_sec, "probe", "h_over_eps", default=1 / 8, positive=True),
            theta=theta, centers=centers, cacc_radius=cr,
            drift_threshold=rd.number(probe_sec, "probe", "drift_threshold", default=0.10, positive=True),
        )
        kw["has_probe"] = True

    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        rd.fail("seed", "seed must be an integer")
    return RunConfig(path=path, cell=cell, cell_h=cell_h, lam=lam, mu=mu, tol=tol, cell_tol=cell_tol,
                     domain=domain, mesh_h=mesh_h, seed=seed, **kw)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path=str(p)) from exc
    return parse_config(text, str(p))
