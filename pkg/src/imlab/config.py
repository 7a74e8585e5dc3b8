"""Experiment configuration: TOML files mapped onto dataclasses.

Every field has an explicit default here, and the resolved config (defaults
filled in) is what gets written to the manifest.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import tomli

from .functionals import default_pairs
from .solver import RANDOM_SMOOTH_MAX_CENTER, RANDOM_SMOOTH_MAX_WIDTH, SCHEMES, bump_radius

KINDS = ("simulate", "conserve-sweep", "morawetz-audit", "partition", "growth", "inequalities")
PROFILES = ("bump", "rough", "smooth-random")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridSection:
    M: int = 1024
    R: float = 40.0


@dataclass(frozen=True)
class SolverSection:
    dt: float = 0.01
    scheme: str = "strang"
    pad: int = 2
    snapshot_stride: int = 10
    health_threshold: float = 1e-6
    blowup_bound: float = 1e8


@dataclass(frozen=True)
class PhysicsSection:
    s: float = 0.75
    N: Optional[float] = None
    N_list: Tuple[float, ...] = ()
    T: float = 1.0
    T_list: Tuple[float, ...] = ()
    nonlinear: bool = True


@dataclass(frozen=True)
class DataSection:
    profile: str = "bump"
    seed: int = 0
    amplitude: float = 1.0
    width: float = 1.0
    center: float = 0.0
    velocity_amplitude: float = 0.0
    slope_margin: float = 0.05
    low_cut: float = 1.0
    high_cut: Optional[float] = None
    support: Optional[float] = 4.0


@dataclass(frozen=True)
class PartitionSection:
    C1: Optional[float] = None           # None: take the value from the constants file
    C2: Optional[float] = None
    root_tolerance: Optional[float] = None   # None: the time step


@dataclass(frozen=True)
class AuditSection:
    runs: int = 10
    fields: int = 100
    p_list: Tuple[float, ...] = (1.5, 2.0, 2.5)
    compute_z: bool = False


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    formats: Tuple[str, ...] = ("csv", "json")
    checkpoints: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    run_id: str = "run"
    grid: GridSection = field(default_factory=GridSection)
    solver: SolverSection = field(default_factory=SolverSection)
    physics: PhysicsSection = field(default_factory=PhysicsSection)
    data: DataSection = field(default_factory=DataSection)
    partition: PartitionSection = field(default_factory=PartitionSection)
    audit: AuditSection = field(default_factory=AuditSection)
    output: OutputSection = field(default_factory=OutputSection)

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def with_overrides(self, out: Optional[str] = None, seed: Optional[int] = None) -> "ExperimentConfig":
        cfg = self
        if out is not None:
            cfg = replace(cfg, output=replace(cfg.output, directory=str(out)))
        if seed is not None:
            cfg = replace(cfg, data=replace(cfg.data, seed=int(seed)))
        return cfg

    @property
    def horizon(self) -> float:
        return max(self.physics.T_list) if self.physics.T_list else self.physics.T


_SECTIONS = {
    "grid": GridSection,
    "solver": SolverSection,
    "physics": PhysicsSection,
    "data": DataSection,
    "partition": PartitionSection,
    "audit": AuditSection,
    "output": OutputSection,
}


def _build(cls, raw: Dict[str, Any], where: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"[{where}] unknown keys: {sorted(unknown)}")
    vals = {}
    for k, v in raw.items():
        default = known[k].default
        if isinstance(v, list):
            v = tuple(v)
        if isinstance(default, bool) or isinstance(v, bool):
            if not isinstance(v, bool) or not isinstance(default, bool):
                raise ConfigError(f"[{where}] {k} = {v!r} has the wrong type")
        elif isinstance(default, float) or (default is None and isinstance(v, int) and k != "seed"):
            if not isinstance(v, (int, float)):
                raise ConfigError(f"[{where}] {k} = {v!r} must be a number")
            v = float(v)
        elif isinstance(default, int) and not isinstance(v, int):
            raise ConfigError(f"[{where}] {k} = {v!r} must be an integer")
        elif isinstance(default, str) and not isinstance(v, str):
            raise ConfigError(f"[{where}] {k} = {v!r} must be a string")
        elif isinstance(default, tuple):
            if not isinstance(v, tuple):
                raise ConfigError(f"[{where}] {k} = {v!r} must be a list")
            if default and isinstance(default[0], str):
                v = tuple(str(x) for x in v)
            else:
                if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
                    raise ConfigError(f"[{where}] {k} must be a list of numbers")
                v = tuple(float(x) for x in v)
        vals[k] = v
    try:
        return cls(**vals)
    except TypeError as exc:
        raise ConfigError(f"[{where}] {exc}") from None


def config_from_dict(raw: Dict[str, Any]) -> ExperimentConfig:
    raw = dict(raw)
    top = raw.pop("experiment", {})
    if not isinstance(top, dict) or "kind" not in top:
        raise ConfigError("missing [experiment] table with a 'kind' key")
    unknown_top = set(top) - {"kind", "run_id"}
    if unknown_top:
        raise ConfigError(f"[experiment] unknown keys: {sorted(unknown_top)}")
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown tables: {sorted(unknown)}")
    sections = {name: _build(cls, raw.get(name, {}), name) for name, cls in _SECTIONS.items()}
    return ExperimentConfig(kind=top["kind"], run_id=str(top.get("run_id", "run")), **sections)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw)


# -- validation -------------------------------------------------------------

def _is_pow2(n) -> bool:
    return isinstance(n, int) and n >= 8 and n & (n - 1) == 0


def validate(cfg: ExperimentConfig) -> List[str]:
    """Dry-run check of every precondition; returns human-readable diagnostics."""
    d: List[str] = []
    g, so, ph, da = cfg.grid, cfg.solver, cfg.physics, cfg.data

    if cfg.kind not in KINDS:
        d.append(f"experiment.kind {cfg.kind!r} is not one of {KINDS}")
    if not _is_pow2(g.M):
        d.append(f"grid.M = {g.M} must be a power of two >= 8")
    if not (isinstance(g.R, (int, float)) and g.R > 0):
        d.append(f"grid.R = {g.R} must be positive")
    if not (so.dt > 0 and math.isfinite(so.dt)):
        d.append(f"solver.dt = {so.dt} must be positive")
    if so.scheme not in SCHEMES:
        d.append(f"solver.scheme {so.scheme!r} is not one of {SCHEMES}")
    if not (isinstance(so.pad, int) and so.pad >= 2):
        d.append(f"solver.pad = {so.pad}: the cubic term needs a padding factor >= 2 to stay unaliased")
    if not (isinstance(so.snapshot_stride, int) and so.snapshot_stride >= 1):
        d.append("solver.snapshot_stride must be a positive integer")

    if not (0.7 < ph.s < 1.0):
        d.append(f"physics.s = {ph.s} is outside the theorem range 1 > s > 7/10")

    if cfg.kind == "conserve-sweep":
        Ns = list(ph.N_list)
        if len(Ns) < 4:
            d.append("physics.N_list needs at least four values for the sweep")
        if any(not (N >= 1 and abs(math.log2(N) - round(math.log2(N))) < 1e-12) for N in Ns):
            d.append(f"physics.N_list = {Ns} must contain dyadic values >= 1")
        if Ns and _is_pow2(g.M) and g.R > 0:
            rho_max = g.M * math.pi / g.R
            if 4 * max(Ns) > rho_max:
                d.append(f"N = {max(Ns):g} needs rho_M >= 4N = {4 * max(Ns):g}, grid has {rho_max:.4g}")
    if cfg.kind == "partition" and (ph.N is None or ph.N < 1):
        d.append("physics.N must be set (>= 1) for a partition run")
    if cfg.kind == "growth":
        Ts = list(ph.T_list)
        if len(Ts) < 2 or any(b <= a for a, b in zip(Ts, Ts[1:])) or (Ts and Ts[0] <= 0):
            d.append(f"physics.T_list = {Ts} must be increasing, positive, with at least two entries")
    elif not ph.T >= 0:
        d.append(f"physics.T = {ph.T} must be nonnegative")
    if ph.N is not None and ph.N < 1:
        d.append(f"physics.N = {ph.N} must be >= 1")

    if da.profile not in PROFILES:
        d.append(f"data.profile {da.profile!r} is not one of {PROFILES}")
    if not (isinstance(da.seed, int) and 0 <= da.seed < 2 ** 64):
        d.append(f"data.seed = {da.seed} must be an unsigned 64-bit integer")

    # finite propagation: R >= R0 + T + margin
    if g.R > 0:
        R0 = _support_radius(cfg)
        if R0 is not None and cfg.kind != "inequalities":
            need = R0 + cfg.horizon + 1.0
            if g.R < need:
                d.append(f"grid.R = {g.R:g} is too small for finite propagation: data radius {R0:.3g} "
                         f"+ T {cfg.horizon:g} + margin 1 = {need:.3g}")
        elif R0 is None and cfg.kind != "inequalities":
            d.append("data.support must be set for rough data so the boundary stays quiescent")

    # resolution heuristic for bump data: the profile width should span several grid cells
    if da.profile == "bump" and _is_pow2(g.M) and g.R > 0 and da.width < 8 * g.R / g.M:
        d.append(f"data.width = {da.width:g} is under-resolved on spacing {g.R / g.M:.3g}")

    if cfg.kind == "conserve-sweep" and 0.5 < ph.s < 1:
        try:
            default_pairs(ph.s)
        except ValueError as exc:
            d.append(f"admissible pair set for s = {ph.s}: {exc}")

    for fmt in cfg.output.formats:
        if fmt not in ("csv", "json"):
            d.append(f"output.formats entry {fmt!r} is not csv or json")
    if "csv" not in cfg.output.formats:
        d.append("output.formats must include csv")
    if cfg.audit.runs < 1 or cfg.audit.fields < 1:
        d.append("audit.runs and audit.fields must be positive")
    if any(not 1 < p < 3 for p in cfg.audit.p_list):
        d.append(f"audit.p_list = {list(cfg.audit.p_list)} must lie in (1, 3)")
    return d


def _support_radius(cfg: ExperimentConfig) -> Optional[float]:
    da = cfg.data
    if da.profile == "bump":
        return bump_radius(da.width, da.center, tail=1e-12)
    if da.profile == "smooth-random":
        return bump_radius(RANDOM_SMOOTH_MAX_WIDTH, RANDOM_SMOOTH_MAX_CENTER, tail=1e-12)
    return da.support
