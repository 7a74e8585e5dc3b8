"""Experiment orchestration: config -> simulations -> reports, checkpoints, manifest."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import checkpoint
from .config import ConfigError, ExperimentConfig, validate
from .constants import Constants, load_constants
from .functionals import (
    MorawetzObserver,
    energy,
    hardy_bound,
    hardy_ratio,
    morawetz_identity_terms,
    morawetz_lhs,
    radial_sobolev_ratio,
    series_key,
)
from .imethod import (
    LambdaSelectionError,
    PartitionConfig,
    almost_conservation_sweep,
    choose_lambda,
    growth_experiment,
    interval_partition,
    norm_profile,
    partition_audit,
    rough_health_threshold,
    scale_state,
)
from .report import AuditReport, jsonable
from .solver import (
    NumericalFailure,
    RoughProfile,
    SolverConfig,
    UnderResolvedWarning,
    WaveState,
    evolve,
    make_bump_data,
    make_rough_data,
    random_h1_field,
    random_smooth_data,
)
from .spectral import RadialGrid

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def code_version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:  # pragma: no cover - only when run from an uninstalled tree
        return "0+unknown"


# -- building blocks from a config -------------------------------------------

def build_grid(cfg: ExperimentConfig) -> RadialGrid:
    return RadialGrid(float(cfg.grid.R), int(cfg.grid.M))


def build_datum(cfg: ExperimentConfig, grid: Optional[RadialGrid] = None, seed: Optional[int] = None) -> WaveState:
    grid = grid or build_grid(cfg)
    d = cfg.data
    seed = d.seed if seed is None else seed
    if d.profile == "bump":
        return make_bump_data(grid, d.amplitude, d.width, d.center, d.velocity_amplitude)
    if d.profile == "rough":
        prof = RoughProfile(d.slope_margin, d.low_cut, d.amplitude, d.high_cut, d.support)
        return make_rough_data(grid, cfg.physics.s, seed, prof)
    if d.profile == "smooth-random":
        return random_smooth_data(grid, seed)
    raise ConfigError(f"unknown data profile {d.profile!r}")


def build_solver(cfg: ExperimentConfig, datum: Optional[WaveState] = None, dt_scale: float = 1.0) -> SolverConfig:
    so = cfg.solver
    thr = so.health_threshold
    if datum is not None and cfg.data.profile == "rough":
        thr = max(thr, rough_health_threshold(datum))
    return SolverConfig(dt=so.dt * dt_scale, pad=so.pad, scheme=so.scheme, snapshot_stride=so.snapshot_stride,
                        nonlinear=cfg.physics.nonlinear, blowup_bound=so.blowup_bound, health_threshold=thr)


@dataclass
class RunProduct:
    report: AuditReport
    states: List[WaveState] = field(default_factory=list)
    resolved: Dict[str, Any] = field(default_factory=dict)


# -- runners ----------------------------------------------------------------

def _quiet_evolve(state, T, solver, observers=()):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", UnderResolvedWarning)
        traj = evolve(state, T, solver, observers)
    return traj, [str(w.message) for w in caught]


def run_simulate(cfg: ExperimentConfig, consts: Constants, jobs: int) -> RunProduct:
    datum = build_datum(cfg)
    solver = build_solver(cfg, datum)
    ph = cfg.physics
    observers = [MorawetzObserver()]
    if ph.N is not None:
        observers.append(MorawetzObserver(ph.N, ph.s, solver.pad))
    traj, warns = _quiet_evolve(datum, datum.t + ph.T, solver, observers)
    rep = AuditReport(cfg.run_id)
    e0 = energy(traj.snapshots[0]).total
    for snap in traj.snapshots:
        rep.add("energy", energy(snap).total, (snap.t, snap.t))
    eT = energy(traj.final).total
    window = (traj.start, traj.end)
    rep.add("energy_drift_rel", abs(eT - e0) / e0 if e0 else 0.0, window)
    if traj.end > traj.start:
        mor = morawetz_lhs(traj, window)
        rep.add("morawetz", mor, window)
        rep.add("morawetz_ratio", mor / (2.0 * (e0 + eT)) if e0 + eT else 0.0, window)
        if ph.N is not None:
            terms = morawetz_identity_terms(traj, window, ph.N, ph.s)
            for k in ("r1", "r2", "morawetz", "lhs", "rhs"):
                rep.add(f"mollified_{k}", terms[k], window, ph.N, ph.s)
    rep.add("max_tail_fraction", max(h for _, h in traj.health), window)
    rep.summary.update({"steps": traj.meta["steps"], "dt": traj.meta["dt"], "warnings": warns,
                        "under_resolved": traj.under_resolved})
    return RunProduct(rep, list(traj.snapshots), {"health_threshold": solver.health_threshold})


def run_conserve_sweep(cfg: ExperimentConfig, consts: Constants, jobs: int) -> RunProduct:
    datum = build_datum(cfg)
    solver = build_solver(cfg, datum)
    pc = cfg.partition
    C1 = consts.C1 if pc.C1 is None else pc.C1
    C2 = consts.C2 if pc.C2 is None else pc.C2
    res = almost_conservation_sweep(datum, cfg.physics.s, cfg.physics.N_list, cfg.physics.T, solver,
                                    C1=C1, C2=C2, root_tolerance=pc.root_tolerance,
                                    compute_z=cfg.audit.compute_z, K=consts.K_almost_morawetz,
                                    run_id=cfg.run_id)
    rep = res.report
    Ks = [r.value for r in rep.select("identity_K")]
    if Ks:
        spread = max(abs(k / consts.K_almost_morawetz - 1.0) for k in Ks)
        rep.summary["identity_K_spread"] = spread
    resolved = {"health_threshold": solver.health_threshold, "C1": C1, "C2": C2,
                "root_tolerance": pc.root_tolerance if pc.root_tolerance is not None else res.trajectory.meta["dt"]}
    return RunProduct(rep, list(res.trajectory.snapshots), resolved)


def _morawetz_member(args) -> Dict[str, Any]:
    R, M, solver, seed, T, N, s = args
    grid = RadialGrid(R, M)
    datum = random_smooth_data(grid, seed)
    observers = [MorawetzObserver()]
    if N is not None:
        observers.append(MorawetzObserver(N, s, solver.pad))
    traj, warns = _quiet_evolve(datum, T, solver, observers)
    e0, eT = energy(datum).total, energy(traj.final).total
    out = {"seed": seed, "E0": e0, "ET": eT, "morawetz": morawetz_lhs(traj),
           "final": (traj.final.t, traj.final.position.coeffs, traj.final.velocity.coeffs),
           "warnings": warns}
    if N is not None:
        terms = morawetz_identity_terms(traj, None, N, s)
        k = lambda name: traj.series[series_key(name, N, s)]
        out["mollified"] = {"morawetz": terms["morawetz"], "r1": terms["r1"], "r2": terms["r2"],
                            "lhs": terms["lhs"], "rhs": terms["rhs"],
                            "E0": float(k("energy")[0]), "ET": float(k("energy")[-1])}
    return out


def _pool_map(fn: Callable, items: Sequence, jobs: int) -> List:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def run_morawetz_audit(cfg: ExperimentConfig, consts: Constants, jobs: int) -> RunProduct:
    solver = build_solver(cfg)
    ph = cfg.physics
    seeds = [cfg.data.seed + i for i in range(cfg.audit.runs)]
    items = [(float(cfg.grid.R), int(cfg.grid.M), solver, sd, ph.T, ph.N, ph.s) for sd in seeds]
    results = _pool_map(_morawetz_member, items, jobs)
    rep = AuditReport(cfg.run_id)
    grid = build_grid(cfg)
    states, worst, violations = [], 0.0, 0
    K = consts.K_almost_morawetz
    for res in results:
        window = (0.0, ph.T)
        bound = 2.0 * (res["E0"] + res["ET"])
        ratio = res["morawetz"] / bound
        worst = max(worst, ratio)
        violations += ratio > 1.0 + 1e-3
        tag = f"seed={res['seed']}"
        rep.add(f"morawetz[{tag}]", res["morawetz"], window)
        rep.add(f"morawetz_bound[{tag}]", bound, window)
        rep.add(f"morawetz_ratio[{tag}]", ratio, window)
        if "mollified" in res:
            m = res["mollified"]
            defect = m["morawetz"] - 2.0 * (m["E0"] + m["ET"])
            rsum = abs(m["r1"]) + abs(m["r2"])
            rep.add(f"almost_morawetz_defect[{tag}]", defect, window, ph.N, ph.s)
            rep.add(f"almost_morawetz_margin[{tag}]", K * rsum + 1e-6 - defect, window, ph.N, ph.s)
        t, a, b = res["final"]
        states.append(WaveState.from_arrays(grid, t, a, b))
    rep.add("morawetz_ratio_max", worst, (0.0, ph.T))
    rep.add("violations", violations, (0.0, ph.T))
    rep.summary.update({"seeds": seeds, "max_ratio": worst, "violations": violations})
    return RunProduct(rep, states, {"seeds": seeds})


def run_partition(cfg: ExperimentConfig, consts: Constants, jobs: int) -> RunProduct:
    ph, pc = cfg.physics, cfg.partition
    datum = build_datum(cfg)
    N, s = float(ph.N), ph.s
    choice = choose_lambda(datum, N, s)
    lam = choice.lam
    scaled = scale_state(datum, lam)
    # physical frequencies shrink by lam, so the step can grow by lam at equal accuracy
    solver = build_solver(cfg, scaled, dt_scale=lam)
    traj, warns = _quiet_evolve(scaled, scaled.t + lam * ph.T, solver, [MorawetzObserver(N, s, solver.pad)])
    tol = pc.root_tolerance if pc.root_tolerance is not None else traj.meta["dt"]
    pcfg = PartitionConfig(N, s, consts.C1 if pc.C1 is None else pc.C1,
                           consts.C2 if pc.C2 is None else pc.C2, tol)
    profile = norm_profile(traj, N, s)
    part = interval_partition(profile, (traj.start, traj.end), pcfg)
    rep = partition_audit(part, lam, ph.T, N, s, profile, run_id=cfg.run_id)
    rep.add("lambda", lam, None, N, s)
    rep.add("scaled_mollified_energy", choice.energy, None, N, s)
    rep.summary.update({"warnings": warns, "ft_threshold": consts.ft_threshold()})
    return RunProduct(rep, list(traj.snapshots), {"lambda": lam, "root_tolerance": tol, "cap": pcfg.cap})


def run_growth(cfg: ExperimentConfig, consts: Constants, jobs: int) -> RunProduct:
    datum = build_datum(cfg)
    solver = build_solver(cfg, datum)
    rep = growth_experiment(datum, cfg.physics.s, cfg.physics.T_list, solver, C0=consts.C0,
                            C_prime=consts.C_prime, epsilon=consts.epsilon, run_id=cfg.run_id)
    return RunProduct(rep, [datum], {"health_threshold": solver.health_threshold})


def _inequality_member(args) -> Dict[str, Any]:
    R, M, seed, p_list = args
    grid = RadialGrid(R, M)
    f = random_h1_field(grid, seed)
    smooth = random_smooth_data(grid, seed).position
    return {"seed": seed, "sobolev": radial_sobolev_ratio(f),
            "hardy": {p: hardy_ratio(smooth, p) for p in p_list}}


def run_inequalities(cfg: ExperimentConfig, consts: Constants, jobs: int) -> RunProduct:
    seeds = [cfg.data.seed + i for i in range(cfg.audit.fields)]
    p_list = tuple(cfg.audit.p_list)
    items = [(float(cfg.grid.R), int(cfg.grid.M), sd, p_list) for sd in seeds]
    results = _pool_map(_inequality_member, items, jobs)
    rep = AuditReport(cfg.run_id)
    sob_viol, hardy_viol = 0, {p: 0 for p in p_list}
    for res in results:
        tag = f"seed={res['seed']}"
        rep.add(f"radial_sobolev_ratio[{tag}]", res["sobolev"])
        sob_viol += res["sobolev"] > consts.C_s
        for p in p_list:
            r = res["hardy"][p]
            rep.add(f"hardy_ratio[p={p:g},{tag}]", r)
            hardy_viol[p] += r > hardy_bound(p) * (1 + 1e-3)
    rep.add("radial_sobolev_max", max(r["sobolev"] for r in results))
    rep.add("radial_sobolev_violations", sob_viol)
    for p in p_list:
        rep.add(f"hardy_max[p={p:g}]", max(r["hardy"][p] for r in results))
        rep.add(f"hardy_violations[p={p:g}]", hardy_viol[p])
    rep.summary.update({"C_s": consts.C_s, "sobolev_violations": sob_viol,
                        "hardy_violations": {str(p): v for p, v in hardy_viol.items()}})
    return RunProduct(rep, [], {"seeds": [seeds[0], seeds[-1]]})


RUNNERS: Dict[str, Callable[[ExperimentConfig, Constants, int], RunProduct]] = {
    "simulate": run_simulate,
    "conserve-sweep": run_conserve_sweep,
    "morawetz-audit": run_morawetz_audit,
    "partition": run_partition,
    "growth": run_growth,
    "inequalities": run_inequalities,
}


# -- artifacts --------------------------------------------------------------

@dataclass
class RunOutcome:
    status: int
    directory: Path
    report: Optional[AuditReport] = None
    artifacts: List[Path] = field(default_factory=list)
    failure: Optional[Dict[str, Any]] = None


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class _Writer:
    """The only thing that touches the output directory during a run."""

    def __init__(self, directory: Path):
        self.directory = directory
        self.paths: List[Path] = []

    def checkpoint(self, state: WaveState, index: int, run_id: str, s: float, N: Optional[float]) -> Path:
        sub = self.directory / "checkpoints"
        sub.mkdir(parents=True, exist_ok=True)
        path = checkpoint.save(sub / f"{run_id}_{index:05d}.imlb", state, s, math.nan if N is None else N)
        self.paths.append(path)
        return path

    def report(self, rep: AuditReport, formats) -> None:
        self.paths.extend(rep.write(self.directory, formats=formats))

    def manifest(self, doc: Dict[str, Any]) -> Path:
        doc = dict(doc)
        doc["artifacts"] = [{"path": str(p.relative_to(self.directory)), "sha256": _digest(p)}
                            for p in self.paths]
        path = self.directory / "manifest.json"
        path.write_text(json.dumps(jsonable(doc), indent=2, sort_keys=True) + "\n")
        return path


def run(cfg: ExperimentConfig, jobs: int = 1, constants: Optional[Constants] = None) -> RunOutcome:
    """Validate, execute and persist one experiment.

    Raises ConfigError before anything is written if the config is invalid.
    """
    diags = validate(cfg)
    if diags:
        raise ConfigError("; ".join(diags))
    consts = constants or load_constants()
    directory = Path(cfg.output.directory)
    base = {"run_id": cfg.run_id, "kind": cfg.kind, "config": cfg.as_dict(),
            "constants": consts.as_dict(), "code_version": code_version()}
    try:
        product = RUNNERS[cfg.kind](cfg, consts, jobs)
    except NumericalFailure as exc:
        directory.mkdir(parents=True, exist_ok=True)
        w = _Writer(directory)
        w.checkpoint(exc.last_good, 0, f"{cfg.run_id}_last_good", cfg.physics.s, cfg.physics.N)
        failure = {"message": str(exc), "step_index": exc.step_index, "last_good_time": exc.last_good.t}
        w.manifest({**base, "status": "numerical-failure", "failure": failure})
        return RunOutcome(EXIT_NUMERICAL, directory, None, w.paths, failure)
    except LambdaSelectionError as exc:
        directory.mkdir(parents=True, exist_ok=True)
        w = _Writer(directory)
        failure = {"message": str(exc)}
        w.manifest({**base, "status": "numerical-failure", "failure": failure})
        return RunOutcome(EXIT_NUMERICAL, directory, None, w.paths, failure)

    directory.mkdir(parents=True, exist_ok=True)
    w = _Writer(directory)
    if cfg.output.checkpoints:
        for i, st in enumerate(product.states):
            w.checkpoint(st, i, cfg.run_id, cfg.physics.s, cfg.physics.N)
    product.report.provenance = {"config": cfg.as_dict(), "resolved": product.resolved,
                                 "constants_version": consts.version, "code_version": code_version()}
    w.report(product.report, cfg.output.formats)
    w.manifest({**base, "status": "ok", "resolved": product.resolved, "summary": product.report.summary})
    return RunOutcome(EXIT_OK, directory, product.report, w.paths)
