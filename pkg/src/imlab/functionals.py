"""Scalar functionals of states and trajectories.

Energies and Sobolev norms come from coefficient sums; anything nonlinear
(quartic energy, Morawetz density, remainder integrands, L^p norms) is a
radial trapezoid on a zero-padded node set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .normalization import FOUR_PI, plancherel_weight
from .solver import Trajectory, WaveState, cube_coefficients, piecewise_linear_integral
from .spectral import (
    MultiplierSpec,
    SpectralField,
    apply_multiplier,
    lebesgue_norm,
    origin_value,
    radial_trapezoid,
    smoothing_symbol,
    sobolev_norm,
    synthesize,
    synthesize_derivative,
)


@dataclass(frozen=True)
class AdmissiblePair:
    """An m-wave admissible exponent pair: 1/q + 1/r <= 1/2 and 1/q + 3/r = 3/2 - m."""

    q: float
    r: float
    m: float

    def __post_init__(self):
        if not (self.q > 2):
            raise ValueError(f"time exponent must lie in (2, inf], got {self.q}")
        if not (2 <= self.r < math.inf):
            raise ValueError(f"space exponent must lie in [2, inf), got {self.r}")
        if not (0 <= self.m <= 1):
            raise ValueError(f"regularity must lie in [0, 1], got {self.m}")
        if 1 / self.q + 1 / self.r > 0.5 + 1e-12:
            raise ValueError(f"({self.q}, {self.r}) is not wave-admissible: 1/q + 1/r > 1/2")
        if abs(1 / self.q + 3 / self.r - (1.5 - self.m)) > 1e-12:
            raise ValueError(f"({self.q}, {self.r}, m={self.m}) violates 1/q + 3/r = 3/2 - m")

    @classmethod
    def from_exponents(cls, q: float, r: float) -> "AdmissiblePair":
        return cls(q, r, 1.5 - 1 / q - 3 / r)


def default_pairs(s: float, r_cap: float = 12.0) -> List[AdmissiblePair]:
    """The exponent pairs the almost-conservation and remainder estimates lean on.

    L^inf L^2, L^4 L^4, L^6 L^3, L^{1/(1-s)} L^6, and the sharp-admissible
    pair at r = r_cap standing in for L^{2+} L^{inf-}.
    """
    q_cap = 1.0 / (0.5 - 1.0 / r_cap)
    return [
        AdmissiblePair.from_exponents(math.inf, 2.0),
        AdmissiblePair.from_exponents(4.0, 4.0),
        AdmissiblePair.from_exponents(6.0, 3.0),
        AdmissiblePair.from_exponents(1.0 / (1.0 - s), 6.0),
        AdmissiblePair.from_exponents(q_cap, r_cap),
    ]


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    gradient: float
    quartic: float

    @property
    def total(self) -> float:
        return self.kinetic + self.gradient + self.quartic

    def as_dict(self) -> Dict[str, float]:
        return {"kinetic": self.kinetic, "gradient": self.gradient,
                "quartic": self.quartic, "total": self.total}


def _quadratic_parts(grid, a, b):
    c = plancherel_weight(grid.R)
    rho = grid.freqs
    return 0.5 * c * float(np.sum(b * b)), 0.5 * c * float(np.sum((rho * a) ** 2))


def _quartic(grid, a, pad):
    r = grid.padded_nodes(pad)
    u = synthesize(a, r.size + 1) / r
    return 0.25 * radial_trapezoid(u ** 4 * r * r, grid.padded_spacing(pad))


def energy(state: WaveState, pad: int = 2) -> EnergyBreakdown:
    """E = 1/2 int u_t^2 + 1/2 int |D u|^2 + 1/4 int u^4."""
    a, b = state.position.coeffs, state.velocity.coeffs
    kin, grad = _quadratic_parts(state.grid, a, b)
    return EnergyBreakdown(kin, grad, _quartic(state.grid, a, pad))


def mollify(state: WaveState, N: float, s: float) -> WaveState:
    """Apply the smoothing operator I (cutoff N, regularity s) to position and velocity."""
    m = MultiplierSpec.smoothing(N, s)
    return WaveState(state.t, apply_multiplier(state.position, m), apply_multiplier(state.velocity, m))


def mollified_energy(state: WaveState, N: float, s: float, pad: int = 2) -> EnergyBreakdown:
    if not 0.5 < s < 1.0:
        raise ValueError(f"need 1/2 < s < 1, got {s}")
    if N < 1:
        raise ValueError(f"need N >= 1, got {N}")
    return energy(mollify(state, N, s), pad)


def hs_pair_norm(state: WaveState, s: float) -> float:
    """||u||_{H^s}^2 + ||u_t||_{H^{s-1}}^2 with the (1 + D^s) inhomogeneous weight."""
    return (sobolev_norm(state.position, s, homogeneous=False) ** 2
            + sobolev_norm(state.velocity, s - 1.0, homogeneous=False) ** 2)


# -- per-step densities -------------------------------------------------------

def series_key(name: str, N: Optional[float] = None, s: Optional[float] = None) -> str:
    if N is None:
        return name
    return f"I[N={N:g},s={s:g}]:{name}"


class MorawetzObserver:
    """Per-step densities for the energy, Morawetz and commutator-remainder audits.

    With ``N`` and ``s`` set, everything refers to v = I u; otherwise v = u.
    For a solution of the discrete system v obeys
    v_tt - Lap v + v^3 = G with G = v^3 - I P_M(u^3), and the multiplier
    (v_r + v/r) pairs G into the R1 and R2 integrands.

    Recorded per step (keys prefixed via :func:`series_key`):
      kinetic, gradient, quartic, energy   energy of v
      morawetz       4 pi int v^4 r dr             (= int v^4/|x| dx)
      l6             ||v||_{L^6_x}
      r1, r2         4 pi int (w_r - w/r) g dr,  4 pi int w g / r dr   (g = r G)
      dE             4 pi int w_t g dr             (= d/dt E(v))
      origin_sq      v(t, 0)^2
      boundary_flux  w_r(t, R)^2
      momentum       4 pi int w_r w_t dr           (= int (x.grad v/|x| + v/|x|) v_t dx)
    """

    def __init__(self, N: Optional[float] = None, s: Optional[float] = None, pad: int = 2):
        if (N is None) != (s is None):
            raise ValueError("give both N and s, or neither")
        self.N, self.s, self.pad = N, s, pad
        self._tables = {}

    def _setup(self, grid):
        tab = self._tables.get(grid)
        if tab is None:
            rho = np.asarray(grid.freqs)
            m = np.ones_like(rho) if self.N is None else smoothing_symbol(rho, self.N, self.s)
            tab = (rho, m, grid.padded_nodes(self.pad), grid.padded_spacing(self.pad))
            self._tables[grid] = tab
        return tab

    def key(self, name: str) -> str:
        return series_key(name, self.N, self.s)

    def __call__(self, state: WaveState) -> Dict[str, float]:
        grid, pad = state.grid, self.pad
        rho, m, r, h = self._setup(grid)
        a, b = state.position.coeffs, state.velocity.coeffs
        aI, bI = m * a, m * b

        n = r.size + 1
        cube_u, _ = cube_coefficients(a, r)
        w = synthesize(aI, n)
        wt = synthesize(bI, n)
        wr_full = synthesize_derivative(aI, grid.R, n)
        wr = wr_full[1:-1]
        v = w / r
        v0 = origin_value(aI, rho)
        vt0 = origin_value(bI, rho)
        g = v * v * w - synthesize(m * cube_u, n)
        G0 = v0 ** 3 - origin_value(m * cube_u, rho)

        kin, grad = _quadratic_parts(grid, aI, bI)
        quart = 0.25 * radial_trapezoid(v ** 4 * r * r, h)
        out = {
            "kinetic": kin,
            "gradient": grad,
            "quartic": quart,
            "energy": kin + grad + quart,
            "morawetz": radial_trapezoid(v ** 4 * r, h, slope0=v0 ** 4),
            "l6": radial_trapezoid(v ** 6 * r * r, h) ** (1.0 / 6.0),
            "r1": radial_trapezoid((wr - v) * g, h),
            "r2": radial_trapezoid(v * g, h, slope0=v0 * G0),
            "dE": radial_trapezoid(wt * g, h),
            "origin_sq": v0 * v0,
            "boundary_flux": float(wr_full[-1] ** 2),
            "momentum": radial_trapezoid(wr * wt, h, slope0=v0 * vt0),
        }
        return {self.key(k): float(val) for k, val in out.items()}


def _window(traj, window):
    a, b = (traj.start, traj.end) if window is None else window
    traj.check_window(a, b)
    return a, b


def morawetz_lhs(traj: Trajectory, window=None, mollified: bool = False,
                 N: Optional[float] = None, s: Optional[float] = None) -> float:
    """Time integral of int |v|^4 / |x| dx over the window, v = u or I u."""
    a, b = _window(traj, window)
    key = series_key("morawetz", N, s) if mollified else "morawetz"
    if key not in traj.series:
        raise ValueError(f"trajectory was not recorded with the observer providing {key!r}")
    return traj.integral(key, a, b)


def remainder_integrals(traj: Trajectory, window, N: float, s: float) -> Tuple[float, float]:
    a, b = _window(traj, window)
    k1, k2 = series_key("r1", N, s), series_key("r2", N, s)
    if k1 not in traj.series or k2 not in traj.series:
        raise ValueError(f"remainder observers for N={N:g}, s={s:g} were not enabled on this trajectory")
    return traj.integral(k1, a, b), traj.integral(k2, a, b)


def morawetz_identity_terms(traj: Trajectory, window=None, N=None, s=None) -> Dict[str, float]:
    """Both sides of the integrated multiplier identity on a window.

    1/2 int int v^4/|x| + 2 pi int v(t,0)^2 dt - 2 pi int w_r(t,R)^2 dt
        + P(b) - P(a) = R1 + R2
    with P the momentum term.  The R-flux term vanishes on quiescent boundaries.
    """
    a, b = _window(traj, window)
    k = lambda name: series_key(name, N, s)
    mor = traj.integral(k("morawetz"), a, b)
    lhs = (0.5 * mor + 2 * math.pi * traj.integral(k("origin_sq"), a, b)
           - 2 * math.pi * traj.integral(k("boundary_flux"), a, b)
           + traj.value_at(k("momentum"), b) - traj.value_at(k("momentum"), a))
    r1, r2 = traj.integral(k("r1"), a, b), traj.integral(k("r2"), a, b)
    return {"lhs": lhs, "rhs": r1 + r2, "morawetz": mor, "r1": r1, "r2": r2}


# -- mixed space-time norms -------------------------------------------------

Weight = Union[None, MultiplierSpec, Sequence[MultiplierSpec]]


def _weight_tuple(weight: Weight) -> tuple:
    if weight is None:
        return ()
    if isinstance(weight, MultiplierSpec):
        return (weight,)
    return tuple(weight)


def _snapshot_norm(traj: Trajectory, idx: int, field: str, weights: tuple, r: float, refine: int) -> float:
    cache = traj.meta.setdefault("_norm_cache", {})
    key = (idx, field, weights, r, refine)
    val = cache.get(key)
    if val is None:
        snap = traj.snapshots[idx]
        f = snap.position if field == "position" else snap.velocity
        for w in weights:
            f = apply_multiplier(f, w)
        val = lebesgue_norm(f, r, refine)
        cache[key] = val
    return val


def mixed_norm(traj: Trajectory, window, q: float, r: float, weight: Weight = None,
               field: str = "position", refine: int = 2) -> float:
    """|| weight(v) ||_{L^q_t(window) L^r_x} over the stored snapshots.

    Finite q: trapezoid of ||.||_{L^r}^q in time with linear interpolation at
    the window ends.  q = inf: max over snapshots in the window and the two
    interpolated endpoints.
    """
    if field not in ("position", "velocity"):
        raise ValueError(f"field must be 'position' or 'velocity', got {field!r}")
    if not q > 2:
        raise ValueError(f"time exponent must be in (2, inf], got {q}")
    if not 2 <= r < math.inf:
        raise ValueError(f"space exponent must be in [2, inf), got {r}")
    a, b = _window(traj, window)
    ts = traj.snapshot_times
    weights = _weight_tuple(weight)
    # the snapshots inside the window plus one neighbour each side for interpolation
    lo = max(int(np.searchsorted(ts, a, side="right")) - 1, 0)
    hi = min(int(np.searchsorted(ts, b, side="left")), len(ts) - 1)
    idx = range(lo, hi + 1)
    tt = ts[lo:hi + 1]
    vals = np.array([_snapshot_norm(traj, i, field, weights, r, refine) for i in idx])
    if math.isinf(q):
        inner = vals[(tt >= a) & (tt <= b)]
        ends = [np.interp(a, tt, vals), np.interp(b, tt, vals)]
        return float(max(np.max(inner) if inner.size else 0.0, *ends))
    if b == a:
        return 0.0
    return piecewise_linear_integral(tt, vals ** q, a, b) ** (1.0 / q)


def z_functional(traj: Trajectory, window, N: float, s: float,
                 pairs: Optional[Sequence[AdmissiblePair]] = None, refine: int = 2) -> float:
    """max over pairs of ||D^{1-m} I u||_{L^q L^r} + ||D^{-m} I u_t||_{L^q L^r}."""
    pairs = default_pairs(s) if pairs is None else list(pairs)
    if not pairs:
        raise ValueError("z_functional needs at least one admissible pair")
    I = MultiplierSpec.smoothing(N, s)
    best = 0.0
    for p in pairs:
        pos = mixed_norm(traj, window, p.q, p.r, (I, MultiplierSpec.power(1 - p.m)), "position", refine)
        vel = mixed_norm(traj, window, p.q, p.r, (I, MultiplierSpec.power(-p.m)), "velocity", refine)
        best = max(best, pos + vel)
    return best


# -- radial inequalities ----------------------------------------------------

def radial_sobolev_ratio(f: SpectralField, exclude: int = 2) -> float:
    """max_r |u(r)| r^(1/2) / ||u||_{Hdot^1} over the nodes, skipping `exclude` innermost ones."""
    hnorm = sobolev_norm(f, 1.0)
    if hnorm == 0.0:
        raise ValueError("radial Sobolev ratio is undefined for a field with zero Hdot^1 norm")
    r = f.grid.nodes[exclude:]
    u = f.u_values()[exclude:]
    return float(np.max(np.abs(u) * np.sqrt(r)) / hnorm)


def power_weighted_integral(g_nodes: np.ndarray, h: float, alpha: float) -> float:
    """4 pi int_0^R g(r) r^alpha dr with g piecewise linear on the uniform nodes 0, h, ..., R.

    Each cell's r^alpha moments are exact, so integrable singularities at
    r = 0 (alpha > -1) are handled.
    """
    n = g_nodes.size - 1
    x = h * np.arange(n + 1)
    x0, x1 = x[:-1], x[1:]
    p0 = (x1 ** (alpha + 1) - x0 ** (alpha + 1)) / (alpha + 1)
    p1 = (x1 ** (alpha + 2) - x0 ** (alpha + 2)) / (alpha + 2)
    left = (x1 * p0 - p1) / h
    right = (p1 - x0 * p0) / h
    return FOUR_PI * float(np.dot(g_nodes[:-1], left) + np.dot(g_nodes[1:], right))


def _abs_power_nodes(f: SpectralField, p: float, refine: int) -> np.ndarray:
    u = f.u_values(refine)
    return np.concatenate(([abs(f.origin()) ** p], np.abs(u) ** p, [0.0]))


def hardy_ratio(f: SpectralField, p: float, refine: int = 4) -> float:
    """||u/|x| ||_{L^p} / ||D u||_{L^p}, D = |xi|."""
    if not 1 < p < 3:
        raise ValueError(f"Hardy exponent must lie in (1, 3), got {p}")
    h = f.grid.padded_spacing(refine)
    num = power_weighted_integral(_abs_power_nodes(f, p, refine), h, 2.0 - p)
    du = apply_multiplier(f, MultiplierSpec.power(1.0))
    den = power_weighted_integral(_abs_power_nodes(du, p, refine), h, 2.0)
    if den == 0.0:
        raise ValueError("Hardy ratio is undefined for the zero field")
    return float((num / den) ** (1.0 / p))


def hardy_bound(p: float) -> float:
    return 3.0 / (3.0 - p)
