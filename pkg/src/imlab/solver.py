"""Split-step evolution of the radial defocusing cubic wave equation.

In w = r u the equation reads w_tt - w_rr = -w^3 / r^2 on [0, R] with
w(0) = w(R) = 0.  The linear part is integrated exactly per sine mode; the
cubic term enters as velocity kicks computed pseudospectrally on a
zero-padded grid.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .spectral import RadialGrid, SpectralField, analyze, synthesize

logger = logging.getLogger(__name__)

# Yoshida's fourth-order triple-jump weights.
_CBRT2 = 2.0 ** (1.0 / 3.0)
YOSHIDA_W1 = 1.0 / (2.0 - _CBRT2)
YOSHIDA_W0 = -_CBRT2 / (2.0 - _CBRT2)

SCHEMES = ("strang", "yoshida4")


class NumericalFailure(RuntimeError):
    """Raised when a step produces non-finite values or trips the blow-up guard."""

    def __init__(self, message: str, last_good: "WaveState", step_index: int):
        super().__init__(message)
        self.last_good = last_good
        self.step_index = step_index


class UnderResolvedWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class WaveState:
    t: float
    position: SpectralField
    velocity: SpectralField

    def __post_init__(self):
        if self.position.grid != self.velocity.grid:
            raise ValueError("position and velocity must share a grid")

    @property
    def grid(self) -> RadialGrid:
        return self.position.grid

    @classmethod
    def from_arrays(cls, grid: RadialGrid, t: float, a, b) -> "WaveState":
        return cls(float(t), SpectralField(grid, a), SpectralField(grid, b))

    def tail_fraction(self, top: float = 0.1) -> float:
        """Share of the (Hdot^1 x L^2) energy held by the highest `top` fraction of modes."""
        rho = self.grid.freqs
        dens = (rho * self.position.coeffs) ** 2 + self.velocity.coeffs ** 2
        total = float(np.sum(dens))
        if total == 0.0:
            return 0.0
        k0 = int(math.floor((1.0 - top) * self.grid.M))
        return float(np.sum(dens[k0:]) / total)


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    pad: int = 2
    scheme: str = "strang"
    snapshot_stride: int = 1
    boundary_margin: float = 1.0
    nonlinear: bool = True
    blowup_bound: float = 1e8
    health_threshold: float = 1e-6

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.pad < 1 or int(self.pad) != self.pad:
            raise ValueError(f"pad factor must be a positive integer, got {self.pad}")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")


# -- kernels ----------------------------------------------------------------

def cube_coefficients(a: np.ndarray, r_pad: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Sine coefficients (modes 1..M) of r u^3 = w^3 / r^2, and u on the padded nodes.

    A padded node set with more than 2M intervals keeps the projection of the
    cubic product free of aliasing into the retained modes.
    """
    w = synthesize(a, r_pad.size + 1)
    u = w / r_pad
    return analyze(u * u * w, a.shape[-1]), u


def linear_flow(state: WaveState, dt: float) -> WaveState:
    """Exact evolution of w_tt = w_rr over dt, one 2x2 rotation per mode."""
    if dt == 0:
        return state
    rho = state.grid.freqs
    c, s = np.cos(rho * dt), np.sin(rho * dt)
    a, b = state.position.coeffs, state.velocity.coeffs
    return WaveState.from_arrays(state.grid, state.t + dt, c * a + s / rho * b, -rho * s * a + c * b)


def nonlinear_kick(state: WaveState, dt: float, pad: int = 2) -> WaveState:
    """Velocity update b <- b - dt * P_M[w^3 / r^2]; position and time unchanged."""
    if dt == 0:
        return state
    a = state.position.coeffs
    if not np.any(a):
        return state
    cube, _ = cube_coefficients(a, state.grid.padded_nodes(pad))
    return WaveState.from_arrays(state.grid, state.t, a, state.velocity.coeffs - dt * cube)


class _Stepper:
    """Array-level stepping with cached rotation tables."""

    def __init__(self, grid: RadialGrid, config: SolverConfig):
        self.grid = grid
        self.config = config
        self.rho = np.asarray(grid.freqs)
        self.r_pad = grid.padded_nodes(config.pad)
        self._rot = {}
        self.max_u = 0.0
        self._last = (None, None)

    def _rotation(self, dt):
        rot = self._rot.get(dt)
        if rot is None:
            c, s = np.cos(self.rho * dt), np.sin(self.rho * dt)
            rot = (c, s / self.rho, -self.rho * s)
            self._rot[dt] = rot
        return rot

    def flow(self, a, b, dt):
        c, s_over, ms = self._rotation(dt)
        return c * a + s_over * b, ms * a + c * b

    def kick(self, a, b, dt):
        if not self.config.nonlinear:
            return b
        # The closing half-kick of one step and the opening half-kick of the
        # next see the same position array; reuse its cube.
        last_a, cube = self._last
        if last_a is not a:
            cube, u = cube_coefficients(a, self.r_pad)
            self.max_u = float(np.max(np.abs(u))) if u.size else 0.0
            self._last = (a, cube)
        return b - dt * cube

    def strang(self, a, b, dt):
        b = self.kick(a, b, 0.5 * dt)
        a, b = self.flow(a, b, dt)
        b = self.kick(a, b, 0.5 * dt)
        return a, b

    def step(self, a, b, dt):
        if self.config.scheme == "strang":
            return self.strang(a, b, dt)
        a, b = self.strang(a, b, YOSHIDA_W1 * dt)
        a, b = self.strang(a, b, YOSHIDA_W0 * dt)
        return self.strang(a, b, YOSHIDA_W1 * dt)


def step(state: WaveState, config: SolverConfig, dt: Optional[float] = None) -> WaveState:
    """Advance one step (dt defaults to config.dt; negative dt runs backwards)."""
    dt = config.dt if dt is None else dt
    st = _Stepper(state.grid, config)
    a, b = st.step(state.position.coeffs, state.velocity.coeffs, dt)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NumericalFailure(f"non-finite values after step at t={state.t}", state, 1)
    return WaveState.from_arrays(state.grid, state.t + dt, a, b)


# -- trajectories -----------------------------------------------------------

Observer = Callable[[WaveState], Dict[str, float]]


@dataclass
class Trajectory:
    """Snapshots at the configured stride plus per-step observer time series."""

    grid: RadialGrid
    times: np.ndarray
    series: Dict[str, np.ndarray]
    snapshots: List[WaveState]
    health: List[Tuple[float, float]] = field(default_factory=list)
    under_resolved: bool = False
    meta: Dict[str, object] = field(default_factory=dict)

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    @property
    def snapshot_times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def final(self) -> WaveState:
        return self.snapshots[-1]

    def check_window(self, a: float, b: float):
        tol = 1e-12 * max(1.0, abs(self.end))
        if not (self.start - tol <= a <= b <= self.end + tol):
            raise ValueError(f"window [{a}, {b}] outside trajectory span [{self.start}, {self.end}]")

    def require(self, name: str) -> np.ndarray:
        if name not in self.series:
            raise KeyError(f"trajectory has no {name!r} series; evolve with the matching observer")
        return self.series[name]

    def value_at(self, name: str, t: float) -> float:
        return float(np.interp(t, self.times, self.require(name)))

    def integral(self, name: str, a: Optional[float] = None, b: Optional[float] = None) -> float:
        """Trapezoid time integral of a series over [a, b] (piecewise-linear interpolation)."""
        a = self.start if a is None else a
        b = self.end if b is None else b
        self.check_window(a, b)
        return piecewise_linear_integral(self.times, self.require(name), a, b)

    def cumulative(self, name: str) -> np.ndarray:
        y = self.require(name)
        out = np.zeros_like(y)
        out[1:] = np.cumsum(0.5 * np.diff(self.times) * (y[1:] + y[:-1]))
        return out

    def snapshots_in(self, a: float, b: float) -> List[WaveState]:
        return [s for s in self.snapshots if a - 1e-12 <= s.t <= b + 1e-12]


def piecewise_linear_integral(t: np.ndarray, y: np.ndarray, a: float, b: float) -> float:
    """Exact integral over [a, b] of the piecewise-linear interpolant of (t, y)."""
    if b <= a:
        return 0.0
    inner = (t > a) & (t < b)
    tt = np.concatenate(([a], t[inner], [b]))
    yy = np.concatenate(([np.interp(a, t, y)], y[inner], [np.interp(b, t, y)]))
    return float(np.sum(0.5 * np.diff(tt) * (yy[1:] + yy[:-1])))


def evolve(state: WaveState, T_final: float, config: SolverConfig,
           observers: Sequence[Observer] = ()) -> Trajectory:
    """Integrate to T_final with uniform steps no larger than config.dt.

    Observers are called on every accepted state (including the initial one)
    and their outputs stored as per-step series.
    """
    if T_final < state.t:
        raise ValueError(f"T_final={T_final} precedes the state time {state.t}")
    grid = state.grid
    span = T_final - state.t
    n = 0 if span == 0 else max(1, math.ceil(span / config.dt - 1e-9))
    dt = span / n if n else 0.0

    stepper = _Stepper(grid, config)
    times = [state.t]
    rows = [_observe(observers, state)]
    snaps = [state]
    health = [(state.t, state.tail_fraction())]
    a, b = state.position.coeffs, state.velocity.coeffs
    last_good = state
    for i in range(1, n + 1):
        a, b = stepper.step(a, b, dt)
        t = state.t + i * dt if i < n else T_final
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise NumericalFailure(f"non-finite coefficients at step {i} (t={t:.6g})", last_good, i)
        if stepper.max_u > config.blowup_bound:
            raise NumericalFailure(
                f"|u| reached {stepper.max_u:.3e} > blow-up bound {config.blowup_bound:.3e} at t={t:.6g}",
                last_good, i)
        cur = WaveState.from_arrays(grid, t, a, b)
        times.append(t)
        if observers:
            rows.append(_observe(observers, cur))
        if i % config.snapshot_stride == 0 or i == n:
            snaps.append(cur)
            health.append((t, cur.tail_fraction()))
            last_good = cur

    series = {}
    if observers:
        for key in rows[0]:
            series[key] = np.array([r[key] for r in rows])
    worst = max(h for _, h in health)
    traj = Trajectory(grid, np.array(times), series, snaps, health,
                      under_resolved=worst > config.health_threshold,
                      meta={"dt": dt, "steps": n, "scheme": config.scheme, "pad": config.pad})
    if traj.under_resolved:
        warnings.warn(f"tail energy fraction {worst:.2e} exceeds {config.health_threshold:.0e}",
                      UnderResolvedWarning, stacklevel=2)
    return traj


def _observe(observers, state):
    row = {}
    for obs in observers:
        row.update(obs(state))
    return row


# -- initial data -----------------------------------------------------------

@dataclass(frozen=True)
class RoughProfile:
    """Spectral model of H^s x H^(s-1) data.

    Position coefficients fall off like rho^-(s + 1/2 + slope_margin) and
    velocity ones like rho^-(s - 1/2 + slope_margin), with random signs, on
    low_cut <= rho <= high_cut.  If ``support`` is set the physical profile is
    multiplied by a smooth window that vanishes for r >= support; the band
    then defaults to rho <= rho_M / 2 so the windowed field still fits on the
    grid and nothing leaks past the support through truncation.
    """

    slope_margin: float = 0.05
    low_cut: float = 1.0
    amplitude: float = 1.0
    high_cut: Optional[float] = None
    support: Optional[float] = None


def make_rough_data(grid: RadialGrid, s: float, seed: int, profile: RoughProfile = RoughProfile()) -> WaveState:
    if not 0.5 < s < 1.0:
        raise ValueError(f"rough data needs 1/2 < s < 1, got {s}")
    rng = np.random.default_rng(seed)
    # One uniform draw per mode keeps the first M signs stable under grid doubling.
    signs = np.where(rng.random((2, grid.M)) < 0.5, -1.0, 1.0)
    rho = np.asarray(grid.freqs)
    band = rho >= profile.low_cut
    high_cut = profile.high_cut
    if high_cut is None and profile.support is not None:
        high_cut = 0.5 * grid.rho_max
    if high_cut is not None:
        band &= rho <= high_cut
    eps = profile.slope_margin
    a = np.where(band, profile.amplitude * signs[0] * rho ** -(s + 0.5 + eps), 0.0)
    b = np.where(band, profile.amplitude * signs[1] * rho ** -(s - 0.5 + eps), 0.0)
    if profile.support is not None:
        a, b = _windowed(grid, a, profile.support), _windowed(grid, b, profile.support)
    return WaveState.from_arrays(grid, 0.0, a, b)


def support_window(r, support):
    """1 on [0, support/2], C-infinity transition down to 0 at `support`.

    The transition exp(-1/x) / (exp(-1/x) + exp(-1/(1-x))) has a spectrum
    decaying faster than any power, so windowing a band-limited field only
    spreads it by a few multiples of 1/support in frequency.
    """
    x = np.clip((np.asarray(r, dtype=float) - 0.5 * support) / (0.5 * support), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f0 = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        f1 = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return f1 / (f0 + f1)


def _windowed(grid, coeffs, support, pad=2):
    r = grid.padded_nodes(pad)
    return analyze(synthesize(coeffs, r.size + 1) * support_window(r, support), grid.M)


def bump_profile(amplitude, width, center=0.0):
    """Even Gaussian pair A(exp(-(r-c)^2/w^2) + exp(-(r+c)^2/w^2)), smooth as a radial function."""
    def u(r):
        r = np.asarray(r, dtype=float)
        return amplitude * (np.exp(-((r - center) / width) ** 2) + np.exp(-((r + center) / width) ** 2))
    return u


def make_bump_data(grid: RadialGrid, amplitude=1.0, width=1.0, center=0.0,
                   velocity_amplitude=0.0, velocity_width=None, pad: int = 2) -> WaveState:
    """Smooth, effectively compactly supported data (Gaussian tails below rounding)."""
    from .spectral import field_from_function

    pos = field_from_function(grid, bump_profile(amplitude, width, center), pad)
    vel = field_from_function(grid, bump_profile(velocity_amplitude, velocity_width or width, center), pad)
    return WaveState(0.0, pos, vel)


def bump_radius(width, center=0.0, tail=1e-16):
    """Radius beyond which a bump profile is below `tail` relative to its peak."""
    return center + width * math.sqrt(math.log(1.0 / tail))


RANDOM_SMOOTH_MAX_CENTER = 2.0
RANDOM_SMOOTH_MAX_WIDTH = 1.8


def random_smooth_data(grid: RadialGrid, seed: int) -> WaveState:
    """Seeded smooth bump with random amplitude, width, shell radius and velocity."""
    rng = np.random.default_rng(seed)
    amp = rng.uniform(0.5, 2.0)
    width = rng.uniform(0.7, 1.5)
    center = rng.uniform(0.0, RANDOM_SMOOTH_MAX_CENTER)
    vamp = rng.uniform(-1.0, 1.0)
    vwidth = width * rng.uniform(0.8, RANDOM_SMOOTH_MAX_WIDTH / 1.5)
    return make_bump_data(grid, amp, width, center, vamp, vwidth)


def random_h1_field(grid: RadialGrid, seed: int, slope: float = 2.5, low_cut: float = 0.0,
                    band: Optional[float] = None) -> SpectralField:
    """Random field with Gaussian coefficients decaying like rho^-slope (slope > 3/2 gives H^1).

    `band` (if set) restricts to rho <= band; a random slope in [slope, slope+1]
    and random low-frequency cutoff make the ensemble heterogeneous.
    """
    rng = np.random.default_rng(seed)
    rho = np.asarray(grid.freqs)
    expo = slope + rng.uniform(0.0, 1.0)
    coeffs = rng.standard_normal(grid.M) * rho ** -expo
    mask = rho >= low_cut
    if band is not None:
        mask &= rho <= band
    return SpectralField(grid, np.where(mask, coeffs, 0.0))
