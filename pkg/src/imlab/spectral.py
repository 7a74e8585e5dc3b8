"""Radial grid, sine transform and diagonal Fourier multipliers.

Everything here acts on w = r u in the Dirichlet sine basis; see
:mod:`imlab.normalization` for the conventions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.fft

from .normalization import FOUR_PI, plancherel_weight


def smoothstep(x):
    """Quintic smoothstep clipped to [0, 1]: S(0)=0, S(1)=1, S'=S''=0 at both ends."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)


def _is_power_of_two(n):
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class RadialGrid:
    """Truncated half-line [0, R] with M sine modes."""

    R: float
    M: int

    def __post_init__(self):
        if not (self.R > 0 and math.isfinite(self.R)):
            raise ValueError(f"domain radius must be positive and finite, got {self.R}")
        if self.M < 8 or not _is_power_of_two(self.M):
            raise ValueError(f"mode count must be a power of two >= 8, got {self.M}")

    @cached_property
    def h(self) -> float:
        return self.R / (self.M + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        r = self.h * np.arange(1, self.M + 1)
        r.setflags(write=False)
        return r

    @cached_property
    def freqs(self) -> np.ndarray:
        rho = np.pi / self.R * np.arange(1, self.M + 1)
        rho.setflags(write=False)
        return rho

    @property
    def rho_max(self) -> float:
        return float(self.freqs[-1])

    def intervals(self, pad: int = 1) -> int:
        """Interval count of the refined node set for an integer pad factor.

        pad = 1 is the transform grid itself.  Larger factors round
        pad (M + 1) up to an FFT-friendly size; the count stays > 2M for
        pad >= 2, which keeps cubic products alias-free in the retained modes.
        """
        if pad == 1:
            return self.M + 1
        return scipy.fft.next_fast_len(pad * (self.M + 1), real=True)

    def padded_nodes(self, pad: int = 1) -> np.ndarray:
        """Interior nodes of the refined grid."""
        n = self.intervals(pad)
        return self.R / n * np.arange(1, n)

    def padded_spacing(self, pad: int = 1) -> float:
        return self.R / self.intervals(pad)


# -- raw array kernels ------------------------------------------------------
# These work on bare coefficient vectors; the solver calls them in its hot loop.

def synthesize(coeffs: np.ndarray, intervals: int) -> np.ndarray:
    """Values of w = sum a_k sin(rho_k r) at the interior nodes of a grid with that many intervals."""
    M = coeffs.shape[-1]
    n = intervals - 1
    if n == M:
        return scipy.fft.dst(coeffs, type=1) * 0.5
    full = np.zeros(n)
    full[:M] = coeffs
    return scipy.fft.dst(full, type=1) * 0.5


def analyze(values: np.ndarray, M: int) -> np.ndarray:
    """Sine coefficients 1..M of samples taken at the interior nodes of a refined grid."""
    n = values.shape[-1]
    return scipy.fft.dst(values, type=1)[:M] / (n + 1)


def synthesize_derivative(coeffs: np.ndarray, R: float, intervals: int) -> np.ndarray:
    """dw/dr at all nodes of a grid with that many intervals, endpoints r=0 and r=R included."""
    M = coeffs.shape[-1]
    n = intervals
    full = np.zeros(n + 1)
    full[1:M + 1] = coeffs * (np.pi / R * np.arange(1, M + 1))
    return scipy.fft.dct(full, type=1) * 0.5


def origin_value(coeffs: np.ndarray, freqs: np.ndarray) -> float:
    """u(0) = lim w/r = sum a_k rho_k."""
    return float(np.dot(coeffs, freqs))


def radial_trapezoid(interior: np.ndarray, h: float, slope0: float = 0.0) -> float:
    """4 pi * int_0^R f dr from interior samples of f, where f(0) = f(R) = 0.

    ``slope0`` is f'(0); for integrands odd in r it feeds the Euler-Maclaurin
    endpoint correction h^2/12 f'(0).  Leave it at zero for even integrands.
    """
    return FOUR_PI * (h * float(np.sum(interior)) + h * h / 12.0 * slope0)


# -- fields -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpectralField:
    """Sine coefficients of w = r u on a grid.  Immutable."""

    grid: RadialGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (self.grid.M,):
            raise ValueError(f"expected {self.grid.M} coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("field coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: RadialGrid) -> "SpectralField":
        return cls(grid, np.zeros(grid.M))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, c: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * float(c))

    __rmul__ = __mul__

    def w_values(self, pad: int = 1) -> np.ndarray:
        return synthesize(self.coeffs, self.grid.intervals(pad))

    def u_values(self, pad: int = 1) -> np.ndarray:
        """u = w / r at the interior nodes of the pad-refined grid."""
        return self.w_values(pad) / self.grid.padded_nodes(pad)

    def origin(self) -> float:
        return origin_value(self.coeffs, self.grid.freqs)

    def evaluate_u(self, r: np.ndarray) -> np.ndarray:
        """Direct O(M * len(r)) evaluation of u at arbitrary radii (origin handled)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        rho = self.grid.freqs
        out = np.empty_like(r)
        small = r == 0.0
        out[small] = self.origin()
        rr = r[~small]
        out[~small] = np.sin(np.outer(rr, rho)) @ self.coeffs / rr
        return out


def _same_grid(f, g):
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")


def forward_transform(grid: RadialGrid, samples) -> SpectralField:
    """Sine coefficients of w from its values at the grid nodes."""
    x = np.asarray(samples, dtype=float)
    if x.shape != (grid.M,):
        raise ValueError(f"expected {grid.M} samples, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        bad = int(np.flatnonzero(~np.isfinite(x))[0])
        raise ValueError(f"non-finite sample at node index {bad}")
    return SpectralField(grid, analyze(x, grid.M))


def inverse_transform(field: SpectralField) -> np.ndarray:
    """Values of w at the grid nodes."""
    return synthesize(field.coeffs, field.grid.intervals())


def field_from_function(grid: RadialGrid, u, pad: int = 1) -> SpectralField:
    """Project a radial profile u(r) onto the grid (w = r u sampled, then transformed)."""
    r = grid.padded_nodes(pad)
    w = r * np.asarray(u(r), dtype=float)
    return SpectralField(grid, analyze(w, grid.M))


# -- multipliers ------------------------------------------------------------

@dataclass(frozen=True)
class MultiplierSpec:
    """A radial Fourier multiplier m(|xi|), evaluated at the grid frequencies.

    kinds: ``power`` (D^s), ``smoothing`` (the I operator with cutoff N and
    regularity s), ``lp_block`` (P_M), ``lp_low`` (P_{<=M}), ``custom``
    (explicit table, one value per mode).
    """

    kind: str
    s: float = 0.0
    N: float = 1.0
    scale: float = 1.0
    table: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("power", "smoothing", "lp_block", "lp_low", "custom"):
            raise ValueError(f"unknown multiplier kind {self.kind!r}")
        if self.kind == "smoothing":
            if not 0.5 < self.s < 1.0:
                raise ValueError(f"smoothing multiplier needs 1/2 < s < 1, got {self.s}")
            if not self.N > 0:
                raise ValueError(f"cutoff N must be positive, got {self.N}")
        if self.kind in ("lp_block", "lp_low") and not self.scale > 0:
            raise ValueError(f"dyadic scale must be positive, got {self.scale}")
        if self.kind == "custom":
            if self.table is None:
                raise ValueError("custom multiplier needs a table")
            if not all(math.isfinite(v) for v in self.table):
                raise ValueError("custom multiplier table must be finite")

    @classmethod
    def power(cls, s: float) -> "MultiplierSpec":
        return cls("power", s=float(s))

    @classmethod
    def smoothing(cls, N: float, s: float) -> "MultiplierSpec":
        return cls("smoothing", s=float(s), N=float(N))

    @classmethod
    def lp_block(cls, scale: float) -> "MultiplierSpec":
        return cls("lp_block", scale=float(scale))

    @classmethod
    def lp_low(cls, scale: float) -> "MultiplierSpec":
        return cls("lp_low", scale=float(scale))

    @classmethod
    def custom(cls, values: Sequence[float]) -> "MultiplierSpec":
        return cls("custom", table=tuple(float(v) for v in values))

    def symbol(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        if self.kind == "power":
            if self.s == 0.0:
                return np.ones_like(rho)
            return rho ** self.s
        if self.kind == "smoothing":
            return smoothing_symbol(rho, self.N, self.s)
        if self.kind == "lp_block":
            return lp_psi(rho / self.scale)
        if self.kind == "lp_low":
            return lp_phi(rho / self.scale)
        table = np.asarray(self.table, dtype=float)
        if table.shape != rho.shape:
            raise ValueError(f"custom table has {table.size} entries, grid needs {rho.size}")
        return table


def smoothing_symbol(rho, N, s):
    """m(rho) = 1 below N, (N/rho)^(1-s) above 2N, smoothstep blend of the exponent in log2 between."""
    rho = np.asarray(rho, dtype=float)
    x = np.log2(np.maximum(rho, 1e-300) / N)
    expo = (1.0 - s) * smoothstep(x) * np.maximum(x, 0.0)
    return np.exp2(-expo)


def lp_phi(x):
    """Littlewood-Paley low-pass bump: 1 on [0,1], 0 beyond 2, smoothstep in log2 between."""
    x = np.asarray(x, dtype=float)
    return 1.0 - smoothstep(np.log2(np.maximum(x, 1e-300)))


def lp_psi(x):
    x = np.asarray(x, dtype=float)
    return lp_phi(x) - lp_phi(2.0 * x)


def apply_multiplier(f: SpectralField, m: MultiplierSpec) -> SpectralField:
    if m.kind == "power" and m.s == 0.0:
        return f
    return SpectralField(f.grid, m.symbol(f.grid.freqs) * f.coeffs)


def dyadic_scales(grid: RadialGrid) -> list:
    """Every dyadic M whose block psi(rho/M) can be nonzero on [rho_1, rho_M]."""
    lo = math.floor(math.log2(grid.freqs[0])) - 1
    hi = math.ceil(math.log2(grid.rho_max)) + 1
    return [2.0 ** j for j in range(lo, hi + 1)]


def lp_project(f: SpectralField, scale: float) -> SpectralField:
    if not (scale > 0 and math.log2(scale).is_integer()):
        raise ValueError(f"dyadic scale must be a power of two, got {scale}")
    return apply_multiplier(f, MultiplierSpec.lp_block(scale))


# -- norms ------------------------------------------------------------------

def lebesgue_norm(f: SpectralField, p: float, refine: int = 1) -> float:
    """(4 pi int_0^R |u|^p r^2 dr)^(1/p), trapezoid on the (optionally refined) node set.

    p = inf gives the max of |u| over the nodes and the origin.
    """
    if not p > 1:
        raise ValueError(f"Lebesgue exponent must be > 1, got {p}")
    u = f.u_values(refine)
    if math.isinf(p):
        return float(max(np.max(np.abs(u)), abs(f.origin())))
    r = f.grid.padded_nodes(refine)
    integral = radial_trapezoid(np.abs(u) ** p * r * r, f.grid.padded_spacing(refine))
    return float(integral ** (1.0 / p))


def sobolev_norm(f: SpectralField, s: float, homogeneous: bool = True) -> float:
    """||D^s f|| or, inhomogeneous, ||(1 + D^s) f|| for s >= 0 and ||(1 + D^|s|)^-1 f|| for s < 0.

    The negative-order weight is the dual of the positive one; (1 + D^s) with
    s < 0 would tend to 1 at high frequency and reproduce the L^2 norm.
    """
    rho = f.grid.freqs
    if homogeneous:
        weight = rho ** (2.0 * s)
    elif s >= 0:
        weight = (1.0 + rho ** s) ** 2
    else:
        weight = (1.0 + rho ** (-s)) ** -2
    return float(np.sqrt(plancherel_weight(f.grid.R) * np.sum(weight * f.coeffs ** 2)))


def l2_norm(f: SpectralField) -> float:
    return sobolev_norm(f, 0.0)
