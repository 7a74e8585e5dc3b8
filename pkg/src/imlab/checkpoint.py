"""Binary checkpoints of a WaveState.

Layout (little-endian):

    magic   4 bytes  b"IMLB"
    version u32
    M       u64
    R       f64
    t       f64
    s       f64      regularity tag of the run (NaN if not applicable)
    N       f64      I-operator cutoff of the run (NaN if not applicable)
    a       M x f64  position coefficients
    b       M x f64  velocity coefficients
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .solver import WaveState
from .spectral import RadialGrid

MAGIC = b"IMLB"
VERSION = 1
_HEADER = struct.Struct("<4sIQdddd")

PathLike = Union[str, os.PathLike]


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class Checkpoint:
    state: WaveState
    s: float = math.nan
    N: float = math.nan


def to_bytes(state: WaveState, s: float = math.nan, N: float = math.nan) -> bytes:
    grid = state.grid
    head = _HEADER.pack(MAGIC, VERSION, grid.M, grid.R, state.t, s, N)
    a = np.ascontiguousarray(state.position.coeffs, dtype="<f8")
    b = np.ascontiguousarray(state.velocity.coeffs, dtype="<f8")
    return head + a.tobytes() + b.tobytes()


def from_bytes(buf: bytes) -> Checkpoint:
    if len(buf) < _HEADER.size:
        raise CheckpointError(f"checkpoint truncated: {len(buf)} bytes, header needs {_HEADER.size}")
    magic, version, M, R, t, s, N = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    need = _HEADER.size + 16 * M
    if len(buf) != need:
        raise CheckpointError(f"checkpoint size {len(buf)} does not match M={M} (expected {need})")
    body = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    grid = RadialGrid(R, int(M))
    state = WaveState.from_arrays(grid, t, body[:M].copy(), body[M:].copy())
    return Checkpoint(state, s, N)


def save(path: PathLike, state: WaveState, s: float = math.nan, N: float = math.nan) -> Path:
    """Write atomically (temp file + rename) so a crash never leaves a torn checkpoint."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(to_bytes(state, s, N))
    os.replace(tmp, path)
    return path


def load(path: PathLike) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
