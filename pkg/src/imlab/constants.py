"""Calibrated constants, read from a versioned key-value file.

The packaged file lives at ``imlab/data/constants.txt``; the IMLAB_CONSTANTS
environment variable points at a replacement.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Optional

import tomli

ENV_VAR = "IMLAB_CONSTANTS"


@dataclass(frozen=True)
class Constants:
    version: str
    C_s: float           # radial Sobolev constant, max observed ratio times a safety factor
    K_almost_morawetz: float
    C0: float            # lambda = C0 N^(2(1-s)/(2s-1)) prefactor used by the growth policy
    C1: float            # L^6 L^6 threshold in the interval partition
    C2: float            # length cap prefactor in the interval partition
    C_prime: float       # prefactor in the N(T) choice of the growth policy
    epsilon: float       # the universal small loss in every A+ / A- exponent
    source: str = ""

    def as_dict(self):
        return asdict(self)

    def ft_threshold(self) -> float:
        """Bootstrap level (16 C_s^2)^(1/6) + 1 for the L^6 L^6 norm."""
        return (16.0 * self.C_s ** 2) ** (1.0 / 6.0) + 1.0


def constants_path() -> Optional[Path]:
    env = os.environ.get(ENV_VAR)
    return Path(env) if env else None


def load_constants(path=None) -> Constants:
    path = path if path is not None else constants_path()
    if path is None:
        text = resources.files("imlab").joinpath("data/constants.txt").read_text()
        source = "package:imlab/data/constants.txt"
    else:
        text = Path(path).read_text()
        source = str(path)
    raw = tomli.loads(text)
    names = {f.name for f in fields(Constants)} - {"source"}
    missing = names - raw.keys()
    if missing:
        raise ValueError(f"constants file {source} lacks {sorted(missing)}")
    unknown = raw.keys() - names
    if unknown:
        raise ValueError(f"constants file {source} has unknown keys {sorted(unknown)}")
    vals = {k: (str(raw[k]) if k == "version" else float(raw[k])) for k in names}
    return Constants(source=source, **vals)
