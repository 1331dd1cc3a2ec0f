"""Building design space and Latin hypercube sampling over it."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, ShapeError
from .prng import SplitMix64, derive_seed


@dataclass(frozen=True)
class DesignParameter:
    name: str
    lo: float
    hi: float


@dataclass(frozen=True)
class DesignSpace:
    params: tuple[DesignParameter, ...]

    def __post_init__(self):
        for p in self.params:
            if not p.hi > p.lo:
                raise InvalidArgument(f"{p.name}: hi must exceed lo")

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def lo(self) -> np.ndarray:
        return np.array([p.lo for p in self.params])

    @property
    def hi(self) -> np.ndarray:
        return np.array([p.hi for p in self.params])

    @property
    def dim(self) -> int:
        return len(self.params)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def midpoint(self) -> np.ndarray:
        return (self.lo + self.hi) / 2.0

    def check(self, designs: np.ndarray) -> np.ndarray:
        """Validate raw design vector(s) against the parameter ranges."""
        b = np.asarray(designs, dtype=np.float64)
        if b.shape[-1] != self.dim:
            raise ShapeError(f"design vectors need {self.dim} values, got {b.shape[-1]}")
        bad = (b < self.lo) | (b > self.hi) | ~np.isfinite(b)
        if bad.any():
            j = int(np.argwhere(bad)[0][-1])
            v = b[..., j].ravel()[np.flatnonzero(bad[..., j].ravel())[0]]
            p = self.params[j]
            raise InvalidArgument(f"{p.name}={v!r} outside [{p.lo}, {p.hi}]")
        return b


DESIGN_SPACE = DesignSpace((
    DesignParameter("wall_insulation_m", 0.02, 0.10),
    DesignParameter("roof_insulation_m", 0.02, 0.10),
    DesignParameter("window_u_wm2k", 1.2, 2.0),
    DesignParameter("window_shgc", 0.3, 0.7),
    DesignParameter("visible_transmittance", 0.5, 1.0),
    DesignParameter("wall_thickness_m", 0.1, 0.5),
    DesignParameter("roof_thickness_m", 0.1, 0.5),
    DesignParameter("north_axis_deg", 0.0, 360.0),
    DesignParameter("wall_absorptance", 0.5, 0.9),
    DesignParameter("roof_absorptance", 0.5, 0.9),
    DesignParameter("equipment_gain_wm2", 5.0, 15.0),
    DesignParameter("window_scale", 0.5, 1.0),
    DesignParameter("heating_setpoint_c", 18.0, 22.0),
    DesignParameter("cooling_setpoint_c", 24.0, 28.0),
))


def lhs_sample(space: DesignSpace, n: int, seed: int) -> np.ndarray:
    """Plain Latin hypercube: one uniform draw in each of ``n`` equal strata
    per parameter, strata assigned by an independent permutation per parameter.

    Returns raw-unit designs of shape (n, space.dim).
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidArgument(f"n must be a positive integer, got {n!r}")
    rng = SplitMix64(derive_seed(seed, "lhs"))
    unit = np.empty((n, space.dim))
    for j in range(space.dim):
        strata = rng.permutation(n)
        offsets = rng.uniform(n)
        unit[:, j] = (strata + offsets) / n
    return space.lo + unit * (space.hi - space.lo)


def normalize_design(space: DesignSpace, b: np.ndarray) -> np.ndarray:
    b = space.check(b)
    return (b - space.lo) / (space.hi - space.lo)


def designs_to_csv(space: DesignSpace, designs: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(space.names)
    for row in np.atleast_2d(designs):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def designs_from_csv(space: DesignSpace, path: Path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != space.names:
            raise InvalidArgument(f"{path}: design header does not match the design space")
        rows = [[float(v) for v in rec] for rec in reader if rec]
    return space.check(np.array(rows).reshape(-1, space.dim))
