"""Training datasets: (weekly weather, design, weekly energy) triples."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import InvalidArgument, MalformedData
from .oracle import simulate_weeks
from .sampling import DesignSpace, designs_from_csv, designs_to_csv, lhs_sample, normalize_design
from .weather import (HourlyWeatherYear, MinMaxScaler, WeeklyWeather, WEEKS_PER_YEAR,
                      read_weather_csv, window_weeks, write_weather_csv)

DATASET_FORMAT = 1


@dataclass(frozen=True)
class WeeklySample:
    week: WeeklyWeather
    design_scaled: np.ndarray
    target: float
    location_id: str
    week_index: int
    design_index: int


@dataclass
class Dataset:
    """All (location, design, week) samples of one training or validation set.

    Weeks are stored once per (location, week) rather than once per sample;
    ``index_arrays()`` maps each sample to its row in ``weeks``.
    """

    locations: list[HourlyWeatherYear]
    designs: np.ndarray          # (n, 14) raw units
    targets: np.ndarray          # (L, n, 52) kWh
    scaler: MinMaxScaler
    space: DesignSpace
    seed: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        L, n = len(self.locations), self.designs.shape[0]
        if self.targets.shape != (L, n, WEEKS_PER_YEAR):
            raise InvalidArgument(f"targets shape {self.targets.shape} != {(L, n, WEEKS_PER_YEAR)}")
        self.raw_weeks = np.concatenate([window_weeks(y) for y in self.locations])
        self.weeks = self.scaler.transform_array(self.raw_weeks)
        self.designs_scaled = normalize_design(self.space, self.designs)

    @property
    def location_ids(self) -> list[str]:
        return [y.location_id for y in self.locations]

    @property
    def n_designs(self) -> int:
        return self.designs.shape[0]

    def __len__(self) -> int:
        return self.targets.size

    def index_arrays(self):
        """Per-sample (week_id, design_index, target) in (location, design, week) order."""
        L, n, W = self.targets.shape
        loc = np.repeat(np.arange(L), n * W)
        design = np.tile(np.repeat(np.arange(n), W), L)
        week = np.tile(np.arange(W), L * n)
        return loc * W + week, design, self.targets.reshape(-1)

    @property
    def samples(self) -> Iterator[WeeklySample]:
        week_ids, design_idx, y = self.index_arrays()
        for wid, d, target in zip(week_ids, design_idx, y):
            loc, w = divmod(int(wid), WEEKS_PER_YEAR)
            yield WeeklySample(WeeklyWeather(w, self.weeks[wid]), self.designs_scaled[d],
                               float(target), self.locations[loc].location_id, w, int(d))


def build_dataset(locations: Sequence[HourlyWeatherYear], space: DesignSpace, n_designs: int,
                  seed: int, scaler: MinMaxScaler, designs: np.ndarray | None = None) -> Dataset:
    """Label every (location, design, week) with the oracle.

    One LHS design set (seeded) is shared by all locations unless ``designs``
    is given explicitly.
    """
    if not locations:
        raise InvalidArgument("build_dataset needs at least one location")
    if designs is None:
        designs = lhs_sample(space, n_designs, seed)
    designs = space.check(np.atleast_2d(designs))
    targets = np.stack([simulate_weeks(designs, window_weeks(y), space) for y in locations])
    prov = {"location_ids": [y.location_id for y in locations], "seed": int(seed),
            "n_designs": int(designs.shape[0])}
    return Dataset(list(locations), designs, targets, scaler, space, int(seed), prov)


def _targets_csv(targets: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["design_index", "week_index", "kwh"])
    for d, row in enumerate(targets):
        for wk, v in enumerate(row):
            w.writerow([d, wk, repr(float(v))])
    return buf.getvalue()


def save_dataset(ds: Dataset, out_dir: Path) -> None:
    """Directory layout: manifest.json, designs.csv, scaler.txt and one
    ``<location>/`` folder per location with weather.csv and targets.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "designs.csv").write_text(designs_to_csv(ds.space, ds.designs))
    (out / "scaler.txt").write_text(ds.scaler.to_text())
    for year, targets in zip(ds.locations, ds.targets):
        loc_dir = out / year.location_id
        loc_dir.mkdir(exist_ok=True)
        write_weather_csv(year, loc_dir / "weather.csv")
        (loc_dir / "targets.csv").write_text(_targets_csv(targets))
    manifest = {"format": DATASET_FORMAT, "location_ids": ds.location_ids, "seed": ds.seed,
                "n_designs": ds.n_designs, "n_samples": len(ds), "provenance": ds.provenance}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_dataset(in_dir: Path, space: DesignSpace) -> Dataset:
    root = Path(in_dir)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
        designs = designs_from_csv(space, root / "designs.csv")
        scaler = MinMaxScaler.from_text((root / "scaler.txt").read_text())
        locations, targets = [], []
        for loc in manifest["location_ids"]:
            locations.append(read_weather_csv(root / loc / "weather.csv", loc))
            t = np.full((designs.shape[0], WEEKS_PER_YEAR), np.nan)
            with (root / loc / "targets.csv").open(newline="") as fh:
                reader = csv.reader(fh)
                next(reader)
                for d, wk, v in reader:
                    t[int(d), int(wk)] = float(v)
            if np.isnan(t).any():
                raise MalformedData(f"{root / loc / 'targets.csv'}: missing (design, week) rows")
            targets.append(t)
    except (OSError, KeyError, ValueError, StopIteration) as exc:
        if isinstance(exc, MalformedData):
            raise
        raise MalformedData(f"{root}: unreadable dataset ({exc})") from None
    return Dataset(locations, designs, np.stack(targets), scaler, space,
                   int(manifest["seed"]), manifest.get("provenance", {}))
