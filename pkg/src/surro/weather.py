"""Hourly weather years: EPW ingestion, synthetic climates, weekly windows
and the unclipped min-max scaler."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (DegenerateFeature, InsufficientData, InvalidArgument,
                     MalformedWeather, ShapeError)
from .prng import SplitMix64, derive_seed

HOURS_PER_YEAR = 8760
HOURS_PER_WEEK = 168
WEEKS_PER_YEAR = 52
FEATURES = ("drybulb_c", "rel_humidity_pct", "ghi_whm2", "wind_ms")
D_W = len(FEATURES)

# 0-based EPW data-row columns, in FEATURES order
EPW_COLUMNS = (6, 8, 13, 21)
EPW_HEADER_LINES = 8
EPW_MIN_FIELDS = 35


class HourRecord(NamedTuple):
    drybulb_c: float
    rel_humidity_pct: float
    ghi_whm2: float
    wind_ms: float


@dataclass(frozen=True)
class HourlyWeatherYear:
    """One location's 8760-hour series, columns ordered as ``FEATURES``."""

    location_id: str
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.shape != (HOURS_PER_YEAR, D_W):
            raise MalformedWeather(
                f"expected {HOURS_PER_YEAR}x{D_W} hourly values, got {data.shape}")
        bad = ~np.isfinite(data)
        if bad.any():
            row, col = np.argwhere(bad)[0]
            raise MalformedWeather("non-finite value", row=int(row), column=FEATURES[col])
        _check_range(data[:, 1], 0.0, 100.0, "rel_humidity_pct")
        _check_range(data[:, 2], 0.0, math.inf, "ghi_whm2")
        _check_range(data[:, 3], 0.0, math.inf, "wind_ms")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def drybulb_c(self):
        return self.data[:, 0]

    @property
    def rel_humidity_pct(self):
        return self.data[:, 1]

    @property
    def ghi_whm2(self):
        return self.data[:, 2]

    @property
    def wind_ms(self):
        return self.data[:, 3]

    @property
    def hours(self) -> list[HourRecord]:
        return [HourRecord(*map(float, row)) for row in self.data]


def _check_range(values, lo, hi, name):
    bad = np.flatnonzero((values < lo) | (values > hi))
    if bad.size:
        row = int(bad[0])
        raise MalformedWeather(f"{name}={values[row]!r} outside [{lo}, {hi}]",
                               row=row, column=name)


@dataclass(frozen=True)
class WeeklyWeather:
    week_index: int
    values: np.ndarray = field(repr=False)  # (168, d_w), scaled, unclipped


@dataclass(frozen=True)
class MinMaxScaler:
    min: np.ndarray
    max: np.ndarray
    fitted_on: str

    def __post_init__(self):
        lo = np.array(self.min, dtype=np.float64)
        hi = np.array(self.max, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ShapeError("scaler min/max must be equal-length vectors")
        if not np.all(hi > lo):
            raise DegenerateFeature(f"scaler has max <= min for feature(s) "
                                    f"{np.flatnonzero(~(hi > lo)).tolist()}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def n_features(self) -> int:
        return self.min.shape[0]

    def transform_array(self, raw: np.ndarray) -> np.ndarray:
        """Affine map on any array whose last axis is the feature axis."""
        raw = np.asarray(raw, dtype=np.float64)
        if raw.shape[-1] != self.n_features:
            raise ShapeError(f"expected {self.n_features} features, got {raw.shape[-1]}")
        return (raw - self.min) / (self.max - self.min)

    def to_text(self) -> str:
        lines = [f"fitted_on = {self.fitted_on}"]
        for name, lo, hi in zip(_feature_names(self.n_features), self.min, self.max):
            lines.append(f"{name} = {float(lo)!r}, {float(hi)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MinMaxScaler":
        fitted_on, lo, hi = "", [], []
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, value = (part.strip() for part in line.partition("="))
            if key == "fitted_on":
                fitted_on = value
            else:
                a, b = value.split(",")
                lo.append(float(a))
                hi.append(float(b))
        return cls(np.array(lo), np.array(hi), fitted_on)


def _feature_names(n):
    return FEATURES if n == D_W else tuple(f"f{i}" for i in range(n))


@dataclass(frozen=True)
class ClimateZoneSpec:
    zone_id: str
    mean_temp_c: float
    seasonal_amplitude_c: float
    diurnal_amplitude_c: float
    humidity_base_pct: float
    wind_base_ms: float
    noise_scale: float

    def __post_init__(self):
        if self.seasonal_amplitude_c < 0:
            raise InvalidArgument("seasonal_amplitude_c must be >= 0")
        if not 0.0 <= self.humidity_base_pct <= 100.0:
            raise InvalidArgument("humidity_base_pct must be in [0, 100]")
        if self.diurnal_amplitude_c < 0 or self.wind_base_ms < 0 or self.noise_scale < 0:
            raise InvalidArgument("amplitudes, wind base and noise scale must be >= 0")


# ---------------------------------------------------------------- EPW input

def parse_epw(raw: bytes | str, location_id: str | None = None) -> HourlyWeatherYear:
    """Parse an EnergyPlus weather file.

    The location id defaults to field 1 of the ``LOCATION`` header line.
    Leap-year files (8784 rows) are rejected like any other wrong row count.
    """
    text = raw.decode("utf-8", errors="replace") if isinstance(raw, bytes) else raw
    lines = text.splitlines()
    if len(lines) < EPW_HEADER_LINES:
        raise MalformedWeather("EPW header shorter than 8 lines")
    header = next(csv.reader([lines[0]]))
    if location_id is None:
        location_id = header[1].strip() if len(header) > 1 else ""
    rows = [ln for ln in lines[EPW_HEADER_LINES:] if ln.strip()]
    if len(rows) != HOURS_PER_YEAR:
        raise MalformedWeather(f"expected {HOURS_PER_YEAR} data rows, got {len(rows)}")
    data = np.empty((HOURS_PER_YEAR, D_W))
    for r, line in enumerate(rows):
        fields = line.split(",")
        if len(fields) < EPW_MIN_FIELDS:
            raise MalformedWeather(f"only {len(fields)} fields", row=r)
        for c, col in enumerate(EPW_COLUMNS):
            try:
                data[r, c] = float(fields[col])
            except ValueError:
                raise MalformedWeather(f"unparseable number {fields[col]!r}",
                                       row=r, column=col) from None
    return HourlyWeatherYear(location_id, data)


# ------------------------------------------------------- synthetic climates

# AR(1) persistence per hour and noise std per unit noise_scale
_NOISE = {
    "drybulb": (0.985, 3.0),
    "humidity": (0.97, 8.0),
    "wind": (0.97, 1.2),
}
_NOISE_BOUND = 3.0  # innovations truncated at +-3 sigma


def _ar1_noise(seed: int, key: str, phi: float, sigma: float) -> np.ndarray:
    if sigma == 0.0:
        return np.zeros(HOURS_PER_YEAR)
    rng = SplitMix64(derive_seed(seed, key))
    z = np.clip(rng.normal(HOURS_PER_YEAR), -_NOISE_BOUND, _NOISE_BOUND)
    out = np.empty(HOURS_PER_YEAR)
    innov = math.sqrt(1.0 - phi * phi)
    x = z[0]
    out[0] = x
    for h in range(1, HOURS_PER_YEAR):
        x = phi * x + innov * z[h]
        out[h] = x
    return sigma * out


def synth_climate(spec: ClimateZoneSpec, location_seed: int,
                  location_id: str | None = None) -> HourlyWeatherYear:
    """Deterministic synthetic hourly year for one location."""
    h = np.arange(HOURS_PER_YEAR)
    day = h // 24
    hod = h % 24
    season = np.cos(2 * np.pi * day / 365.0)
    drybulb = (spec.mean_temp_c - spec.seasonal_amplitude_c * season
               + spec.diurnal_amplitude_c * np.sin(2 * np.pi * (hod - 9) / 24.0))
    season_factor = 0.6 + 0.4 * (1.0 - season) / 2.0
    daylight = (hod >= 6) & (hod <= 18)
    ghi = np.where(daylight,
                   np.maximum(0.0, 950.0 * np.sin(np.pi * (hod - 6) / 12.0)) * season_factor,
                   0.0)
    ns = spec.noise_scale
    phi, sd = _NOISE["drybulb"]
    drybulb = drybulb + _ar1_noise(location_seed, "drybulb", phi, sd * ns)
    phi, sd = _NOISE["humidity"]
    rh = np.clip(spec.humidity_base_pct + _ar1_noise(location_seed, "humidity", phi, sd * ns),
                 0.0, 100.0)
    phi, sd = _NOISE["wind"]
    wind = np.maximum(0.0, spec.wind_base_ms + _ar1_noise(location_seed, "wind", phi, sd * ns))
    data = np.column_stack([drybulb, rh, ghi, wind])
    return HourlyWeatherYear(location_id or f"{spec.zone_id}-{location_seed}", data)


# ------------------------------------------------------------ weekly windows

def window_weeks(year: HourlyWeatherYear) -> np.ndarray:
    """52 consecutive 168-hour blocks from hour 0; the last 24 hours are dropped.

    Returns a raw-unit array of shape (52, 168, d_w).
    """
    n = WEEKS_PER_YEAR * HOURS_PER_WEEK
    return year.data[:n].reshape(WEEKS_PER_YEAR, HOURS_PER_WEEK, -1).copy()


def fit_scaler(train_weeks: Sequence[np.ndarray] | np.ndarray, location_id: str) -> MinMaxScaler:
    """Per-feature min/max over every timestep of every supplied week."""
    weeks = [np.asarray(w, dtype=np.float64) for w in train_weeks]
    if not weeks:
        raise InsufficientData("fit_scaler needs at least one week")
    stacked = np.concatenate([w.reshape(-1, w.shape[-1]) for w in weeks])
    lo = stacked.min(axis=0)
    hi = stacked.max(axis=0)
    flat = np.flatnonzero(~(hi > lo))
    if flat.size:
        names = [_feature_names(stacked.shape[1])[i] for i in flat]
        raise DegenerateFeature(f"constant feature(s): {', '.join(names)}")
    return MinMaxScaler(lo, hi, location_id)


def transform(scaler: MinMaxScaler, raw_week: np.ndarray, week_index: int = 0) -> WeeklyWeather:
    raw_week = np.asarray(raw_week, dtype=np.float64)
    if raw_week.ndim != 2 or raw_week.shape[1] != scaler.n_features:
        raise ShapeError(f"expected (T, {scaler.n_features}) week, got {raw_week.shape}")
    return WeeklyWeather(week_index, scaler.transform_array(raw_week))


# ----------------------------------------------------- variability analysis

@dataclass
class VariabilityReport:
    weekly_variance: dict[str, float]
    annual_variance: dict[str, float]
    annual_cosine: dict[tuple[str, str], float]
    matched_weekly_cosine: dict[tuple[str, str], float]

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "feature", "value"])
        for metric, values in (("weekly_variance", self.weekly_variance),
                               ("annual_variance", self.annual_variance)):
            for feat, val in values.items():
                w.writerow([metric, feat, repr(val)])
        return buf.getvalue()

    def pairs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["loc_a", "loc_b", "annual_cosine", "matched_weekly_cosine"])
        for pair, val in self.annual_cosine.items():
            w.writerow([*pair, repr(val), repr(self.matched_weekly_cosine[pair])])
        return buf.getvalue()


def _cosine(a, b):
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def variability_report(locations: Sequence[HourlyWeatherYear]) -> VariabilityReport:
    """Weekly vs annual spread of feature means and pairwise series similarity.

    Cosine similarities are taken on series standardised per feature (z-score
    over the pooled hours of all locations) so that no feature dominates by
    magnitude. A location's week is matched to its most similar week of the
    other location; the reported value is the mean of those maxima.
    """
    if len(locations) < 2:
        raise InsufficientData("variability_report needs at least 2 locations")
    weekly_means = np.concatenate([window_weeks(y).mean(axis=1) for y in locations])
    annual_means = np.stack([y.data.mean(axis=0) for y in locations])
    wv = weekly_means.var(axis=0)
    av = annual_means.var(axis=0)

    pooled = np.concatenate([y.data for y in locations])
    mu, sd = pooled.mean(axis=0), pooled.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    z = {y.location_id: (y.data - mu) / sd for y in locations}

    annual_cos, matched = {}, {}
    for a, b in combinations([y.location_id for y in locations], 2):
        annual_cos[(a, b)] = _cosine(z[a].ravel(), z[b].ravel())
        wa = z[a][:WEEKS_PER_YEAR * HOURS_PER_WEEK].reshape(WEEKS_PER_YEAR, -1)
        wb = z[b][:WEEKS_PER_YEAR * HOURS_PER_WEEK].reshape(WEEKS_PER_YEAR, -1)
        na = wa / np.linalg.norm(wa, axis=1, keepdims=True)
        nb = wb / np.linalg.norm(wb, axis=1, keepdims=True)
        matched[(a, b)] = float((na @ nb.T).max(axis=1).mean())
    return VariabilityReport(
        weekly_variance=dict(zip(FEATURES, map(float, wv))),
        annual_variance=dict(zip(FEATURES, map(float, av))),
        annual_cosine=annual_cos,
        matched_weekly_cosine=matched,
    )


# ---------------------------------------------- internal weather CSV format

def write_weather_csv(year: HourlyWeatherYear, path: Path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FEATURES)
    for row in year.data:
        w.writerow([repr(float(v)) for v in row])
    Path(path).write_text(buf.getvalue())


def read_weather_csv(path: Path, location_id: str | None = None) -> HourlyWeatherYear:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != FEATURES:
            raise MalformedWeather(f"{path}: header must be {','.join(FEATURES)}")
        rows = []
        for r, rec in enumerate(reader):
            if len(rec) != D_W:
                raise MalformedWeather(f"{path}: expected {D_W} fields", row=r)
            try:
                rows.append([float(v) for v in rec])
            except ValueError:
                raise MalformedWeather(f"{path}: unparseable number", row=r) from None
    if len(rows) != HOURS_PER_YEAR:
        raise MalformedWeather(f"{path}: expected {HOURS_PER_YEAR} rows, got {len(rows)}")
    if location_id is None:
        location_id = path.name.split(".")[0]
    return HourlyWeatherYear(location_id, np.array(rows))
