"""Climate manifests: named locations, each a zone spec plus a noise seed."""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import InvalidConfig
from .weather import ClimateZoneSpec, HourlyWeatherYear, synth_climate

_FLOAT_FIELDS = ("mean_temp_c", "seasonal_amplitude_c", "diurnal_amplitude_c",
                 "humidity_base_pct", "wind_base_ms", "noise_scale")
REQUIRED_FIELDS = ("zone", "seed") + _FLOAT_FIELDS


@dataclass(frozen=True)
class Location:
    location_id: str
    spec: ClimateZoneSpec
    seed: int

    @property
    def zone(self) -> str:
        return self.spec.zone_id

    def year(self, alternate: bool = False) -> HourlyWeatherYear:
        """Primary year, or the alternate (validation) year drawn with seed + 1."""
        return synth_climate(self.spec, self.seed + (1 if alternate else 0), self.location_id)


def parse_manifest(text: str, source: str = "<manifest>") -> list[Location]:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise InvalidConfig(f"{source}: {exc}") from None
    if not parser.sections():
        raise InvalidConfig(f"{source}: no locations defined")
    out = []
    for loc in parser.sections():
        sec = parser[loc]
        for name in REQUIRED_FIELDS:
            if name not in sec:
                raise InvalidConfig(f"{source}: location [{loc}] is missing field '{name}'")
        try:
            values = {name: float(sec[name]) for name in _FLOAT_FIELDS}
            seed = int(sec["seed"])
            spec = ClimateZoneSpec(sec["zone"].strip(), **values)
        except ValueError as exc:
            raise InvalidConfig(f"{source}: location [{loc}]: {exc}") from None
        out.append(Location(loc, spec, seed))
    return out


def load_manifest(path: Path | None = None) -> list[Location]:
    """Read a manifest file; None loads the bundled ten-location default."""
    if path is None:
        text = resources.files("surro.fixtures").joinpath("climates.cfg").read_text()
        return parse_manifest(text, "climates.cfg")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidConfig(f"cannot read manifest {path}: {exc}") from None
    return parse_manifest(text, str(path))


def default_locations() -> dict[str, Location]:
    return {loc.location_id: loc for loc in load_manifest()}
