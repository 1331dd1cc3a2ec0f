"""Closed-form weekly energy model used as the simulation ground truth.

A steady degree-balance model of a mid-size office: no thermal mass, every
hour is balanced independently. Changing any constant below changes every
frozen regression value in the test suite.
"""
from __future__ import annotations

import numpy as np

from .sampling import DESIGN_SPACE, DesignSpace

FLOOR_AREA = 3000.0          # m2
WALL_AREA = 1000.0           # m2, gross
ROOF_AREA = 600.0            # m2
BASE_WWR = 0.33
K_INSULATION = 0.04          # W/mK
K_STRUCTURE = 1.4            # W/mK
R_FILM = 0.3                 # m2K/W
H_OUTSIDE = 17.0             # W/m2K
UA_INFILTRATION = 150.0      # W/K at zero wind
INFILTRATION_WIND = 0.05     # per m/s
HEATING_EFFICIENCY = 0.9
COOLING_COP = 3.0
LIGHTING_DENSITY = 8.0       # W/m2 while GHI > 0
COOLING_GAIN_BAND = 2.0      # K below the cooling setpoint

# column order of DESIGN_SPACE
(_WALL_INS, _ROOF_INS, _WIN_U, _SHGC, _VT, _WALL_THK, _ROOF_THK, _NORTH,
 _WALL_ABS, _ROOF_ABS, _EQUIP, _WIN_SCALE, _HEAT_SP, _COOL_SP) = range(14)


def orientation_factor(north_axis_deg):
    """Solar gain multiplier in [0.6, 1.0]; 1.0 at 0/360 deg, 0.6 at 180 deg."""
    return 0.6 + 0.2 * (1.0 + np.cos(np.asarray(north_axis_deg) * np.pi / 180.0))


def hourly_power(designs: np.ndarray, weather: np.ndarray) -> np.ndarray:
    """Electric power (W) per hour.

    ``designs`` is (..., 14) raw units and ``weather`` is (..., d_w) raw
    units; the leading axes broadcast against each other.
    """
    b = np.moveaxis(np.asarray(designs, dtype=np.float64), -1, 0)
    w = np.moveaxis(np.asarray(weather, dtype=np.float64), -1, 0)
    temp, ghi, wind = w[0], w[2], w[3]

    glazing = BASE_WWR * b[_WIN_SCALE] * WALL_AREA
    u_wall = 1.0 / (R_FILM + b[_WALL_INS] / K_INSULATION + b[_WALL_THK] / K_STRUCTURE)
    u_roof = 1.0 / (R_FILM + b[_ROOF_INS] / K_INSULATION + b[_ROOF_THK] / K_STRUCTURE)
    ua_wall = u_wall * (WALL_AREA - glazing)
    ua_roof = u_roof * ROOF_AREA
    ua_window = b[_WIN_U] * glazing
    ua_inf = UA_INFILTRATION * (1.0 + INFILTRATION_WIND * wind)
    ua = ua_wall + ua_roof + ua_window + ua_inf

    t_sa_wall = temp + b[_WALL_ABS] * ghi / H_OUTSIDE
    t_sa_roof = temp + b[_ROOF_ABS] * ghi / H_OUTSIDE
    t_env = (ua_wall * t_sa_wall + ua_roof * t_sa_roof + (ua_window + ua_inf) * temp) / ua

    q_sol = b[_SHGC] * glazing * ghi * orientation_factor(b[_NORTH])
    q_int = b[_EQUIP] * FLOOR_AREA

    heating = np.maximum(0.0, ua * (b[_HEAT_SP] - t_env) - q_sol - q_int) / HEATING_EFFICIENCY
    gain_on = t_env > b[_COOL_SP] - COOLING_GAIN_BAND
    cooling = np.maximum(0.0, ua * (t_env - b[_COOL_SP]) + q_sol + q_int * gain_on) / COOLING_COP
    lighting = np.where(ghi > 0.0,
                        LIGHTING_DENSITY * FLOOR_AREA * (1.0 - 0.3 * b[_VT] * b[_WIN_SCALE]),
                        0.0)
    return heating + cooling + lighting + q_int


def simulate_weekly_energy(b: np.ndarray, raw_week: np.ndarray,
                           space: DesignSpace = DESIGN_SPACE) -> float:
    """Energy (kWh) of design ``b`` over one raw-unit week of shape (T, d_w)."""
    b = space.check(b)
    return float(hourly_power(b, np.asarray(raw_week)).sum() / 1000.0)


def simulate_weeks(designs: np.ndarray, raw_weeks: np.ndarray,
                   space: DesignSpace = DESIGN_SPACE) -> np.ndarray:
    """Weekly energy for every (design, week) pair.

    designs: (m, 14) raw units; raw_weeks: (n, T, d_w). Returns (m, n) kWh.
    Each entry equals ``simulate_weekly_energy`` for that pair.
    """
    designs = space.check(np.atleast_2d(designs))
    raw_weeks = np.asarray(raw_weeks, dtype=np.float64)
    out = np.empty((designs.shape[0], raw_weeks.shape[0]))
    for i, b in enumerate(designs):
        out[i] = hourly_power(b, raw_weeks).sum(axis=-1) / 1000.0
    return out
