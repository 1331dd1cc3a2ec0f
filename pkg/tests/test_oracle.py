import math

import numpy as np
import pytest

from surro.errors import InvalidArgument
from surro.oracle import simulate_weekly_energy, simulate_weeks
from surro.sampling import DESIGN_SPACE, lhs_sample
from surro.weather import window_weeks

MID = DESIGN_SPACE.midpoint()
IDX = {name: i for i, name in enumerate(DESIGN_SPACE.names)}


def scalar_week_kwh(b, week):
    """Hour-by-hour re-derivation of the degree-balance model, written
    without numpy so it shares no code with the package."""
    (wall_ins, roof_ins, win_u, shgc, vt, wall_thk, roof_thk, north, wall_abs, roof_abs,
     equip, win_scale, heat_sp, cool_sp) = [float(v) for v in b]
    a_floor, a_wall, a_roof = 3000.0, 1000.0, 600.0
    a_glass = 0.33 * win_scale * a_wall
    u_wall = 1.0 / (0.3 + wall_ins / 0.04 + wall_thk / 1.4)
    u_roof = 1.0 / (0.3 + roof_ins / 0.04 + roof_thk / 1.4)
    orient = 0.6 + 0.2 * (1.0 + math.cos(north * math.pi / 180.0))
    total = 0.0
    for temp, _rh, ghi, wind in week:
        ua_w = u_wall * (a_wall - a_glass)
        ua_r = u_roof * a_roof
        ua_g = win_u * a_glass
        ua_i = 150.0 * (1.0 + 0.05 * wind)
        ua = ua_w + ua_r + ua_g + ua_i
        t_env = (ua_w * (temp + wall_abs * ghi / 17.0) + ua_r * (temp + roof_abs * ghi / 17.0)
                 + (ua_g + ua_i) * temp) / ua
        q_sol = shgc * a_glass * ghi * orient
        q_int = equip * a_floor
        heat = max(0.0, ua * (heat_sp - t_env) - q_sol - q_int) / 0.9
        gain = q_int if t_env > cool_sp - 2.0 else 0.0
        cool = max(0.0, ua * (t_env - cool_sp) + q_sol + gain) / 3.0
        light = 8.0 * a_floor * (1.0 - 0.3 * vt * win_scale) if ghi > 0 else 0.0
        total += heat + cool + light + q_int
    return total / 1000.0


def cold_week():
    h = np.arange(168)
    hod = h % 24
    temp = -12.0 + 5.0 * np.sin(2 * np.pi * (hod - 9) / 24)
    ghi = np.where((hod >= 6) & (hod <= 18), 400.0 * np.sin(np.pi * (hod - 6) / 12), 0.0)
    ghi = np.maximum(ghi, 0.0)
    return np.column_stack([temp, np.full(168, 75.0), ghi, 3.0 + (h % 7) * 0.5])


def constant_week(temp, ghi=0.0, wind=0.0):
    return np.tile([temp, 50.0, ghi, wind], (168, 1)).astype(float)


# frozen from scalar_week_kwh(MID, cold_week()) on first derivation
COLD_WEEK_MIDPOINT_KWH = 8012.505107253027


def test_deadband_week_is_equipment_only():
    b = MID.copy()
    b[IDX["heating_setpoint_c"]], b[IDX["cooling_setpoint_c"]] = 20.0, 26.0
    kwh = simulate_weekly_energy(b, constant_week(23.0))
    assert kwh == pytest.approx(168 * b[IDX["equipment_gain_wm2"]] * 3000.0 / 1000.0, rel=1e-12)


def test_regression_constant_matches_independent_scalar():
    assert scalar_week_kwh(MID, cold_week()) == pytest.approx(COLD_WEEK_MIDPOINT_KWH, rel=1e-12)
    assert simulate_weekly_energy(MID, cold_week()) == pytest.approx(COLD_WEEK_MIDPOINT_KWH,
                                                                     rel=1e-12)


def test_vectorised_agrees_with_scalar_on_random_inputs(years):
    designs = lhs_sample(DESIGN_SPACE, 6, seed=11)
    weeks = window_weeks(years["z2a"])[::13]
    got = simulate_weeks(designs, weeks)
    for i, b in enumerate(designs):
        for j, w in enumerate(weeks):
            assert got[i, j] == pytest.approx(scalar_week_kwh(b, w), rel=1e-11)


def test_deterministic():
    a = simulate_weekly_energy(MID, cold_week())
    b = simulate_weekly_energy(MID, cold_week())
    assert a == b


def test_every_parameter_moves_annual_energy(years):
    weeks = window_weeks(years["z5a"])
    base = simulate_weeks(MID, weeks).sum()
    for name, j in IDX.items():
        b = MID.copy()
        b[j] = DESIGN_SPACE.hi[j]
        delta = simulate_weeks(b, weeks).sum() - base
        assert abs(delta) > 1e-6, name


def test_wall_insulation_lowers_heating_energy():
    week = constant_week(-15.0)
    energies = []
    for v in np.linspace(0.02, 0.10, 5):
        b = MID.copy()
        b[IDX["wall_insulation_m"]] = v
        energies.append(simulate_weekly_energy(b, week))
    assert all(x > y for x, y in zip(energies, energies[1:]))


def test_equipment_gain_raises_energy_when_not_heating():
    # mild and hot constant weeks: no heating hours, so more equipment means more energy
    for temp in (21.0, 24.0, 32.0):
        week = constant_week(temp, ghi=300.0)
        energies = []
        for v in np.linspace(5.0, 15.0, 5):
            b = MID.copy()
            b[IDX["equipment_gain_wm2"]] = v
            energies.append(simulate_weekly_energy(b, week))
        assert all(x < y for x, y in zip(energies, energies[1:])), temp


def test_equipment_gain_lowers_fully_heated_week():
    # every hour heated: d(heat/0.9 + q_int)/d q_int = 1 - 1/0.9 < 0
    week = constant_week(-20.0)
    lo, hi = MID.copy(), MID.copy()
    lo[IDX["equipment_gain_wm2"]], hi[IDX["equipment_gain_wm2"]] = 5.0, 15.0
    d = simulate_weekly_energy(hi, week) - simulate_weekly_energy(lo, week)
    assert d == pytest.approx(168 * 10.0 * 3000.0 * (1 - 1 / 0.9) / 1000.0, rel=1e-9)


def test_out_of_range_design_rejected():
    b = MID.copy()
    b[IDX["window_shgc"]] = 0.9
    with pytest.raises(InvalidArgument):
        simulate_weekly_energy(b, cold_week())


def test_fuzz_finite_nonnegative():
    rng = np.random.default_rng(5)
    designs = DESIGN_SPACE.lo + rng.random((10_000, 14)) * (DESIGN_SPACE.hi - DESIGN_SPACE.lo)
    weeks = np.empty((4, 168, 4))
    weeks[..., 0] = rng.uniform(-45, 45, (4, 168))
    weeks[..., 1] = rng.uniform(0, 100, (4, 168))
    weeks[..., 2] = rng.uniform(0, 1100, (4, 168)) * (rng.random((4, 168)) > 0.5)
    weeks[..., 3] = rng.uniform(0, 25, (4, 168))
    out = simulate_weeks(designs, weeks)
    assert out.shape == (10_000, 4)
    assert np.all(np.isfinite(out)) and np.all(out >= 0)
