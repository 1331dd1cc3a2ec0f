import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surro.errors import InvalidArgument, ShapeError
from surro.sampling import (DESIGN_SPACE, designs_from_csv, designs_to_csv, lhs_sample,
                            normalize_design)


def strata_ok(designs, n):
    unit = (designs - DESIGN_SPACE.lo) / (DESIGN_SPACE.hi - DESIGN_SPACE.lo)
    bins = np.floor(unit * n).astype(int)
    return all(sorted(bins[:, j]) == list(range(n)) for j in range(DESIGN_SPACE.dim))


def test_fourteen_parameters_in_order():
    assert DESIGN_SPACE.dim == 14
    assert DESIGN_SPACE.names[0] == "wall_insulation_m"
    assert DESIGN_SPACE.names[-1] == "cooling_setpoint_c"
    i = DESIGN_SPACE.index("north_axis_deg")
    assert (DESIGN_SPACE.lo[i], DESIGN_SPACE.hi[i]) == (0.0, 360.0)


@pytest.mark.parametrize("n", [1, 4, 50, 1000])
def test_one_sample_per_stratum(n):
    d = lhs_sample(DESIGN_SPACE, n, seed=7)
    assert d.shape == (n, 14)
    assert strata_ok(d, n)
    assert np.array_equal(d, lhs_sample(DESIGN_SPACE, n, seed=7))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 200), st.integers(0, 2**32))
def test_stratification_property(n, seed):
    d = lhs_sample(DESIGN_SPACE, n, seed)
    assert strata_ok(d, n)
    assert np.all(d >= DESIGN_SPACE.lo) and np.all(d <= DESIGN_SPACE.hi)


def test_seeds_differ_and_bad_n():
    assert not np.array_equal(lhs_sample(DESIGN_SPACE, 10, 1), lhs_sample(DESIGN_SPACE, 10, 2))
    for bad in (0, -3, 2.5):
        with pytest.raises(InvalidArgument):
            lhs_sample(DESIGN_SPACE, bad, 1)


def test_normalize_and_range_checks():
    assert np.allclose(normalize_design(DESIGN_SPACE, DESIGN_SPACE.midpoint()), 0.5)
    b = DESIGN_SPACE.midpoint()
    b[3] = 0.95
    with pytest.raises(InvalidArgument, match="window_shgc"):
        normalize_design(DESIGN_SPACE, b)
    with pytest.raises(ShapeError):
        normalize_design(DESIGN_SPACE, np.zeros(13))


def test_csv_round_trip(tmp_path):
    d = lhs_sample(DESIGN_SPACE, 6, 3)
    p = tmp_path / "designs.csv"
    p.write_text(designs_to_csv(DESIGN_SPACE, d))
    assert np.array_equal(designs_from_csv(DESIGN_SPACE, p), d)
