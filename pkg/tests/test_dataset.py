import numpy as np
import pytest

from surro.dataset import build_dataset, load_dataset, save_dataset
from surro.errors import MalformedData
from surro.oracle import simulate_weekly_energy
from surro.sampling import DESIGN_SPACE
from surro.weather import fit_scaler, window_weeks


@pytest.fixture(scope="module")
def pair(years):
    locs = [years["z2a"], years["z3a"]]
    scaler = fit_scaler([window_weeks(y) for y in locs], "z2a+z3a")
    return locs, scaler


def test_sample_counts(pair):
    locs, scaler = pair
    assert len(build_dataset(locs[:1], DESIGN_SPACE, 50, 0, scaler)) == 2600
    assert len(build_dataset(locs, DESIGN_SPACE, 50, 0, scaler)) == 5200


def test_sample_order_and_targets(pair):
    locs, scaler = pair
    ds = build_dataset(locs, DESIGN_SPACE, 3, 4, scaler)
    samples = list(ds.samples)
    assert [(s.location_id, s.design_index, s.week_index) for s in samples[:3]] == \
        [("z2a", 0, 0), ("z2a", 0, 1), ("z2a", 0, 2)]
    s = samples[52 * 3 + 52 + 7]
    assert (s.location_id, s.design_index, s.week_index) == ("z3a", 1, 7)
    raw = window_weeks(locs[1])[7]
    assert s.target == pytest.approx(simulate_weekly_energy(ds.designs[1], raw), rel=1e-12)
    np.testing.assert_array_equal(s.week.values, scaler.transform_array(raw))
    assert s.week.values.shape == (168, 4)
    assert np.all((s.design_scaled >= 0) & (s.design_scaled <= 1))


def test_deterministic(pair):
    locs, scaler = pair
    a = build_dataset(locs, DESIGN_SPACE, 5, 9, scaler)
    b = build_dataset(locs, DESIGN_SPACE, 5, 9, scaler)
    assert a.targets.tobytes() == b.targets.tobytes()
    assert a.designs.tobytes() == b.designs.tobytes()


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_save_load_save_identical(tmp_path, pair):
    locs, scaler = pair
    ds = build_dataset(locs, DESIGN_SPACE, 4, 2, scaler)
    save_dataset(ds, tmp_path / "a")
    back = load_dataset(tmp_path / "a", DESIGN_SPACE)
    save_dataset(back, tmp_path / "b")
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")
    assert back.targets.tobytes() == ds.targets.tobytes()
    assert back.location_ids == ["z2a", "z3a"]


def test_load_rejects_missing_rows(tmp_path, pair):
    locs, scaler = pair
    save_dataset(build_dataset(locs[:1], DESIGN_SPACE, 2, 0, scaler), tmp_path)
    t = tmp_path / "z2a" / "targets.csv"
    t.write_text("\n".join(t.read_text().splitlines()[:-1]) + "\n")
    with pytest.raises(MalformedData):
        load_dataset(tmp_path, DESIGN_SPACE)


def test_load_missing_directory(tmp_path):
    with pytest.raises(MalformedData):
        load_dataset(tmp_path / "nope", DESIGN_SPACE)
