import numpy as np
import pytest

import shiftshare_lens as ssl
from shiftshare_lens import errors

from conftest import random_dataset


def test_toy_load_echoes_inputs(toy_csv_dir):
    ds = ssl.load_dataset(toy_csv_dir / "panel.csv", toy_csv_dir / "shocks.csv",
                          toy_csv_dir / "shares.csv")
    assert ds.locations == ("ga", "gb")
    assert ds.sectors == ("s1", "s2")
    assert ds.periods == ("t2", "t3")
    assert ds.n_locations == 2 and ds.n_sectors == 2
    assert ds.n_evolution_periods == 2
    np.testing.assert_array_equal(ds.d_evol, [[1.0, 1.5], [3.0, 3.5]])
    np.testing.assert_array_equal(ds.y_evol, [[2.0, 2.5], [4.0, 4.5]])
    np.testing.assert_array_equal(ds.shocks, [[0.1, 0.2], [0.3, 0.4]])
    np.testing.assert_array_equal(ds.shares, [[0.6, 0.2], [0.4, 0.8]])


def test_missing_share_cell_is_zero_with_warning(toy_csv_dir):
    (toy_csv_dir / "shares.csv").write_text(
        "sector,location,share\n"
        "s1,ga,0.6\ns2,ga,0.4\ns1,gb,0.2\n")  # (s2,gb) omitted
    with pytest.warns(errors.ShiftShareWarning):
        ds = ssl.load_dataset(toy_csv_dir / "panel.csv",
                              toy_csv_dir / "shocks.csv",
                              toy_csv_dir / "shares.csv")
    assert ds.shares[1, 1] == 0.0


def test_nan_panel_value_rejected(toy_csv_dir):
    (toy_csv_dir / "panel.csv").write_text(
        "location,period,d,y\n"
        "ga,t2,NaN,2.0\nga,t3,1.5,2.5\n"
        "gb,t2,3.0,4.0\ngb,t3,3.5,4.5\n")
    with pytest.raises(errors.NonFinite):
        ssl.load_dataset(toy_csv_dir / "panel.csv", toy_csv_dir / "shocks.csv",
                         toy_csv_dir / "shares.csv")


def test_duplicate_panel_key_rejected(toy_csv_dir):
    (toy_csv_dir / "panel.csv").write_text(
        "location,period,d,y\n"
        "ga,t2,1.0,2.0\nga,t2,9.9,9.9\n"
        "gb,t2,3.0,4.0\ngb,t3,3.5,4.5\n")
    with pytest.raises(errors.DuplicateKey):
        ssl.load_dataset(toy_csv_dir / "panel.csv", toy_csv_dir / "shocks.csv",
                         toy_csv_dir / "shares.csv")


def test_missing_column_rejected(toy_csv_dir):
    (toy_csv_dir / "shocks.csv").write_text(
        "sector,period\ns1,t2\ns1,t3\ns2,t2\ns2,t3\n")
    with pytest.raises(errors.MissingColumn):
        ssl.load_dataset(toy_csv_dir / "panel.csv", toy_csv_dir / "shocks.csv",
                         toy_csv_dir / "shares.csv")


def test_period_mismatch_rejected(toy_csv_dir):
    (toy_csv_dir / "shocks.csv").write_text(
        "sector,period,shock\ns1,t2,0.1\ns2,t2,0.3\n")
    with pytest.raises(errors.UnknownIdentifier):
        ssl.load_dataset(toy_csv_dir / "panel.csv", toy_csv_dir / "shocks.csv",
                         toy_csv_dir / "shares.csv")


def test_unbalanced_panel_rejected(toy_csv_dir):
    (toy_csv_dir / "panel.csv").write_text(
        "location,period,d,y\n"
        "ga,t2,1.0,2.0\nga,t3,1.5,2.5\ngb,t2,3.0,4.0\n")
    with pytest.raises(errors.UnbalancedPanel):
        ssl.load_dataset(toy_csv_dir / "panel.csv", toy_csv_dir / "shocks.csv",
                         toy_csv_dir / "shares.csv")


def test_validate_flags_and_errors():
    ds, _ = random_dataset(3)
    report = ssl.validate_dataset(ds)
    assert report.ok
    assert report.share_sum_flag  # simplex shares sum to one

    # scaled shares: no longer summing to one, but still acceptable
    scaled = ssl.ShiftShareDataset(
        locations=ds.locations, sectors=ds.sectors, periods=ds.periods,
        d_evol=ds.d_evol, y_evol=ds.y_evol, shocks=ds.shocks,
        shares=ds.shares * 0.7)
    rep2 = ssl.validate_dataset(scaled)
    assert rep2.ok and not rep2.share_sum_flag

    negative = ssl.ShiftShareDataset(
        locations=ds.locations, sectors=ds.sectors, periods=ds.periods,
        d_evol=ds.d_evol, y_evol=ds.y_evol, shocks=ds.shocks,
        shares=ds.shares - 2.0)
    rep3 = ssl.validate_dataset(negative)
    assert any(code == "NegativeShare" for code, _, _ in rep3.errors)


def test_validate_rejects_degenerate_shapes():
    ds = ssl.ShiftShareDataset(
        locations=("a",), sectors=("s",), periods=("t2",),
        d_evol=np.zeros((1, 1)), y_evol=np.zeros((1, 1)),
        shocks=np.zeros((1, 1)), shares=np.ones((1, 1)))
    report = ssl.validate_dataset(ds)
    assert not report.ok
    assert any(code == "DegenerateShape" for code, _, _ in report.errors)


def test_validate_rejects_bad_weights():
    ds, _ = random_dataset(4)
    bad = ssl.ShiftShareDataset(
        locations=ds.locations, sectors=ds.sectors, periods=ds.periods,
        d_evol=ds.d_evol, y_evol=ds.y_evol, shocks=ds.shocks,
        shares=ds.shares, location_weights=np.zeros(ds.n_locations))
    report = ssl.validate_dataset(bad)
    assert any(code == "NonPositiveWeight" for code, _, _ in report.errors)


@pytest.mark.parametrize("seed,kwargs", [
    (11, {}),
    (12, {"weighted": True}),
])
def test_round_trip_is_bit_exact(tmp_path, seed, kwargs):
    ds, _ = random_dataset(seed, **kwargs)
    ssl.write_dataset(ds, tmp_path)
    again = ssl.load_dataset(tmp_path / "panel.csv", tmp_path / "shocks.csv",
                             tmp_path / "shares.csv")
    assert again.locations == ds.locations
    assert again.sectors == ds.sectors
    assert again.periods == ds.periods
    np.testing.assert_array_equal(again.d_evol, ds.d_evol)
    np.testing.assert_array_equal(again.y_evol, ds.y_evol)
    np.testing.assert_array_equal(again.shocks, ds.shocks)
    np.testing.assert_array_equal(again.shares, ds.shares)
    if ds.location_weights is None:
        assert again.location_weights is None
    else:
        np.testing.assert_array_equal(again.location_weights,
                                      ds.location_weights)


def test_round_trip_per_location_shocks_and_tv_shares(tmp_path):
    rng = np.random.default_rng(9)
    S, G, P = 3, 4, 2
    levels = rng.uniform(0.5, 2.0, (S, G, P + 1))
    shocks = ssl.leave_one_out_shocks(levels, "log_diff")
    shares = rng.dirichlet(np.ones(S), size=(G, P)).transpose(2, 0, 1)
    ds = ssl.ShiftShareDataset(
        locations=tuple(f"g{i}" for i in range(G)),
        sectors=tuple(f"s{i}" for i in range(S)),
        periods=("t2", "t3"),
        d_evol=rng.standard_normal((G, P)), y_evol=rng.standard_normal((G, P)),
        shocks=shocks, shares=shares)
    assert ds.per_location_shocks and ds.time_varying_shares
    ssl.write_dataset(ds, tmp_path)
    again = ssl.load_dataset(tmp_path / "panel.csv", tmp_path / "shocks.csv",
                             tmp_path / "shares.csv")
    assert again.per_location_shocks and again.time_varying_shares
    np.testing.assert_array_equal(again.shocks, ds.shocks)
    np.testing.assert_array_equal(again.shares, ds.shares)


def test_covariate_round_trip(tmp_path):
    ds0, _ = random_dataset(21)
    rng = np.random.default_rng(0)
    ds = ssl.ShiftShareDataset(
        locations=ds0.locations, sectors=ds0.sectors, periods=ds0.periods,
        d_evol=ds0.d_evol, y_evol=ds0.y_evol, shocks=ds0.shocks,
        shares=ds0.shares,
        sector_covariates=rng.standard_normal((ds0.n_sectors, 2)),
        sector_covariate_names=("wage", "college"),
        location_covariates=rng.standard_normal((ds0.n_locations, 1)),
        location_covariate_names=("unemployment",))
    paths = ssl.write_dataset(ds, tmp_path)
    again = ssl.load_dataset(
        tmp_path / "panel.csv", tmp_path / "shocks.csv",
        tmp_path / "shares.csv",
        ssl.LoadOptions(sector_covariates_path=paths["sector_covariates"],
                        location_covariates_path=paths["location_covariates"]))
    np.testing.assert_array_equal(again.sector_covariates,
                                  ds.sector_covariates)
    assert again.sector_covariate_names == ("wage", "college")
    np.testing.assert_array_equal(again.location_covariates,
                                  ds.location_covariates)


def test_load_ordering_deterministic(tmp_path):
    # rows written in scrambled order must load into lexicographic order
    (tmp_path / "panel.csv").write_text(
        "location,period,d,y\n"
        "gb,t3,3.5,4.5\nga,t2,1.0,2.0\ngb,t2,3.0,4.0\nga,t3,1.5,2.5\n")
    (tmp_path / "shocks.csv").write_text(
        "sector,period,shock\n"
        "s2,t3,0.4\ns1,t2,0.1\ns2,t2,0.3\ns1,t3,0.2\n")
    (tmp_path / "shares.csv").write_text(
        "sector,location,share\n"
        "s2,gb,0.8\ns1,ga,0.6\ns2,ga,0.4\ns1,gb,0.2\n")
    first = ssl.load_dataset(tmp_path / "panel.csv", tmp_path / "shocks.csv",
                             tmp_path / "shares.csv")
    second = ssl.load_dataset(tmp_path / "panel.csv", tmp_path / "shocks.csv",
                              tmp_path / "shares.csv")
    assert first.locations == second.locations == ("ga", "gb")
    np.testing.assert_array_equal(first.d_evol, second.d_evol)
    np.testing.assert_array_equal(first.d_evol, [[1.0, 1.5], [3.0, 3.5]])
