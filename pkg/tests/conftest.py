import numpy as np
import pytest

import shiftshare_lens as ssl


def random_config(rng: np.random.Generator, zero_noise: bool = True,
                  max_g: int = 50, max_s: int = 20, max_t: int = 4,
                  weighted: bool = False) -> ssl.SimConfig:
    """A random small design; effects heterogeneous at every margin."""
    G = int(rng.integers(4, max_g + 1))
    S = int(rng.integers(2, max_s + 1))
    T = int(rng.integers(2, max_t + 1))
    P = T - 1
    return ssl.SimConfig(
        n_locations=G, n_sectors=S, n_periods=T,
        shock_mean=rng.normal(0.0, 1.0, S), shock_scale=rng.uniform(0.2, 1.5),
        beta_mode="cell", beta_mean=rng.normal(1.0, 0.5), beta_sd=0.6,
        alpha_mode="location_period", alpha_mean=rng.normal(0.5, 0.3),
        alpha_sd=0.4,
        mu_d=rng.normal(0.0, 0.8, P), mu_y=rng.normal(0.0, 0.8, P),
        noise_d=0.0 if zero_noise else 0.5,
        noise_y=0.0 if zero_noise else 0.5,
        location_weights=rng.uniform(0.5, 3.0, G) if weighted else None,
    )


def random_dataset(seed: int, **kwargs) -> tuple:
    rng = np.random.default_rng(seed)
    config = random_config(rng, **kwargs)
    ds, truth = ssl.simulate(config, seed=int(rng.integers(0, 2**31)))
    return ds, truth


@pytest.fixture
def toy_csv_dir(tmp_path):
    """2 locations x 2 sectors x 2 evolution periods, hand-written CSVs."""
    (tmp_path / "panel.csv").write_text(
        "location,period,d,y\n"
        "ga,t2,1.0,2.0\nga,t3,1.5,2.5\n"
        "gb,t2,3.0,4.0\ngb,t3,3.5,4.5\n")
    (tmp_path / "shocks.csv").write_text(
        "sector,period,shock\n"
        "s1,t2,0.1\ns1,t3,0.2\n"
        "s2,t2,0.3\ns2,t3,0.4\n")
    (tmp_path / "shares.csv").write_text(
        "sector,location,share\n"
        "s1,ga,0.6\ns2,ga,0.4\n"
        "s1,gb,0.2\ns2,gb,0.8\n")
    return tmp_path
