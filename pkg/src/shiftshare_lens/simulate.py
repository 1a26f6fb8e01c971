"""Synthetic shift-share designs with known effects, and validation harnesses.

The generator composes the linear DGP directly: treatment evolutions are a
per-period common trend plus idiosyncratic noise plus the share-weighted sum
of shocks times first-stage effects, outcome evolutions replace the effects
by their product with the location's second-stage effect. Every generating
object (shocks, shares, effects, trends) is recorded so identities and Monte
Carlo estimands can be evaluated exactly.

Two preconfigured levers matter for stress tests: sector-specific shock means
violate the equal-expected-shock assumption while leaving common trends
intact, and the exposure-correlation knobs tie location effects to realized
instrument strength, the mechanism that biases pooled instrument regressions
but not the correlated-random-coefficient estimators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .crc import BOOTSTRAP_TARGETS, CrcOptions, evaluate_targets, realized_bias_factors
from .dataset import ShiftShareDataset
from .errors import InvalidConfig, NoiseNotZero, ShiftShareError
from .instrument import BartikPanel, build_bartik
from .regress import fit_linear
from .weights import aggregate, fs_rf_cell_weights, weighted_effect_sum

SHARE_MODES = ("simplex", "identity", "matrix")
BETA_MODES = ("constant", "location", "cell")
ALPHA_MODES = ("constant", "location", "location_period")


@dataclass(frozen=True)
class SimConfig:
    """Full description of one synthetic design.

    ``n_periods`` counts raw periods; the panel has one evolution per period
    after the first. Shock means/scales may be scalars or per-sector arrays;
    ``fixed_shocks`` pins the whole shock matrix, ``zero_shock_periods``
    zeroes chosen evolution periods after drawing (the placebo premise).
    ``beta_values`` / ``alpha_values`` pin effects exactly, overriding the
    corresponding law. The ``correlate_*_with_exposure`` knobs in [-1, 1]
    tie location-level effects to the location's mean realized instrument.
    """

    n_locations: int
    n_sectors: int
    n_periods: int
    shock_mean: float | tuple | np.ndarray = 0.0
    shock_scale: float | tuple | np.ndarray = 1.0
    fixed_shocks: np.ndarray | None = None
    zero_shock_periods: tuple[int, ...] = ()
    share_mode: str = "simplex"
    share_matrix: np.ndarray | None = None
    beta_mode: str = "constant"
    beta_mean: float = 1.0
    beta_sd: float = 0.0
    beta_values: np.ndarray | None = None
    alpha_mode: str = "constant"
    alpha_mean: float = 1.0
    alpha_sd: float = 0.0
    alpha_values: np.ndarray | None = None
    mu_d: float | tuple | np.ndarray = 0.0
    mu_y: float | tuple | np.ndarray = 0.0
    noise_d: float = 0.0
    noise_y: float = 0.0
    correlate_beta_with_exposure: float = 0.0
    correlate_alpha_with_exposure: float = 0.0
    location_weights: np.ndarray | None = None

    def validate(self):
        G, S, T = self.n_locations, self.n_sectors, self.n_periods
        if G < 2 or S < 1 or T < 2:
            raise InvalidConfig("need G >= 2, S >= 1, T >= 2",
                                G=G, S=S, T=T)
        P = T - 1
        if self.share_mode not in SHARE_MODES:
            raise InvalidConfig(f"unknown share mode {self.share_mode!r}")
        if self.share_mode == "identity" and S != G:
            raise InvalidConfig("identity shares need S == G", S=S, G=G)
        if self.share_mode == "matrix":
            if self.share_matrix is None:
                raise InvalidConfig("share_mode='matrix' needs share_matrix")
            if np.asarray(self.share_matrix).shape not in ((S, G), (S, G, P)):
                raise InvalidConfig("share_matrix shape mismatch",
                                    shape=np.asarray(self.share_matrix).shape)
        if self.beta_mode not in BETA_MODES:
            raise InvalidConfig(f"unknown beta mode {self.beta_mode!r}")
        if self.alpha_mode not in ALPHA_MODES:
            raise InvalidConfig(f"unknown alpha mode {self.alpha_mode!r}")
        if self.noise_d < 0 or self.noise_y < 0:
            raise InvalidConfig("noise scales must be nonnegative")
        if np.any(np.asarray(self.shock_scale, dtype=float) < 0):
            raise InvalidConfig("shock scales must be nonnegative")
        for name in ("correlate_beta_with_exposure",
                     "correlate_alpha_with_exposure"):
            c = getattr(self, name)
            if not -1.0 <= c <= 1.0:
                raise InvalidConfig(f"{name} must be in [-1, 1]", value=c)
            if c != 0.0 and self.beta_mode != "location" and name.startswith(
                    "correlate_beta"):
                raise InvalidConfig("exposure correlation for the first stage "
                                    "needs beta_mode='location'")
            if c != 0.0 and self.alpha_mode == "location_period" and \
                    name.startswith("correlate_alpha"):
                raise InvalidConfig("exposure correlation for the second "
                                    "stage needs a per-location alpha")
        if self.fixed_shocks is not None and \
                np.asarray(self.fixed_shocks).shape != (S, P):
            raise InvalidConfig("fixed_shocks must be sectors x evolutions",
                                shape=np.asarray(self.fixed_shocks).shape)
        for t in self.zero_shock_periods:
            if not 0 <= t < P:
                raise InvalidConfig("zero_shock_periods indexes evolution "
                                    "periods", index=t)
        if self.location_weights is not None:
            w = np.asarray(self.location_weights, dtype=float)
            if w.shape != (G,) or np.any(w <= 0):
                raise InvalidConfig("location_weights must be positive, "
                                    "one per location")


@dataclass(frozen=True)
class SimTruth:
    """The generating objects behind one simulated dataset."""

    beta: np.ndarray       # (S, G, P)
    alpha: np.ndarray      # (G, P)
    gamma: np.ndarray      # (S, G, P), exactly alpha * beta
    mu_d: np.ndarray       # (P,)
    mu_y: np.ndarray       # (P,)
    shocks: np.ndarray     # (S, P)
    shares: np.ndarray     # (S, G) or (S, G, P)
    noise_d: float
    noise_y: float
    seed: int

    def location_beta(self) -> np.ndarray:
        """Per-location first-stage effects averaged over sectors and periods."""
        return self.beta.mean(axis=(0, 2))

    def location_gamma(self) -> np.ndarray:
        return self.gamma.mean(axis=(0, 2))

    def location_alpha(self) -> np.ndarray:
        return self.alpha.mean(axis=1)

    def fs_weighted_ratio(self) -> float:
        """Second-stage effects averaged with first-stage-proportional weights."""
        b = self.location_beta()
        return float((b / b.sum()) @ self.location_alpha())


def _per_sector(value, S: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(S, float(arr))
    if arr.shape != (S,):
        raise InvalidConfig("per-sector parameter has wrong length",
                            shape=arr.shape)
    return arr


def _per_period(value, P: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(P, float(arr))
    if arr.shape != (P,):
        raise InvalidConfig("per-period parameter has wrong length",
                            shape=arr.shape)
    return arr


def _standardize(v: np.ndarray) -> np.ndarray:
    sd = v.std()
    if sd == 0.0:
        return np.zeros_like(v)
    return (v - v.mean()) / sd


def simulate(config: SimConfig, seed: int) -> tuple[ShiftShareDataset, SimTruth]:
    """Draw one dataset; identical seeds give identical output.

    Draw order is fixed (shocks, shares, first-stage effects, second-stage
    effects, treatment noise, outcome noise) so adding downstream draws never
    perturbs upstream ones.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    G, S, T = config.n_locations, config.n_sectors, config.n_periods
    P = T - 1

    if config.fixed_shocks is not None:
        shocks = np.array(config.fixed_shocks, dtype=float)
    else:
        mean = _per_sector(config.shock_mean, S)
        scale = _per_sector(config.shock_scale, S)
        shocks = mean[:, None] + scale[:, None] * rng.standard_normal((S, P))
    for t in config.zero_shock_periods:
        shocks[:, t] = 0.0

    if config.share_mode == "identity":
        shares = np.eye(S)
    elif config.share_mode == "matrix":
        shares = np.array(config.share_matrix, dtype=float)
    else:
        shares = rng.dirichlet(np.ones(S), size=G).T    # (S, G), columns sum to 1

    static_shares = shares if shares.ndim == 2 else shares[:, :, 0]
    z = static_shares.T @ shocks if shares.ndim == 2 else \
        np.einsum("sgt,st->gt", shares, shocks)
    strength = _standardize(z.mean(axis=1))

    if config.beta_values is not None:
        beta = np.broadcast_to(
            np.asarray(config.beta_values, dtype=float), (S, G, P)).copy()
    elif config.beta_mode == "constant":
        beta = np.full((S, G, P), config.beta_mean)
    elif config.beta_mode == "location":
        c = config.correlate_beta_with_exposure
        eps = rng.standard_normal(G)
        mix = c * strength + np.sqrt(1.0 - c * c) * eps
        beta_g = config.beta_mean + config.beta_sd * mix
        beta = np.broadcast_to(beta_g[None, :, None], (S, G, P)).copy()
    else:
        beta = config.beta_mean + config.beta_sd * rng.standard_normal((S, G, P))

    if config.alpha_values is not None:
        alpha = np.broadcast_to(
            np.asarray(config.alpha_values, dtype=float), (G, P)).copy()
    elif config.alpha_mode == "constant":
        alpha = np.full((G, P), config.alpha_mean)
    elif config.alpha_mode == "location":
        c = config.correlate_alpha_with_exposure
        eps = rng.standard_normal(G)
        mix = c * strength + np.sqrt(1.0 - c * c) * eps
        alpha_g = config.alpha_mean + config.alpha_sd * mix
        alpha = np.broadcast_to(alpha_g[:, None], (G, P)).copy()
    else:
        alpha = config.alpha_mean + config.alpha_sd * rng.standard_normal((G, P))

    gamma = alpha[None, :, :] * beta
    mu_d = _per_period(config.mu_d, P)
    mu_y = _per_period(config.mu_y, P)

    eps_d = config.noise_d * rng.standard_normal((G, P))
    eps_y = config.noise_y * rng.standard_normal((G, P))
    if shares.ndim == 2:
        effect_d = np.einsum("sg,st,sgt->gt", shares, shocks, beta)
        effect_y = np.einsum("sg,st,sgt->gt", shares, shocks, gamma)
    else:
        effect_d = np.einsum("sgt,st,sgt->gt", shares, shocks, beta)
        effect_y = np.einsum("sgt,st,sgt->gt", shares, shocks, gamma)
    d_evol = mu_d[None, :] + eps_d + effect_d
    y_evol = mu_y[None, :] + eps_y + effect_y

    width_g = len(str(G))
    width_s = len(str(S))
    width_t = len(str(T))
    ds = ShiftShareDataset(
        locations=tuple(f"g{i + 1:0{width_g}d}" for i in range(G)),
        sectors=tuple(f"s{i + 1:0{width_s}d}" for i in range(S)),
        periods=tuple(f"t{i + 2:0{width_t}d}" for i in range(P)),
        d_evol=d_evol, y_evol=y_evol, shocks=shocks, shares=shares,
        location_weights=None if config.location_weights is None
        else np.array(config.location_weights, dtype=float))
    truth = SimTruth(beta=beta, alpha=alpha, gamma=gamma, mu_d=mu_d,
                     mu_y=mu_y, shocks=shocks.copy(), shares=shares.copy(),
                     noise_d=config.noise_d, noise_y=config.noise_y,
                     seed=seed)
    return ds, truth


def make_sign_reversal_dataset() -> tuple[ShiftShareDataset, SimTruth]:
    """A fixed design whose pooled IV slope is negative although every
    second-stage effect is positive.

    The instrument takes values (0.2, 1, 3) across three locations with
    identity shares; the two below-average locations carry negative weights.
    Giving them large second-stage effects (20) and the dominant location a
    small one (0.1), with first-stage effects (1, 1, 10) keeping the first
    stage positive, drives the IV slope to -8/47.36, about -0.169.
    """
    config = SimConfig(
        n_locations=3, n_sectors=3, n_periods=2,
        fixed_shocks=np.array([[0.2], [1.0], [3.0]]),
        share_mode="identity",
        beta_values=np.array([1.0, 1.0, 10.0])[None, :, None],
        alpha_values=np.array([20.0, 20.0, 0.1])[:, None],
    )
    return simulate(config, seed=0)


# ---------------------------------------------------------------------------
# identity oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleReport:
    """Absolute gaps between realized slopes and their weight reconstructions."""

    gaps: dict[str, float]
    slopes: dict[str, float]

    @property
    def max_gap(self) -> float:
        return max(self.gaps.values())


def decomposition_oracle(ds: ShiftShareDataset, bartik: BartikPanel,
                         truth: SimTruth, strict: bool = True) -> OracleReport:
    """Check every realized decomposition identity against the known effects.

    At zero noise each pooled slope must equal the weight-weighted sum of
    true effects (plus, without fixed effects, the trend bias terms), and
    the IV slope must equal the sign-rule weighting of second-stage effects.
    """
    if strict and (truth.noise_d > 0 or truth.noise_y > 0):
        raise NoiseNotZero("identities are exact only at zero noise",
                           noise_d=truth.noise_d, noise_y=truth.noise_y)
    weights = ds.location_weights if bartik.weighted else None

    dec_fe = fs_rf_cell_weights(ds, bartik, "period_fe")
    dec_nc = fs_rf_cell_weights(ds, bartik, "no_fe")

    fs_fe = fit_linear(ds.d_evol, bartik.z, "period_fe", weights)
    rf_fe = fit_linear(ds.y_evol, bartik.z, "period_fe", weights)
    fs_nc = fit_linear(ds.d_evol, bartik.z, "none", weights)
    rf_nc = fit_linear(ds.y_evol, bartik.z, "none", weights)

    gaps = {
        "fs_period_fe": abs(fs_fe.slope - weighted_effect_sum(dec_fe, truth.beta)),
        "rf_period_fe": abs(rf_fe.slope - weighted_effect_sum(dec_fe, truth.gamma)),
        "fs_no_fe": abs(fs_nc.slope
                        - weighted_effect_sum(dec_nc, truth.beta)
                        - float(dec_nc.bias_factors @ truth.mu_d)),
        "rf_no_fe": abs(rf_nc.slope
                        - weighted_effect_sum(dec_nc, truth.gamma)
                        - float(dec_nc.bias_factors @ truth.mu_y)),
    }

    # IV slope as sign-rule-weighted second-stage effects
    wb = np.zeros(ds.d_evol.shape)
    for (s, g, t), w in dec_fe.weights.items():
        wb[g, t] += w * truth.beta[s, g, t]
    tsls = rf_fe.slope / fs_fe.slope
    gaps["tsls_period_fe"] = abs(tsls - float((wb / fs_fe.slope
                                               * truth.alpha).sum()))

    # aggregation consistency against the instrument-only closed form
    gt = aggregate(dec_fe, "location_period")
    zt = bartik.z - bartik.z_bar[None, :]
    w_loc = bartik.weights if bartik.weighted else np.ones(ds.n_locations)
    closed_vals = w_loc[:, None] * bartik.z * zt
    closed_denom = float(closed_vals.sum())
    agg_gap = 0.0
    for (g, t), w in gt.weights.items():
        agg_gap = max(agg_gap, abs(w - closed_vals[g, t] / closed_denom))
    gaps["aggregate_closed_form"] = agg_gap

    slopes = {"fs_period_fe": fs_fe.slope, "rf_period_fe": rf_fe.slope,
              "fs_no_fe": fs_nc.slope, "rf_no_fe": rf_nc.slope,
              "tsls_period_fe": tsls}
    return OracleReport(gaps=gaps, slopes=slopes)


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class McReport:
    """Per-estimator Monte Carlo draws against their config-implied estimands."""

    estimators: tuple[str, ...]
    draws: np.ndarray           # (n_kept, k)
    estimands: np.ndarray       # (n_kept, k)
    mc_mean: np.ndarray
    estimand_mean: np.ndarray
    bias: np.ndarray
    mc_se: np.ndarray           # std of draws / sqrt(n)
    bias_se: np.ndarray         # std of (draw - estimand) / sqrt(n)
    n_reps: int
    seed: int
    failed_reps: tuple[int, ...] = ()


def _estimand_row(targets: tuple[str, ...], truth: SimTruth,
                  bartik: BartikPanel) -> np.ndarray:
    beta_g = truth.location_beta()
    gamma_g = truth.location_gamma()
    ratio = truth.fs_weighted_ratio()
    z = bartik.z
    omega = (z ** 2).sum(axis=1) / float((z ** 2).sum())
    bias = realized_bias_factors(bartik)
    deb_fs = float(omega @ beta_g)
    deb_rf = float(omega @ gamma_g)
    row = {
        "fs": beta_g.mean(), "crc_avg_beta": beta_g.mean(),
        "rf": gamma_g.mean(), "crc_avg_gamma": gamma_g.mean(),
        "tsls": ratio, "crc_ratio": ratio,
        "fs_nc": deb_fs + float(bias @ truth.mu_d),
        "rf_nc": deb_rf + float(bias @ truth.mu_y),
        "debiased_fs": deb_fs, "debiased_rf": deb_rf,
        "debiased_ss": deb_rf / deb_fs if deb_fs != 0 else np.nan,
        "debiased_ss_minus_tsls": (deb_rf / deb_fs - ratio)
        if deb_fs != 0 else np.nan,
    }
    return np.array([row[t] for t in targets])


def monte_carlo(config: SimConfig, reps: int, seed: int,
                estimators: tuple[str, ...] | list[str] = ("tsls", "crc_ratio"),
                options: CrcOptions | None = None,
                threads: int = 1) -> McReport:
    """Replicate the design, estimate, and compare to the known estimands.

    Replication r uses the substream ``seed ^ r``; the result is identical
    for any thread count. Replications where an estimator degenerates are
    dropped and reported.
    """
    if reps < 2:
        raise InvalidConfig("need at least 2 replications", reps=reps)
    config.validate()
    targets = tuple(estimators)
    unknown = [t for t in targets if t not in BOOTSTRAP_TARGETS]
    if unknown:
        raise InvalidConfig(f"unknown estimator(s) {unknown}")

    def one_rep(r: int) -> tuple[int, tuple[np.ndarray, np.ndarray] | None]:
        ds, truth = simulate(config, seed ^ r)
        bartik = build_bartik(ds)
        try:
            vals = evaluate_targets(targets, ds.d_evol, ds.y_evol, bartik.z,
                                    ds.location_weights if bartik.weighted
                                    else None, options)
        except ShiftShareError:
            return r, None
        return r, (vals, _estimand_row(targets, truth, bartik))

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_rep, range(reps)))
    else:
        results = [one_rep(r) for r in range(reps)]

    results.sort(key=lambda item: item[0])
    failed = tuple(r for r, v in results if v is None)
    draws = np.array([v[0] for _, v in results if v is not None])
    estimands = np.array([v[1] for _, v in results if v is not None])
    if len(draws) < 2:
        raise InvalidConfig("fewer than 2 replications succeeded",
                            n_failed=len(failed))
    n = len(draws)
    return McReport(
        estimators=targets, draws=draws, estimands=estimands,
        mc_mean=draws.mean(axis=0), estimand_mean=estimands.mean(axis=0),
        bias=(draws - estimands).mean(axis=0),
        mc_se=draws.std(axis=0, ddof=1) / np.sqrt(n),
        bias_se=(draws - estimands).std(axis=0, ddof=1) / np.sqrt(n),
        n_reps=n, seed=seed, failed_reps=failed)
