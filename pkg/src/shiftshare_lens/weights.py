"""Realized decomposition weights behind pooled instrument regressions.

A slope on the pooled panel is, mechanically, a weighted sum of cell-level
effects. With period fixed effects the weight of cell (s,g,t) is

    share(s,g,t) * shock(s,[g],t) * (z[g,t] - z_bar[t])  /  denominator,

with the denominator summing the same products over every cell; weights sum
to one and some are negative whenever a shock and the location's demeaned
instrument disagree in sign. Without fixed effects the demeaning term drops,
and the slope additionally picks up a bias term: per period, the common trend
times ``sum_g z[g,t] / sum_{g,t} z[g,t]^2`` (the ``bias_factors``).

Aggregating cell weights over sectors (and periods) yields the weights
attached to location-period or location effects. Weight magnitudes for the
IV slope are not identified in general; only their signs are, under a
positive first stage with sector-homogeneous effects.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .dataset import ShiftShareDataset
from .errors import (
    AllZeroVariance,
    DimensionMismatch,
    LevelMismatch,
    WrongSpec,
    ZeroDenominator,
)
from .instrument import BartikPanel

LEVELS = ("cell", "location_period", "location")
WEIGHT_SPECS = ("no_fe", "period_fe")
_COARSER = {"cell": ("location_period", "location"),
            "location_period": ("location",),
            "location": ()}


@dataclass(frozen=True)
class WeightDecomposition:
    """Sparse realized weights at one granularity.

    Keys are integer index tuples: (s,g,t) at cell level, (g,t) at
    location-period level, (g,) at location level; the identifier tuples
    are carried along for serialization. Cells whose numerator is exactly
    0.0 (zero share, zero shock, or zero demeaned instrument) are omitted.
    """

    level: str
    spec: str
    weights: dict[tuple, float]
    bias_factors: np.ndarray      # (P,) for no_fe, empty otherwise
    denominator: float
    weighted: bool = False
    locations: tuple[str, ...] = ()
    sectors: tuple[str, ...] = ()
    periods: tuple[str, ...] = ()

    def total(self) -> float:
        return float(sum(self.weights.values()))

    def as_location_vector(self, n_locations: int) -> np.ndarray:
        """Dense per-location weights (absent locations carry exact zeros)."""
        if self.level != "location":
            raise LevelMismatch("dense location vector needs a location-level "
                                "decomposition", level=self.level)
        out = np.zeros(n_locations)
        for (g,), w in self.weights.items():
            out[g] = w
        return out


@dataclass(frozen=True)
class SignSummary:
    """Counts and sums of nonzero weights; sums may be unidentified."""

    n_negative: int
    n_positive: int
    sum_negative: float | None
    sum_positive: float | None
    assumption_label: str


@dataclass(frozen=True)
class WeightSummary:
    signs: SignSummary
    covariate_correlations: dict[str, tuple[float, float]] = field(
        default_factory=dict)


# ---------------------------------------------------------------------------
# cell weights
# ---------------------------------------------------------------------------

def _dense_products(ds: ShiftShareDataset, bartik: BartikPanel,
                    spec: str) -> np.ndarray:
    """Cell numerators share * shock * factor [* location weight], (S,G,P)."""
    S, G, P = ds.n_sectors, ds.n_locations, ds.n_evolution_periods
    if bartik.z.shape != (G, P):
        raise DimensionMismatch("instrument panel does not match the dataset")

    shares = ds.shares if ds.time_varying_shares else ds.shares[:, :, None]
    shocks = ds.shocks if ds.per_location_shocks else ds.shocks[:, None, :]
    if spec == "period_fe":
        factor = bartik.z - bartik.z_bar[None, :]
    else:
        factor = bartik.z
    num = shares * shocks * factor[None, :, :]
    if bartik.weighted:
        num = num * bartik.weights[None, :, None]
    return num


def fs_rf_cell_weights(ds: ShiftShareDataset, bartik: BartikPanel,
                       spec: str = "period_fe") -> WeightDecomposition:
    """Cell-level weights of the pooled first-stage / reduced-form slope.

    The first-stage and reduced-form regressions share the same weights, so
    one decomposition serves both. When the instrument panel is weighted the
    numerators and the denominator are both scaled by the location weights
    and the demeaning uses the weighted cross-location mean.
    """
    if spec not in WEIGHT_SPECS:
        raise WrongSpec(f"unknown spec {spec!r}, expected one of {WEIGHT_SPECS}")
    num = _dense_products(ds, bartik, spec)
    denominator = float(num.sum())
    scale = float(np.abs(num).sum())
    if abs(denominator) < 1e-14 * max(scale, 1e-300) or scale == 0.0:
        raise ZeroDenominator("no instrument variation left in the weights",
                              denominator=denominator)

    weights: dict[tuple, float] = {}
    for s, g, t in zip(*np.nonzero(num)):
        weights[(int(s), int(g), int(t))] = float(num[s, g, t]) / denominator

    if spec == "no_fe":
        w_loc = bartik.weights if bartik.weighted else np.ones(ds.n_locations)
        ssq = float(np.sum(w_loc[:, None] * bartik.z ** 2))
        bias_factors = (w_loc @ bartik.z) / ssq
    else:
        bias_factors = np.empty(0)

    return WeightDecomposition(
        level="cell", spec=spec, weights=weights, bias_factors=bias_factors,
        denominator=denominator, weighted=bartik.weighted,
        locations=ds.locations, sectors=ds.sectors, periods=ds.periods)


def aggregate(dec: WeightDecomposition, to: str) -> WeightDecomposition:
    """Sum weights into a coarser granularity (sectors first, then periods).

    Aggregated weights that cancel to exactly 0.0 are dropped, mirroring the
    cell-level convention, so sign counts only ever see nonzero weights.
    """
    if to not in LEVELS:
        raise LevelMismatch(f"unknown level {to!r}, expected one of {LEVELS}")
    if to not in _COARSER[dec.level]:
        raise LevelMismatch("target level must be coarser than the source",
                            source=dec.level, target=to)

    def project(key: tuple) -> tuple:
        if dec.level == "cell":
            s, g, t = key
        else:
            g, t = key
        return (g, t) if to == "location_period" else (g,)

    out: dict[tuple, float] = {}
    for key, w in dec.weights.items():
        p = project(key)
        out[p] = out.get(p, 0.0) + w
    out = {k: v for k, v in out.items() if v != 0.0}
    return WeightDecomposition(
        level=to, spec=dec.spec, weights=out, bias_factors=dec.bias_factors,
        denominator=dec.denominator, weighted=dec.weighted,
        locations=dec.locations, sectors=dec.sectors, periods=dec.periods)


# ---------------------------------------------------------------------------
# IV-slope weights
# ---------------------------------------------------------------------------

def tsls_weight_signs(dec: WeightDecomposition,
                      fs_slope_sign: float) -> SignSummary:
    """Signs of the IV-slope weights under a sector-homogeneous, positive
    first stage.

    Magnitudes depend on the unobserved first-stage effects and cannot be
    estimated; the sums are therefore reported as unidentified.
    """
    if dec.spec != "period_fe":
        raise WrongSpec("IV-slope signs need period-demeaned weights",
                        spec=dec.spec)
    if dec.level not in ("location_period", "location"):
        raise LevelMismatch("IV-slope signs need location-period or location "
                            "level weights", level=dec.level)
    sign = 1.0 if float(fs_slope_sign) > 0 else -1.0
    values = np.array(list(dec.weights.values())) * sign
    label = ("first-stage effects sector-homogeneous and positive"
             if dec.level == "location_period" else
             "first-stage effects sector- and period-homogeneous and "
             "positive; second-stage effects period-homogeneous")
    return SignSummary(n_negative=int(np.sum(values < 0)),
                       n_positive=int(np.sum(values > 0)),
                       sum_negative=None, sum_positive=None,
                       assumption_label=label)


def tsls_weights_homogeneous_fs(dec: WeightDecomposition) -> WeightDecomposition:
    """IV-slope weights on location-period effects when the first stage is
    one common constant: they coincide with the regression weights."""
    if dec.spec != "period_fe":
        raise WrongSpec("homogeneous-first-stage IV weights need "
                        "period-demeaned weights", spec=dec.spec)
    if dec.level == "cell":
        return aggregate(dec, "location_period")
    if dec.level == "location_period":
        return WeightDecomposition(
            level=dec.level, spec=dec.spec, weights=dict(dec.weights),
            bias_factors=dec.bias_factors, denominator=dec.denominator,
            weighted=dec.weighted, locations=dec.locations,
            sectors=dec.sectors, periods=dec.periods)
    raise LevelMismatch("location-level weights cannot be refined",
                        level=dec.level)


# ---------------------------------------------------------------------------
# variance-based weights (random-shocks benchmark)
# ---------------------------------------------------------------------------

def akm_weights(ds: ShiftShareDataset,
                shock_variances: np.ndarray) -> WeightDecomposition:
    """Always-positive weights under mutually independent mean-zero shocks.

    The no-constant slope then weights cell effects by squared share times
    shock variance, normalized; there is no bias term. Variances are a user
    input (e.g. cross-period sample variances, or squared demeaned shocks)
    since no single estimator is canonical.
    """
    v = np.asarray(shock_variances, dtype=float)
    S, G, P = ds.n_sectors, ds.n_locations, ds.n_evolution_periods
    if v.shape not in ((S,), (S, P)):
        raise DimensionMismatch(f"variances must have shape {(S,)} or "
                                f"{(S, P)}, got {v.shape}")
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise AllZeroVariance("variances must be finite and nonnegative")
    if not np.any(v > 0):
        raise AllZeroVariance("all shock variances are zero")

    time_resolved = v.ndim == 2 or ds.time_varying_shares
    if time_resolved:
        shares = ds.shares if ds.time_varying_shares else ds.shares[:, :, None]
        vv = v[:, None, :] if v.ndim == 2 else v[:, None, None]
        num = shares ** 2 * vv * np.ones((S, G, P))
    else:
        num = ds.shares ** 2 * v[:, None]
    denominator = float(num.sum())
    if denominator <= 0.0:
        raise AllZeroVariance("no exposure to any positive-variance sector")

    weights: dict[tuple, float] = {}
    for idx in zip(*np.nonzero(num)):
        weights[tuple(int(i) for i in idx)] = float(num[idx]) / denominator
    return WeightDecomposition(
        level="cell", spec="no_fe", weights=weights,
        bias_factors=np.empty(0), denominator=denominator, weighted=False,
        locations=ds.locations, sectors=ds.sectors, periods=ds.periods)


def weighted_effect_sum(dec: WeightDecomposition,
                        effects: np.ndarray) -> float:
    """Sum of weight times effect over the decomposition's index set.

    ``effects`` must be indexable by the decomposition's keys: (S,G,P) at
    cell level, (G,P) at location-period level, (G,) at location level.
    Omitted cells carry exactly zero weight, so they never contribute.
    """
    effects = np.asarray(effects, dtype=float)
    ndim = {"cell": 3, "location_period": 2, "location": 1}[dec.level]
    if effects.ndim != ndim:
        raise DimensionMismatch(f"effects for a {dec.level} decomposition "
                                f"must be {ndim}-dimensional",
                                shape=effects.shape)
    return float(sum(w * effects[key] for key, w in dec.weights.items()))


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

def summarize_signs(dec: WeightDecomposition,
                    assumption_label: str = "") -> SignSummary:
    values = np.array(list(dec.weights.values()))
    neg = values[values < 0]
    pos = values[values > 0]
    return SignSummary(n_negative=len(neg), n_positive=len(pos),
                       sum_negative=float(neg.sum()),
                       sum_positive=float(pos.sum()),
                       assumption_label=assumption_label)


def weight_summary(dec: WeightDecomposition,
                   location_covariate: np.ndarray | dict[str, np.ndarray] | None = None,
                   assumption_label: str = "") -> WeightSummary:
    """Sign counts and sums, plus optional weight-covariate correlations.

    Correlations require location-level weights; each covariate gets a
    Pearson r over all locations (absent ones count as zero weight) and the
    two-sided p-value of its t test.
    """
    signs = summarize_signs(dec, assumption_label)
    correlations: dict[str, tuple[float, float]] = {}
    if location_covariate is not None:
        if dec.level != "location":
            raise LevelMismatch("weight-covariate correlations need "
                                "location-level weights", level=dec.level)
        if not isinstance(location_covariate, dict):
            location_covariate = {"covariate": np.asarray(location_covariate)}
        dense = dec.as_location_vector(len(dec.locations))
        for name, cov in location_covariate.items():
            cov = np.asarray(cov, dtype=float).ravel()
            if cov.shape != dense.shape:
                raise DimensionMismatch("covariate must have one value per "
                                        "location", covariate=name)
            r, p = _pearson(dense, cov)
            correlations[name] = (r, p)
    return WeightSummary(signs=signs, covariate_correlations=correlations)


def _pearson(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    n = len(a)
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt(float(a @ a) * float(b @ b))
    if denom == 0.0:
        return np.nan, np.nan
    r = float(a @ b) / denom
    r = max(-1.0, min(1.0, r))
    if n < 3 or abs(r) == 1.0:
        return r, 0.0
    t = r * np.sqrt((n - 2) / (1.0 - r * r))
    p = 2.0 * float(stats.t.sf(abs(t), n - 2))
    return r, p
