"""Pooled panel regressions on the instrument, with location-clustered SEs.

All fits are single-regressor least squares over the stacked (location,
period) observations, with the intercept structure partialled out first:
nothing for ``spec="none"``, one global constant for ``spec="intercept"``,
one constant per period for ``spec="period_fe"``. Slopes are therefore
computed on (weighted) demeaned data, which is the numerically stable
orthogonalized route; multi-column designs (the shock exogeneity test) go
through an SVD-based least-squares solve, never normal equations.

Cluster-robust variances treat each location as one cluster and apply the
conventional small-sample factor G/(G-1) * (n-1)/(n-k).

Exposure-correlation-robust standard errors (reported in square brackets in
some published tables) are a separate algorithm and are not computed here;
result objects carry an ``akm_se = None`` field to make the absence explicit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .dataset import ShiftShareDataset
from .errors import (
    CollinearRegressor,
    DimensionMismatch,
    RankDeficientCovariates,
    ShiftShareWarning,
    ShocksNotZeroAtPrePeriod,
    WeakDenominator,
)
from .instrument import BartikPanel

SPECS = ("none", "intercept", "period_fe")


@dataclass(frozen=True)
class RegressionFit:
    """One pooled single-regressor fit."""

    slope: float
    intercepts: np.ndarray          # () / (1,) / (P,) per spec
    se_cluster: float
    n_obs: int
    residuals: np.ndarray           # (G, P)
    spec: str
    weighted: bool
    akm_se: None = None             # exposure-robust SEs are not computed

    @property
    def n_params(self) -> int:
        return 1 + len(self.intercepts)


@dataclass(frozen=True)
class TslsFit:
    """Instrumental-variable ratio fit: reduced form over first stage."""

    beta_2sls: float
    fs: RegressionFit
    rf: RegressionFit
    se_cluster: float
    akm_se: None = None


@dataclass(frozen=True)
class PlaceboResult:
    """Pre-period evolutions regressed on a later instrument."""

    coef_d: float | None
    se_d: float | None
    coef_y: float | None
    se_y: float | None
    t_pre: tuple[str, ...]
    t_instrument: str
    n_obs: int


@dataclass(frozen=True)
class ExogeneityTestResult:
    """Shocks regressed on sector characteristics, with a joint F test."""

    coefficients: np.ndarray
    ses: np.ndarray
    intercept: float
    intercept_se: float
    f_stat: float
    p_value: float
    r_squared: float
    n: int
    df_denominator: int
    covariate_names: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# core fit
# ---------------------------------------------------------------------------

def _obs_weights(weights: np.ndarray | None, G: int, P: int) -> np.ndarray:
    if weights is None:
        return np.ones((G, P))
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (G,):
        raise DimensionMismatch(f"weights must have shape {(G,)}, got "
                                f"{weights.shape}")
    return np.broadcast_to(weights[:, None], (G, P)).copy()


def _demean(a: np.ndarray, w: np.ndarray, spec: str) -> np.ndarray:
    if spec == "none":
        return a
    if spec == "intercept":
        return a - np.average(a, weights=w)
    return a - np.average(a, weights=w, axis=0, keepdims=True)


def fit_linear(y: np.ndarray, x: np.ndarray, spec: str = "period_fe",
               weights: np.ndarray | None = None) -> RegressionFit:
    """Weighted least squares of y on x pooled over all (g,t) cells.

    ``y`` and ``x`` are G-by-P matrices; ``weights`` are per-location and
    apply to every period of that location. Clusters are locations.
    """
    if spec not in SPECS:
        raise DimensionMismatch(f"unknown spec {spec!r}, expected one of {SPECS}")
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.shape != x.shape or y.ndim != 2:
        raise DimensionMismatch(f"y and x must be matching G x P matrices, "
                                f"got {y.shape} and {x.shape}")
    G, P = y.shape
    w = _obs_weights(weights, G, P)

    x_t = _demean(x, w, spec)
    y_t = _demean(y, w, spec)
    sxx = float(np.sum(w * x_t * x_t))
    scale = float(np.sum(w * x * x)) + float(np.sum(w))
    if sxx <= 1e-28 * scale:
        raise CollinearRegressor("regressor has no within-spec variation",
                                 spec=spec)
    slope = float(np.sum(w * x_t * y_t)) / sxx

    if spec == "none":
        intercepts = np.empty(0)
        fitted = slope * x
    elif spec == "intercept":
        c = np.average(y, weights=w) - slope * np.average(x, weights=w)
        intercepts = np.array([c])
        fitted = slope * x + c
    else:
        c = (np.average(y, weights=w, axis=0)
             - slope * np.average(x, weights=w, axis=0))
        intercepts = c
        fitted = slope * x + c[None, :]

    residuals = y - fitted
    n = G * P
    k = 1 + len(intercepts)
    se = _cluster_se_1d(x_t, residuals, w, sxx, G, n, k)
    return RegressionFit(slope=slope, intercepts=intercepts, se_cluster=se,
                         n_obs=n, residuals=residuals, spec=spec,
                         weighted=weights is not None)


def _small_sample_factor(G: int, n: int, k: int) -> float:
    if G <= 1 or n <= k:
        return np.nan
    return (G / (G - 1)) * ((n - 1) / (n - k))


def _cluster_se_1d(x_t: np.ndarray, residuals: np.ndarray, w: np.ndarray,
                   sxx: float, G: int, n: int, k: int) -> float:
    scores = np.sum(w * x_t * residuals, axis=1)     # one score per location
    c = _small_sample_factor(G, n, k)
    var = c * float(np.sum(scores ** 2)) / sxx ** 2
    return float(np.sqrt(var)) if np.isfinite(var) else np.nan


# ---------------------------------------------------------------------------
# the instrument system
# ---------------------------------------------------------------------------

def fit_bartik_system(ds: ShiftShareDataset, bartik: BartikPanel,
                      spec: str = "period_fe",
                      weights: np.ndarray | None = None,
                      ) -> tuple[RegressionFit, RegressionFit, TslsFit]:
    """First stage, reduced form, and their ratio on one dataset.

    The IV slope is the reduced-form slope divided by the first-stage slope;
    its clustered standard error comes from the delta method applied to the
    joint cluster-level covariance of the two slopes.
    """
    if bartik.z.shape != ds.d_evol.shape:
        raise DimensionMismatch("instrument panel does not match the dataset",
                                z=bartik.z.shape, d=ds.d_evol.shape)
    if weights is None and bartik.weighted:
        weights = ds.location_weights
    fs = fit_linear(ds.d_evol, bartik.z, spec=spec, weights=weights)
    rf = fit_linear(ds.y_evol, bartik.z, spec=spec, weights=weights)
    if abs(fs.slope) < 1e-12:
        raise WeakDenominator("first-stage slope is numerically zero",
                              fs_slope=fs.slope)
    beta = rf.slope / fs.slope

    G, P = ds.d_evol.shape
    w = _obs_weights(weights, G, P)
    x_t = _demean(np.asarray(bartik.z, dtype=float), w, spec)
    sxx = float(np.sum(w * x_t * x_t))
    psi = np.stack([
        np.sum(w * x_t * rf.residuals, axis=1) / sxx,
        np.sum(w * x_t * fs.residuals, axis=1) / sxx,
    ], axis=1)                                        # (G, 2)
    c = _small_sample_factor(G, G * P, fs.n_params)
    cov = c * psi.T @ psi
    grad = np.array([1.0 / fs.slope, -rf.slope / fs.slope ** 2])
    se = float(np.sqrt(grad @ cov @ grad))
    tsls = TslsFit(beta_2sls=beta, fs=fs, rf=rf, se_cluster=se)
    return fs, rf, tsls


# ---------------------------------------------------------------------------
# placebo
# ---------------------------------------------------------------------------

def placebo(ds: ShiftShareDataset, bartik: BartikPanel,
            t_pre: str | list[str] | tuple[str, ...], t_instrument: str,
            strict: bool = True, shock_tol: float = 0.0,
            targets: str = "both") -> PlaceboResult:
    """Regress pre-period evolutions on a later period's instrument.

    Valid only when the pre-period sector shocks are (approximately) zero:
    under common trends the pre-period evolutions are then uncorrelated with
    any instrument, so a nonzero coefficient rejects the assumption. With
    several pre-periods the observations are pooled with one intercept per
    pre-period. ``strict`` controls whether nonzero pre-period shocks raise
    or merely warn.
    """
    pre = (t_pre,) if isinstance(t_pre, str) else tuple(t_pre)
    if targets not in ("both", "d", "y"):
        raise DimensionMismatch(f"unknown targets {targets!r}")
    period_pos = {p: i for i, p in enumerate(ds.periods)}
    for p in list(pre) + [t_instrument]:
        if p not in period_pos:
            raise DimensionMismatch(f"unknown period {p!r}")
    t_ins = period_pos[t_instrument]
    pre_idx = [period_pos[p] for p in pre]
    if any(i >= t_ins for i in pre_idx):
        raise DimensionMismatch("pre-periods must precede the instrument "
                                "period", t_pre=pre, t_instrument=t_instrument)

    for p, i in zip(pre, pre_idx):
        slab = ds.shocks[:, :, i] if ds.per_location_shocks else ds.shocks[:, i]
        worst = float(np.max(np.abs(slab)))
        if worst > shock_tol:
            if strict:
                raise ShocksNotZeroAtPrePeriod(
                    f"pre-period {p!r} has shocks up to {worst:g}", period=p)
            warnings.warn(f"pre-period {p!r} shocks are not zero "
                          f"(max |shock| = {worst:g}); placebo is only "
                          "approximate", ShiftShareWarning, stacklevel=2)

    x = np.repeat(bartik.z[:, [t_ins]], len(pre_idx), axis=1)   # (G, n_pre)
    spec = "intercept" if len(pre_idx) == 1 else "period_fe"

    coef_d = se_d = coef_y = se_y = None
    if targets in ("both", "d"):
        fit_d = fit_linear(ds.d_evol[:, pre_idx], x, spec=spec)
        coef_d, se_d = fit_d.slope, fit_d.se_cluster
    if targets in ("both", "y"):
        fit_y = fit_linear(ds.y_evol[:, pre_idx], x, spec=spec)
        coef_y, se_y = fit_y.slope, fit_y.se_cluster
    return PlaceboResult(coef_d=coef_d, se_d=se_d, coef_y=coef_y, se_y=se_y,
                         t_pre=pre, t_instrument=t_instrument,
                         n_obs=ds.n_locations * len(pre_idx))


# ---------------------------------------------------------------------------
# shock exogeneity
# ---------------------------------------------------------------------------

def shock_exogeneity_test(shocks: np.ndarray, covariates: np.ndarray,
                          weights: np.ndarray | None = None,
                          cluster: np.ndarray | None = None,
                          covariate_names: tuple[str, ...] = (),
                          ) -> ExogeneityTestResult:
    """Regress sector shocks on sector characteristics and jointly test zero.

    A significant joint F statistic means expected shocks vary with sector
    characteristics, i.e. the equal-expected-shock assumption fails. Robust
    (HC1) covariance by default; pass ``cluster`` ids for cluster-robust
    covariance with F degrees of freedom #clusters - 1.
    """
    y = np.asarray(shocks, dtype=float).ravel()
    X1 = np.asarray(covariates, dtype=float)
    if X1.ndim == 1:
        X1 = X1[:, None]
    n, K = X1.shape
    if len(y) != n:
        raise DimensionMismatch("shocks and covariates disagree on length",
                                shocks=len(y), covariates=n)
    if K >= n:
        raise RankDeficientCovariates("more covariates than observations",
                                      n=n, K=K)
    X = np.column_stack([np.ones(n), X1])
    k = K + 1

    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape != (n,) or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise DimensionMismatch("weights must be positive, finite, and "
                                    "one per observation")
    sw = np.sqrt(w)

    Xw = X * sw[:, None]
    U, sv, Vt = np.linalg.svd(Xw, full_matrices=False)
    if np.min(sv) <= 1e-12 * np.max(sv):
        raise RankDeficientCovariates(
            "covariates are collinear with each other or the intercept")
    beta = Vt.T @ ((U.T @ (y * sw)) / sv)
    u = y - X @ beta

    XtWX_inv = (Vt.T / sv ** 2) @ Vt
    if cluster is None:
        meat = (X * (w * u ** 2)[:, None]).T @ X
        factor = n / (n - k)
        df2 = n - k
    else:
        cluster = np.asarray(cluster).ravel()
        if cluster.shape != (n,):
            raise DimensionMismatch("cluster ids must be one per observation")
        codes = {c: i for i, c in enumerate(dict.fromkeys(cluster.tolist()))}
        n_cl = len(codes)
        if n_cl < 2:
            raise RankDeficientCovariates("need at least 2 clusters")
        sums = np.zeros((n_cl, k))
        contrib = X * (w * u)[:, None]
        for row, c in zip(contrib, cluster.tolist()):
            sums[codes[c]] += row
        meat = sums.T @ sums
        factor = _small_sample_factor(n_cl, n, k)
        df2 = n_cl - 1
    V = factor * XtWX_inv @ meat @ XtWX_inv
    ses = np.sqrt(np.diag(V))

    b = beta[1:]
    Vbb = V[1:, 1:]
    f_stat = float(b @ np.linalg.solve(Vbb, b)) / K
    p_value = float(stats.f.sf(f_stat, K, df2))

    ybar = np.average(y, weights=w)
    tss = float(np.sum(w * (y - ybar) ** 2))
    rss = float(np.sum(w * u ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else np.nan

    return ExogeneityTestResult(
        coefficients=b, ses=ses[1:], intercept=float(beta[0]),
        intercept_se=float(ses[0]), f_stat=f_stat, p_value=p_value,
        r_squared=r2, n=n, df_denominator=df2,
        covariate_names=tuple(covariate_names))
