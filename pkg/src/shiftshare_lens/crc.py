"""Correlated-random-coefficient estimators for three or more periods.

With location-specific slopes constant over time, the conditional mean of a
location's stacked evolutions is additively separable into a common trend
vector and its own instrument vector. Projecting each location's evolutions
off its instrument direction (the per-location annihilator) removes the
slope term, so the trends solve a pooled linear system; the average slope is
then the mean of per-location no-constant regressions on the trend-adjusted
evolutions. The same machinery runs for the treatment and the outcome, and
the ratio of the two averages is a convex combination of location-specific
second-stage effects whenever all first-stage effects are positive.

Everything is also expressible as one just-identified moment system with
2T conditions (two trend blocks, two scalar averages), which is what the
sandwich variance here is built on: per-location moment contributions,
independent across locations, conditional on the realized shocks, with no
small-sample correction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import ShiftShareDataset
from .errors import (
    DegenerateInstrument,
    DimensionMismatch,
    EstimatorFailedInDraw,
    ShiftShareError,
    SingularDesign,
    TooFewPeriods,
    WeakDenominator,
)
from .instrument import BartikPanel
from .regress import fit_bartik_system, fit_linear

NEAR_ZERO_POLICIES = ("error", "drop", "winsorize")


@dataclass(frozen=True)
class CrcOptions:
    """Policy for locations whose instrument vector is numerically zero.

    ``tol`` is relative to the mean squared instrument norm. ``error`` keeps
    the estimand intact by refusing to proceed; ``drop`` removes the flagged
    locations and reports how many; ``winsorize`` floors the per-location
    squared norms entering the average-slope denominators at the given
    quantile of their distribution (trend moments are unaffected since
    projections only depend on the instrument direction).
    """

    near_zero_policy: str = "error"
    tol: float = 1e-12
    winsor_quantile: float = 0.05

    def __post_init__(self):
        if self.near_zero_policy not in NEAR_ZERO_POLICIES:
            raise DimensionMismatch(
                f"unknown policy {self.near_zero_policy!r}, expected one of "
                f"{NEAR_ZERO_POLICIES}")


@dataclass(frozen=True)
class TrendEstimates:
    """Common trend vectors for the treatment and the outcome."""

    mu_d: np.ndarray            # (P,)
    mu_y: np.ndarray            # (P,)
    vcov: np.ndarray            # (2P, 2P), order [mu_d; mu_y]
    n_locations: int
    n_dropped: int = 0


@dataclass(frozen=True)
class CrcEstimates:
    """Average first-stage / reduced-form effects and their ratio."""

    avg_beta: float
    avg_gamma: float
    ratio: float
    trends: TrendEstimates
    vcov_full: np.ndarray       # (2T, 2T), order [mu_d; mu_y; avg_beta; avg_gamma]
    se_avg_beta: float
    se_avg_gamma: float
    se_ratio: float
    n_locations: int
    n_dropped: int = 0


@dataclass(frozen=True)
class DebiasedEstimates:
    """No-constant slopes minus their realized trend-induced bias."""

    fs_debiased: float
    rf_debiased: float
    ss_debiased: float
    components: dict[str, float]    # beta_nc, rf_nc, bias_d, bias_y
    se_bootstrap: dict[str, float] = field(default_factory=dict)
    n_draws: int = 0


@dataclass(frozen=True)
class BootstrapResult:
    """Location-resampled draws for a set of scalar estimators."""

    targets: tuple[str, ...]
    point: np.ndarray           # (k,)
    draws: np.ndarray           # (n_kept, k)
    se: np.ndarray              # (k,)
    seed: int
    n_requested: int
    failed_draws: tuple[int, ...] = ()


# ---------------------------------------------------------------------------
# annihilators and the near-zero policy
# ---------------------------------------------------------------------------

def _norms_and_mask(z: np.ndarray, options: CrcOptions) -> tuple[np.ndarray, np.ndarray]:
    norms = np.sum(z * z, axis=1)
    threshold = options.tol * float(norms.mean())
    flagged = norms <= threshold
    if flagged.any() and options.near_zero_policy == "error":
        g = int(np.argmax(flagged))
        raise DegenerateInstrument(
            "location has a numerically zero instrument vector", location=g,
            squared_norm=float(norms[g]))
    return norms, flagged


def annihilators(bartik: BartikPanel,
                 options: CrcOptions | None = None) -> np.ndarray:
    """Per-location projections off the instrument direction, (G, P, P).

    Each matrix is symmetric, idempotent, and maps the location's instrument
    vector to zero. A location with an exactly zero instrument vector gets
    the identity (nothing to project off), which only arises under the
    ``drop`` or ``winsorize`` policies.
    """
    options = options or CrcOptions()
    z = np.asarray(bartik.z, dtype=float)
    G, P = z.shape
    norms, _ = _norms_and_mask(z, options)
    M = np.broadcast_to(np.eye(P), (G, P, P)).copy()
    nonzero = norms > 0.0
    outer = z[nonzero, :, None] * z[nonzero, None, :]
    M[nonzero] -= outer / norms[nonzero, None, None]
    return M


def estimate_trends(bartik: BartikPanel, d_evol: np.ndarray,
                    y_evol: np.ndarray,
                    options: CrcOptions | None = None) -> TrendEstimates:
    """Solve the pooled projected system for the common trend vectors.

    The stacked system sums the per-location projections; it is symmetric
    positive semidefinite by construction, so the solve goes through an
    eigendecomposition with an explicit rank check (all instrument vectors
    sharing one direction, for instance, leaves the system singular).
    """
    options = options or CrcOptions()
    z = np.asarray(bartik.z, dtype=float)
    d = np.asarray(d_evol, dtype=float)
    y = np.asarray(y_evol, dtype=float)
    G, P = z.shape
    if d.shape != (G, P) or y.shape != (G, P):
        raise DimensionMismatch("evolutions do not match the instrument panel")
    if P < 2:
        raise TooFewPeriods("trend estimation needs at least 3 periods "
                            "(2 evolution periods)", n_evolution_periods=P)

    _, flagged = _norms_and_mask(z, options)
    keep = ~flagged if options.near_zero_policy == "drop" else np.ones(G, bool)
    n_dropped = int(G - keep.sum())
    if keep.sum() < 2:
        raise SingularDesign("fewer than 2 usable locations")

    M = annihilators(BartikPanel(z=z[keep],
                                 z_bar=z[keep].mean(axis=0)), options)
    Ga = int(keep.sum())
    A = M.sum(axis=0)                                   # sum of projectors
    eigvals, eigvecs = np.linalg.eigh(A)
    if eigvals[0] <= 1e-10 * max(eigvals[-1], 1.0):
        raise SingularDesign("projected design is rank deficient; instrument "
                             "vectors span too few directions",
                             min_eigenvalue=float(eigvals[0]))

    def solve(rhs: np.ndarray) -> np.ndarray:
        return eigvecs @ ((eigvecs.T @ rhs) / eigvals)

    md = np.einsum("gij,gj->gi", M, d[keep])            # (Ga, P)
    my = np.einsum("gij,gj->gi", M, y[keep])
    mu_d = solve(md.sum(axis=0))
    mu_y = solve(my.sum(axis=0))

    # sandwich over per-location moment contributions
    m = np.concatenate([md - np.einsum("gij,j->gi", M, mu_d),
                        my - np.einsum("gij,j->gi", M, mu_y)], axis=1)
    omega = m.T @ m / Ga
    abar_inv = np.zeros((2 * P, 2 * P))
    inv = solve(np.eye(P)) * Ga                         # (A/Ga)^{-1}
    abar_inv[:P, :P] = inv
    abar_inv[P:, P:] = inv
    vcov = abar_inv @ omega @ abar_inv.T / Ga
    return TrendEstimates(mu_d=mu_d, mu_y=mu_y, vcov=vcov,
                          n_locations=Ga, n_dropped=n_dropped)


def _effect_denominators(norms: np.ndarray,
                         options: CrcOptions) -> np.ndarray:
    if options.near_zero_policy != "winsorize":
        return norms
    floor = float(np.quantile(norms, options.winsor_quantile))
    if floor <= 0.0:
        raise DegenerateInstrument("winsorizing floor is zero; too many "
                                   "degenerate instrument vectors")
    return np.maximum(norms, floor)


def estimate_avg_effects(bartik: BartikPanel, d_evol: np.ndarray,
                         y_evol: np.ndarray, trends: TrendEstimates,
                         options: CrcOptions | None = None) -> CrcEstimates:
    """Average the per-location no-constant slopes of trend-adjusted
    evolutions on the instrument, for the treatment and the outcome."""
    options = options or CrcOptions()
    z = np.asarray(bartik.z, dtype=float)
    d = np.asarray(d_evol, dtype=float)
    y = np.asarray(y_evol, dtype=float)
    G, P = z.shape

    norms, flagged = _norms_and_mask(z, options)
    keep = ~flagged if options.near_zero_policy == "drop" else np.ones(G, bool)
    Ga = int(keep.sum())
    denom = _effect_denominators(norms[keep], options)

    zd = np.sum(z[keep] * (d[keep] - trends.mu_d[None, :]), axis=1)
    zy = np.sum(z[keep] * (y[keep] - trends.mu_y[None, :]), axis=1)
    r_beta = zd / denom
    r_gamma = zy / denom
    avg_beta = float(r_beta.mean())
    avg_gamma = float(r_gamma.mean())
    if abs(avg_beta) < 1e-12:
        raise WeakDenominator("average first-stage effect is numerically zero",
                              avg_beta=avg_beta)
    ratio = avg_gamma / avg_beta

    vcov_full = _gmm_vcov(z[keep], d[keep], y[keep], denom, trends,
                          avg_beta, avg_gamma)
    T2 = vcov_full.shape[0]
    vbb = vcov_full[T2 - 2, T2 - 2]
    vgg = vcov_full[T2 - 1, T2 - 1]
    vbg = vcov_full[T2 - 2, T2 - 1]
    grad_b, grad_g = -avg_gamma / avg_beta ** 2, 1.0 / avg_beta
    se_ratio = float(np.sqrt(max(grad_b ** 2 * vbb + 2 * grad_b * grad_g * vbg
                                 + grad_g ** 2 * vgg, 0.0)))
    return CrcEstimates(
        avg_beta=avg_beta, avg_gamma=avg_gamma, ratio=ratio, trends=trends,
        vcov_full=vcov_full, se_avg_beta=float(np.sqrt(max(vbb, 0.0))),
        se_avg_gamma=float(np.sqrt(max(vgg, 0.0))), se_ratio=se_ratio,
        n_locations=Ga, n_dropped=int(G - Ga))


def _gmm_vcov(z: np.ndarray, d: np.ndarray, y: np.ndarray,
              denom: np.ndarray, trends: TrendEstimates,
              avg_beta: float, avg_gamma: float) -> np.ndarray:
    """Sandwich for [mu_d; mu_y; avg_beta; avg_gamma] from the stacked
    just-identified moment system, conditional on the shocks."""
    G, P = z.shape
    M = annihilators(BartikPanel(z=z, z_bar=z.mean(axis=0)),
                     CrcOptions(near_zero_policy="winsorize"))
    md = np.einsum("gij,gj->gi", M, d - trends.mu_d[None, :])
    my = np.einsum("gij,gj->gi", M, y - trends.mu_y[None, :])
    r_beta = np.sum(z * (d - trends.mu_d[None, :]), axis=1) / denom
    r_gamma = np.sum(z * (y - trends.mu_y[None, :]), axis=1) / denom
    m = np.concatenate([md, my,
                        (r_beta - avg_beta)[:, None],
                        (r_gamma - avg_gamma)[:, None]], axis=1)   # (G, 2T)
    omega = m.T @ m / G

    abar = M.mean(axis=0)
    rbar = (z / denom[:, None]).mean(axis=0)           # (P,)
    dim = 2 * P + 2
    J = np.zeros((dim, dim))
    J[:P, :P] = -abar
    J[P:2 * P, P:2 * P] = -abar
    J[2 * P, :P] = -rbar
    J[2 * P, 2 * P] = -1.0
    J[2 * P + 1, P:2 * P] = -rbar
    J[2 * P + 1, 2 * P + 1] = -1.0
    J_inv = np.linalg.inv(J)
    return J_inv @ omega @ J_inv.T / G


def gmm_fit(ds: ShiftShareDataset, bartik: BartikPanel,
            options: CrcOptions | None = None) -> CrcEstimates:
    """Trends plus average effects in one call, with the full sandwich.

    The moment system is just identified and block triangular, so it is
    solved exactly in two linear steps: trends first, then the plug-in
    averages. Point estimates coincide with the two-step path by
    construction.
    """
    trends = estimate_trends(bartik, ds.d_evol, ds.y_evol, options)
    return estimate_avg_effects(bartik, ds.d_evol, ds.y_evol, trends, options)


@dataclass(frozen=True)
class PeriodEffectVariant:
    """Alternative parameterization: one common first-stage effect, and
    second-stage effects that are a location term plus a period shift."""

    beta: float                  # common first-stage effect
    mu_y: np.ndarray             # (P,)
    lambda_shift: np.ndarray     # (P,), first evolution period pinned to 0
    avg_alpha: float             # mean location term, at the pinned baseline
    avg_alpha_by_period: np.ndarray   # (P,)
    n_locations: int


def period_effect_variant(ds, bartik: BartikPanel,
                          options: CrcOptions | None = None) -> PeriodEffectVariant:
    """Estimate the variant with a fully homogeneous first stage and
    additively period-shifted second-stage effects.

    The first stage is the pooled period-demeaned regression (consistent
    when the effect is one constant). On the outcome side the conditional
    mean is linear in common parameters (per-period levels plus per-period
    instrument slopes, the latter pinned to zero in the first evolution
    period since a constant shift is absorbed by the location terms) and a
    location-specific instrument slope; projecting off each location's
    instrument direction removes the location term and leaves a pooled
    linear solve, exactly as for the trends.
    """
    options = options or CrcOptions()
    z = np.asarray(bartik.z, dtype=float)
    y = np.asarray(ds.y_evol, dtype=float)
    G, P = z.shape
    if P < 2:
        raise TooFewPeriods("the variant needs at least 3 periods",
                            n_evolution_periods=P)

    fs = fit_linear(ds.d_evol, z, spec="period_fe",
                    weights=ds.location_weights if bartik.weighted else None)
    beta = fs.slope
    if abs(beta) < 1e-12:
        raise WeakDenominator("common first-stage effect is numerically zero")

    _, flagged = _norms_and_mask(z, options)
    keep = ~flagged if options.near_zero_policy == "drop" else np.ones(G, bool)
    zk, yk = z[keep], y[keep]
    Ga = int(keep.sum())
    M = annihilators(BartikPanel(z=zk, z_bar=zk.mean(axis=0)), options)

    # common-parameter design per location: per-period levels, then
    # per-period instrument slopes for evolution periods after the first
    k = 2 * P - 1
    W = np.zeros((Ga, P, k))
    W[:, :, :P] = np.eye(P)
    for t in range(1, P):
        W[:, t, P + t - 1] = zk[:, t]
    MW = np.einsum("gij,gjk->gik", M, W)
    A = np.einsum("gik,gil->kl", MW, MW)
    eigvals, eigvecs = np.linalg.eigh(A)
    if eigvals[0] <= 1e-10 * max(eigvals[-1], 1.0):
        raise SingularDesign("variant design is rank deficient",
                             min_eigenvalue=float(eigvals[0]))
    rhs = np.einsum("gik,gi->k", MW, np.einsum("gij,gj->gi", M, yk))
    theta = eigvecs @ ((eigvecs.T @ rhs) / eigvals)
    mu_y = theta[:P]
    d = np.concatenate([[0.0], theta[P:]])        # per-period slope shifts

    norms = np.sum(zk * zk, axis=1)
    denom = _effect_denominators(norms, options)
    resid = yk - mu_y[None, :] - d[None, :] * zk
    c = np.sum(zk * resid, axis=1) / denom        # location slopes
    avg_alpha = float(c.mean()) / beta
    lam = d / beta
    return PeriodEffectVariant(
        beta=beta, mu_y=mu_y, lambda_shift=lam, avg_alpha=avg_alpha,
        avg_alpha_by_period=avg_alpha + lam, n_locations=Ga)


# ---------------------------------------------------------------------------
# debiased no-constant estimators
# ---------------------------------------------------------------------------

def realized_bias_factors(bartik: BartikPanel) -> np.ndarray:
    """Per-period factors sum_g z[g,t] / sum_{g,t} z[g,t]^2 multiplying the
    trends in the no-constant slope's bias term."""
    z = bartik.z
    if bartik.weighted:
        w = bartik.weights[:, None]
        return (bartik.weights @ z) / float(np.sum(w * z * z))
    return z.sum(axis=0) / float(np.sum(z * z))


def debiased_estimators(ds: ShiftShareDataset, bartik: BartikPanel,
                        trends: TrendEstimates) -> DebiasedEstimates:
    """Subtract the realized trend-induced bias from no-constant slopes.

    The no-constant pooled slope equals an instrument-strength-weighted
    average of location effects plus the trend bias; with estimated trends
    the bias is removable, giving estimators that stay convex combinations
    of effects when all first-stage effects are positive.
    """
    weights = ds.location_weights if bartik.weighted else None
    fs_nc = fit_linear(ds.d_evol, bartik.z, spec="none", weights=weights)
    rf_nc = fit_linear(ds.y_evol, bartik.z, spec="none", weights=weights)
    factors = realized_bias_factors(bartik)
    bias_d = float(factors @ trends.mu_d)
    bias_y = float(factors @ trends.mu_y)
    fs_deb = fs_nc.slope - bias_d
    rf_deb = rf_nc.slope - bias_y
    if abs(fs_deb) < 1e-12:
        raise WeakDenominator("debiased first stage is numerically zero",
                              fs_debiased=fs_deb)
    return DebiasedEstimates(
        fs_debiased=fs_deb, rf_debiased=rf_deb, ss_debiased=rf_deb / fs_deb,
        components={"beta_nc": fs_nc.slope, "rf_nc": rf_nc.slope,
                    "bias_d": bias_d, "bias_y": bias_y})


# ---------------------------------------------------------------------------
# bootstrap
# ---------------------------------------------------------------------------

#: scalar estimators available to :func:`bootstrap` and the Monte Carlo harness
BOOTSTRAP_TARGETS = (
    "fs", "rf", "tsls",
    "fs_nc", "rf_nc",
    "crc_avg_beta", "crc_avg_gamma", "crc_ratio",
    "debiased_fs", "debiased_rf", "debiased_ss",
    "debiased_ss_minus_tsls",
)

_NEEDS_SYSTEM = {"fs", "rf", "tsls", "debiased_ss_minus_tsls"}
_NEEDS_NC = {"fs_nc", "rf_nc"}
_NEEDS_CRC = {"crc_avg_beta", "crc_avg_gamma", "crc_ratio"}
_NEEDS_DEBIAS = {"debiased_fs", "debiased_rf", "debiased_ss",
                 "debiased_ss_minus_tsls"}


def evaluate_targets(targets: tuple[str, ...], d: np.ndarray, y: np.ndarray,
                     z: np.ndarray, weights: np.ndarray | None = None,
                     options: CrcOptions | None = None) -> np.ndarray:
    """Evaluate the requested scalar estimators on one (d, y, z) sample."""
    unknown = [t for t in targets if t not in BOOTSTRAP_TARGETS]
    if unknown:
        raise DimensionMismatch(f"unknown estimator target(s) {unknown}")
    wanted = set(targets)
    values: dict[str, float] = {}

    G, P = z.shape
    zbar = (z.mean(axis=0) if weights is None
            else weights @ z / weights.sum())
    panel = BartikPanel(z=z, z_bar=zbar, weighted=weights is not None,
                        weights=None if weights is None else weights.copy())
    ids = tuple(f"g{i:06d}" for i in range(G))
    ds = ShiftShareDataset(
        locations=ids, sectors=("s1",),
        periods=tuple(f"t{j + 2:03d}" for j in range(P)),
        d_evol=np.asarray(d, float).copy(), y_evol=np.asarray(y, float).copy(),
        shocks=np.zeros((1, P)), shares=np.ones((1, G)),
        location_weights=None if weights is None else weights.copy())

    if wanted & _NEEDS_SYSTEM:
        fs, rf, tsls = fit_bartik_system(ds, panel, spec="period_fe",
                                         weights=weights)
        values["fs"] = fs.slope
        values["rf"] = rf.slope
        values["tsls"] = tsls.beta_2sls
    trends = None
    if wanted & (_NEEDS_CRC | _NEEDS_DEBIAS):
        trends = estimate_trends(panel, d, y, options)
    if wanted & _NEEDS_CRC:
        crc = estimate_avg_effects(panel, d, y, trends, options)
        values["crc_avg_beta"] = crc.avg_beta
        values["crc_avg_gamma"] = crc.avg_gamma
        values["crc_ratio"] = crc.ratio
    if wanted & (_NEEDS_NC | _NEEDS_DEBIAS):
        fs_nc = fit_linear(d, z, spec="none", weights=weights)
        rf_nc = fit_linear(y, z, spec="none", weights=weights)
        values["fs_nc"] = fs_nc.slope
        values["rf_nc"] = rf_nc.slope
        if wanted & _NEEDS_DEBIAS:
            factors = realized_bias_factors(panel)
            fs_deb = fs_nc.slope - float(factors @ trends.mu_d)
            rf_deb = rf_nc.slope - float(factors @ trends.mu_y)
            values["debiased_fs"] = fs_deb
            values["debiased_rf"] = rf_deb
            if abs(fs_deb) < 1e-12:
                raise WeakDenominator("debiased first stage is numerically "
                                      "zero in this sample")
            values["debiased_ss"] = rf_deb / fs_deb
            if "debiased_ss_minus_tsls" in wanted:
                values["debiased_ss_minus_tsls"] = (rf_deb / fs_deb
                                                    - values["tsls"])
    return np.array([values[t] for t in targets])


def bootstrap(ds: ShiftShareDataset, bartik: BartikPanel,
              targets: tuple[str, ...] | list[str], n_draws: int, seed: int,
              options: CrcOptions | None = None,
              threads: int = 1) -> BootstrapResult:
    """Resample locations with replacement and recompute the estimators.

    Each location keeps its own instrument values: per-location shock
    construction is *not* redone on the resampled panel. Draw r uses an
    independent substream keyed by ``seed ^ r``, so results are identical
    for any thread count. Draws in which an estimator degenerates are
    dropped and reported.
    """
    if n_draws < 2:
        raise DimensionMismatch("need at least 2 bootstrap draws",
                                n_draws=n_draws)
    targets = tuple(targets)
    d, y, z = ds.d_evol, ds.y_evol, bartik.z
    weights = ds.location_weights if bartik.weighted else None
    G = ds.n_locations

    point = evaluate_targets(targets, d, y, z, weights, options)

    def one_draw(r: int) -> tuple[int, np.ndarray | None]:
        rng = np.random.default_rng(seed ^ r)
        idx = rng.integers(0, G, size=G)
        w_r = None if weights is None else weights[idx]
        try:
            return r, evaluate_targets(targets, d[idx], y[idx], z[idx],
                                       w_r, options)
        except ShiftShareError:
            return r, None

    results: list[tuple[int, np.ndarray | None]] = []
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_draw, range(n_draws)))
    else:
        results = [one_draw(r) for r in range(n_draws)]

    results.sort(key=lambda item: item[0])
    failed = tuple(r for r, v in results if v is None)
    kept = np.array([v for _, v in results if v is not None])
    if len(kept) < 2:
        raise EstimatorFailedInDraw("fewer than 2 bootstrap draws succeeded",
                                    n_failed=len(failed))
    se = kept.std(axis=0, ddof=1)
    return BootstrapResult(targets=targets, point=point, draws=kept, se=se,
                           seed=seed, n_requested=n_draws,
                           failed_draws=failed)
