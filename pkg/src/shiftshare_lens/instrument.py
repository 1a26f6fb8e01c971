"""Construction of the shift-share instrument and shock transformations.

The instrument for location g at period t is the exposure-share-weighted
average of that period's sector shocks. When the dataset carries per-location
shocks (leave-one-out construction) the weighting uses each location's own
shock slice; when shares are time-varying the period's share column is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import ShiftShareDataset
from .errors import (
    AllMassInOneLocation,
    DimensionMismatch,
    NonPositiveLevel,
    PerLocationShocksUnsupported,
)

TRANSFORMS = ("log_diff", "diff", "growth_rate")


@dataclass(frozen=True)
class BartikPanel:
    """Realized instrument values plus their cross-location means.

    ``z_bar[t]`` is the unweighted mean of ``z[:, t]``, or the
    location-weight-weighted mean when ``weighted`` is set; downstream
    regressions and weight decompositions must use the same weighting.
    """

    z: np.ndarray        # (G, P)
    z_bar: np.ndarray    # (P,)
    weighted: bool = False
    weights: np.ndarray | None = None   # (G,) when weighted

    def __post_init__(self):
        self.z.setflags(write=False)
        self.z_bar.setflags(write=False)
        if self.weights is not None:
            self.weights.setflags(write=False)

    @property
    def n_locations(self) -> int:
        return self.z.shape[0]

    @property
    def n_evolution_periods(self) -> int:
        return self.z.shape[1]


def _cross_location_mean(z: np.ndarray, weights: np.ndarray | None) -> np.ndarray:
    if weights is None:
        return z.mean(axis=0)
    return weights @ z / weights.sum()


def build_bartik(ds: ShiftShareDataset, weighted: bool | None = None) -> BartikPanel:
    """Compute the instrument panel z[g,t] = sum_s share(s,g[,t]) * shock(s[,g],t).

    ``weighted=None`` applies location weights whenever the dataset carries
    them; pass an explicit boolean to override.
    """
    if weighted is None:
        weighted = ds.location_weights is not None
    if weighted and ds.location_weights is None:
        raise DimensionMismatch("weighted instrument requested but the "
                                "dataset has no location weights")

    S, G, P = ds.n_sectors, ds.n_locations, ds.n_evolution_periods
    shares, shocks = ds.shares, ds.shocks
    if shares.shape not in ((S, G), (S, G, P)):
        raise DimensionMismatch(f"shares shape {shares.shape} does not match "
                                f"dataset ({S=}, {G=}, {P=})")
    if shocks.shape not in ((S, P), (S, G, P)):
        raise DimensionMismatch(f"shocks shape {shocks.shape} does not match "
                                f"dataset ({S=}, {G=}, {P=})")

    tv_shares = shares.ndim == 3
    per_loc = shocks.ndim == 3
    if tv_shares and per_loc:
        z = np.einsum("sgt,sgt->gt", shares, shocks)
    elif tv_shares:
        z = np.einsum("sgt,st->gt", shares, shocks)
    elif per_loc:
        z = np.einsum("sg,sgt->gt", shares, shocks)
    else:
        z = shares.T @ shocks

    weights = ds.location_weights if weighted else None
    z_bar = _cross_location_mean(z, weights)
    return BartikPanel(z=z, z_bar=z_bar, weighted=weighted,
                       weights=None if weights is None else weights.copy())


def leave_one_out_shocks(levels: np.ndarray, transform: str) -> np.ndarray:
    """Per-location shock tensor from sector-by-location-by-period levels.

    For each focal location the sector aggregate is recomputed over all other
    locations, then converted to a period-over-period shock:

    * ``log_diff``    : log(agg_t / agg_{t-1})
    * ``diff``        : agg_t - agg_{t-1}
    * ``growth_rate`` : agg_t / agg_{t-1} - 1

    Returns an (S, G, T-1) array. A leave-out aggregate of exactly zero means
    the sector's entire mass sits in the focal location, which makes the
    construction meaningless, so it is rejected for every transform.
    """
    if transform not in TRANSFORMS:
        raise DimensionMismatch(f"unknown transform {transform!r}, expected "
                                f"one of {TRANSFORMS}")
    levels = np.asarray(levels, dtype=float)
    if levels.ndim != 3:
        raise DimensionMismatch("levels must be a sector x location x period "
                                f"array, got shape {levels.shape}")
    S, G, T = levels.shape
    if T < 2:
        raise DimensionMismatch("need at least 2 level periods")
    if G < 2:
        raise AllMassInOneLocation("cannot leave a location out of a "
                                   "single-location aggregate")

    totals = levels.sum(axis=1)                       # (S, T)
    excluded = totals[:, None, :] - levels            # (S, G, T)

    zero = excluded == 0.0
    if zero.any():
        s, g, t = (int(i) for i in np.argwhere(zero)[0])
        raise AllMassInOneLocation(
            "leave-out aggregate is zero", sector=s, location=g, period=t)
    if transform == "log_diff" and (excluded < 0).any():
        s, g, t = (int(i) for i in np.argwhere(excluded < 0)[0])
        raise NonPositiveLevel("log transform needs positive leave-out "
                               "aggregates", sector=s, location=g, period=t)

    if transform == "log_diff":
        return np.log(excluded[:, :, 1:] / excluded[:, :, :-1])
    if transform == "diff":
        return excluded[:, :, 1:] - excluded[:, :, :-1]
    return excluded[:, :, 1:] / excluded[:, :, :-1] - 1.0


def demean_shocks(ds: ShiftShareDataset) -> ShiftShareDataset:
    """Center sector shocks to mean zero within each period.

    Centering normalizes the shocks' common level away; it requires
    sector-level shocks since per-location tensors have no single
    cross-sector mean per period.
    """
    if ds.per_location_shocks:
        raise PerLocationShocksUnsupported(
            "demeaning is defined for sector-level shocks only")
    centered = ds.shocks - ds.shocks.mean(axis=0, keepdims=True)
    return ds.with_shocks(centered)
