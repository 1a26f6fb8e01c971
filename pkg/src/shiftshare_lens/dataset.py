"""Canonical in-memory data model for shift-share designs and its CSV IO.

A dataset is a balanced locations-by-periods panel of treatment and outcome
evolutions, a matrix of sector-level shocks (or a per-location shock tensor
when leave-one-out shocks are used), a matrix of nonnegative exposure shares
(optionally time-varying), and optional location weights and covariate
blocks. Identifiers are strings; internal indices are dense integers assigned
lexicographically, and that ordering is used everywhere downstream.

File formats (UTF-8, comma-delimited, header row required):

* ``panel.csv``  : ``location,period,d,y[,weight]`` with one row per (g,t).
* ``shocks.csv`` : ``sector,period,shock[,location]``; a ``location`` column
  switches to per-location shock mode and must then be present on every row.
* ``shares.csv`` : ``sector,location,share[,period]``; a ``period`` column
  switches to time-varying shares. Absent cells are exact zeros.
* covariate files: wide format, first column the identifier.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (
    DuplicateKey,
    MissingColumn,
    NonFinite,
    ShiftShareWarning,
    UnbalancedPanel,
    UnknownIdentifier,
)

SHARE_SUM_TOL = 1e-9


@dataclass(frozen=True)
class LoadOptions:
    """Optional inputs for :func:`load_dataset`."""

    sector_covariates_path: str | Path | None = None
    location_covariates_path: str | Path | None = None


@dataclass(frozen=True)
class ShiftShareDataset:
    """Immutable container for one shift-share design.

    Shapes use G locations, S sectors, and P evolution periods (one per
    label in ``periods``; each label denotes the change from the previous
    period to the labelled one).
    """

    locations: tuple[str, ...]
    sectors: tuple[str, ...]
    periods: tuple[str, ...]
    d_evol: np.ndarray          # (G, P)
    y_evol: np.ndarray          # (G, P)
    shocks: np.ndarray          # (S, P) or (S, G, P) per-location
    shares: np.ndarray          # (S, G) or (S, G, P) time-varying
    location_weights: np.ndarray | None = None       # (G,)
    sector_covariates: np.ndarray | None = None      # (S, K)
    sector_covariate_names: tuple[str, ...] = ()
    location_covariates: np.ndarray | None = None    # (G, L)
    location_covariate_names: tuple[str, ...] = ()

    def __post_init__(self):
        for arr in (self.d_evol, self.y_evol, self.shocks, self.shares,
                    self.location_weights, self.sector_covariates,
                    self.location_covariates):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n_locations(self) -> int:
        return len(self.locations)

    @property
    def n_sectors(self) -> int:
        return len(self.sectors)

    @property
    def n_evolution_periods(self) -> int:
        return len(self.periods)

    @property
    def per_location_shocks(self) -> bool:
        return self.shocks.ndim == 3

    @property
    def time_varying_shares(self) -> bool:
        return self.shares.ndim == 3

    def share_at(self, s: int, g: int, t: int) -> float:
        """Exposure share of sector ``s`` in location ``g`` at period ``t``."""
        if self.time_varying_shares:
            return float(self.shares[s, g, t])
        return float(self.shares[s, g])

    def shock_at(self, s: int, g: int, t: int) -> float:
        """Shock of sector ``s`` at period ``t``, as seen by location ``g``."""
        if self.per_location_shocks:
            return float(self.shocks[s, g, t])
        return float(self.shocks[s, t])

    def with_shocks(self, shocks: np.ndarray) -> "ShiftShareDataset":
        return replace(self, shocks=np.asarray(shocks, dtype=float))

    def share_sums(self) -> np.ndarray:
        """Per-location (and per-period, if time-varying) share totals."""
        return self.shares.sum(axis=0)


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_dataset`: empty ``errors`` means accepted."""

    errors: list[tuple[str, str, tuple]] = field(default_factory=list)
    warnings: list[tuple[str, str, tuple]] = field(default_factory=list)
    share_sum_flag: bool = False

    @property
    def ok(self) -> bool:
        return not self.errors

    def add_error(self, code: str, message: str, coords: tuple = ()):
        self.errors.append((code, message, coords))

    def add_warning(self, code: str, message: str, coords: tuple = ()):
        self.warnings.append((code, message, coords))


# ---------------------------------------------------------------------------
# loading helpers
# ---------------------------------------------------------------------------

def _read_csv(path: str | Path, required: tuple[str, ...]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise MissingColumn(f"file not found: {path}", file=str(path))
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    for col in required:
        if col not in df.columns:
            raise MissingColumn(f"column {col!r} missing from {path.name}",
                                file=str(path), column=col)
    return df


def _to_float(df: pd.DataFrame, col: str, file: str) -> np.ndarray:
    # Python's float() is correctly rounded, so repr-formatted values
    # round-trip bit-exactly (pandas' fast parser does not guarantee that).
    values = np.empty(len(df))
    for i, raw in enumerate(df[col].tolist()):
        try:
            values[i] = float(raw)
        except (TypeError, ValueError):
            values[i] = np.nan
        if not np.isfinite(values[i]):
            raise NonFinite(
                f"non-finite value {raw!r} in {file} column {col!r}",
                file=file, column=col, row=i + 2)  # 1-based, after header
    return values


def _check_duplicates(df: pd.DataFrame, keys: list[str], file: str):
    dup = df.duplicated(subset=keys)
    if dup.any():
        row = int(np.argmax(dup.to_numpy()))
        coords = tuple(df[k].iloc[row] for k in keys)
        raise DuplicateKey(f"duplicate key {coords} in {file}",
                           file=file, key=coords)


def _index_of(values: pd.Series, universe: dict[str, int], file: str,
              kind: str) -> np.ndarray:
    idx = values.map(universe)
    missing = idx.isna()
    if missing.any():
        row = int(np.argmax(missing.to_numpy()))
        raise UnknownIdentifier(
            f"{kind} {values.iloc[row]!r} in {file} is unknown",
            file=file, identifier=values.iloc[row], kind=kind)
    return idx.to_numpy(dtype=int)


def load_dataset(panel_path: str | Path, shocks_path: str | Path,
                 shares_path: str | Path,
                 options: LoadOptions | None = None) -> ShiftShareDataset:
    """Load and reconcile the three canonical CSV files.

    Location, sector, and period orderings are lexicographic by identifier.
    The panel defines the location and period sets; the shocks file defines
    the sector set and must cover exactly the panel's periods. Share cells
    that are absent from the shares file are exact zeros (a warning reports
    how many were filled in).
    """
    options = options or LoadOptions()

    panel = _read_csv(panel_path, ("location", "period", "d", "y"))
    shocks_df = _read_csv(shocks_path, ("sector", "period", "shock"))
    shares_df = _read_csv(shares_path, ("sector", "location", "share"))
    panel_name = Path(panel_path).name
    shocks_name = Path(shocks_path).name
    shares_name = Path(shares_path).name

    _check_duplicates(panel, ["location", "period"], panel_name)

    locations = tuple(sorted(set(panel["location"])))
    periods = tuple(sorted(set(panel["period"])))
    sectors = tuple(sorted(set(shocks_df["sector"])))
    g_index = {v: i for i, v in enumerate(locations)}
    t_index = {v: i for i, v in enumerate(periods)}
    s_index = {v: i for i, v in enumerate(sectors)}
    G, S, P = len(locations), len(sectors), len(periods)

    # --- panel ------------------------------------------------------------
    if len(panel) != G * P:
        raise UnbalancedPanel(
            f"panel has {len(panel)} rows, expected {G}x{P}={G * P}",
            file=panel_name)
    gi = _index_of(panel["location"], g_index, panel_name, "location")
    ti = _index_of(panel["period"], t_index, panel_name, "period")
    d_evol = np.full((G, P), np.nan)
    y_evol = np.full((G, P), np.nan)
    d_evol[gi, ti] = _to_float(panel, "d", panel_name)
    y_evol[gi, ti] = _to_float(panel, "y", panel_name)

    location_weights = None
    if "weight" in panel.columns:
        location_weights = np.full(G, np.nan)
        location_weights[gi] = _to_float(panel, "weight", panel_name)
        per_loc = pd.DataFrame({"g": gi, "w": location_weights[gi]})
        spread = per_loc.groupby("g")["w"].nunique()
        if (spread > 1).any():
            g = int(spread[spread > 1].index[0])
            raise DuplicateKey(
                f"location {locations[g]!r} has conflicting weights",
                file=panel_name, location=locations[g])

    # --- shocks -------------------------------------------------------------
    shock_periods = set(shocks_df["period"])
    for p in shock_periods - set(periods):
        raise UnknownIdentifier(f"period {p!r} in {shocks_name} is unknown",
                                file=shocks_name, identifier=p, kind="period")
    for p in set(periods) - shock_periods:
        raise UnknownIdentifier(
            f"panel period {p!r} has no rows in {shocks_name}",
            file=shocks_name, identifier=p, kind="period")

    per_location = "location" in shocks_df.columns
    if per_location:
        blank = shocks_df["location"].astype(str).str.strip() == ""
        if blank.any():
            raise MissingColumn(
                f"{shocks_name} has a location column with blank entries; "
                "per-location shocks require it on every row",
                file=shocks_name, column="location")
        _check_duplicates(shocks_df, ["sector", "location", "period"],
                          shocks_name)
        si = _index_of(shocks_df["sector"], s_index, shocks_name, "sector")
        gi2 = _index_of(shocks_df["location"], g_index, shocks_name,
                        "location")
        ti2 = _index_of(shocks_df["period"], t_index, shocks_name, "period")
        if len(shocks_df) != S * G * P:
            raise UnbalancedPanel(
                f"per-location shocks have {len(shocks_df)} rows, expected "
                f"{S}x{G}x{P}={S * G * P}", file=shocks_name)
        shocks = np.full((S, G, P), np.nan)
        shocks[si, gi2, ti2] = _to_float(shocks_df, "shock", shocks_name)
    else:
        _check_duplicates(shocks_df, ["sector", "period"], shocks_name)
        si = _index_of(shocks_df["sector"], s_index, shocks_name, "sector")
        ti2 = _index_of(shocks_df["period"], t_index, shocks_name, "period")
        if len(shocks_df) != S * P:
            raise UnbalancedPanel(
                f"shocks have {len(shocks_df)} rows, expected {S}x{P}={S * P}",
                file=shocks_name)
        shocks = np.full((S, P), np.nan)
        shocks[si, ti2] = _to_float(shocks_df, "shock", shocks_name)

    # --- shares -------------------------------------------------------------
    time_varying = "period" in shares_df.columns
    keys = ["sector", "location"] + (["period"] if time_varying else [])
    _check_duplicates(shares_df, keys, shares_name)
    si3 = _index_of(shares_df["sector"], s_index, shares_name, "sector")
    gi3 = _index_of(shares_df["location"], g_index, shares_name, "location")
    values = _to_float(shares_df, "share", shares_name)
    if time_varying:
        ti3 = _index_of(shares_df["period"], t_index, shares_name, "period")
        shares = np.zeros((S, G, P))
        shares[si3, gi3, ti3] = values
        n_filled = S * G * P - len(shares_df)
    else:
        shares = np.zeros((S, G))
        shares[si3, gi3] = values
        n_filled = S * G - len(shares_df)
    if n_filled > 0:
        warnings.warn(
            f"{shares_name}: {n_filled} absent share cell(s) set to 0",
            ShiftShareWarning, stacklevel=2)

    sector_covariates = None
    sector_covariate_names: tuple[str, ...] = ()
    if options.sector_covariates_path is not None:
        sector_covariates, sector_covariate_names = _load_covariates(
            options.sector_covariates_path, s_index, "sector")
    location_covariates = None
    location_covariate_names: tuple[str, ...] = ()
    if options.location_covariates_path is not None:
        location_covariates, location_covariate_names = _load_covariates(
            options.location_covariates_path, g_index, "location")

    return ShiftShareDataset(
        locations=locations, sectors=sectors, periods=periods,
        d_evol=d_evol, y_evol=y_evol, shocks=shocks, shares=shares,
        location_weights=location_weights,
        sector_covariates=sector_covariates,
        sector_covariate_names=sector_covariate_names,
        location_covariates=location_covariates,
        location_covariate_names=location_covariate_names)


def _load_covariates(path: str | Path, index: dict[str, int],
                     kind: str) -> tuple[np.ndarray, tuple[str, ...]]:
    df = _read_csv(path, ())
    if df.shape[1] < 2:
        raise MissingColumn(f"covariate file {Path(path).name} needs an "
                            "identifier column plus at least one covariate",
                            file=str(path))
    name = Path(path).name
    id_col = df.columns[0]
    _check_duplicates(df, [id_col], name)
    rows = _index_of(df[id_col], index, name, kind)
    if len(df) != len(index):
        raise UnbalancedPanel(
            f"{name} has {len(df)} rows, expected one per {kind} "
            f"({len(index)})", file=name)
    cov_names = tuple(df.columns[1:])
    out = np.full((len(index), len(cov_names)), np.nan)
    for j, col in enumerate(cov_names):
        out[rows, j] = _to_float(df, col, name)
    return out, cov_names


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate_dataset(ds: ShiftShareDataset) -> ValidationReport:
    """Check structural invariants and set the share-sum flag.

    Degenerate shapes (fewer than 2 locations, no sectors, no evolution
    periods), non-finite values, negative shares, and non-positive location
    weights are errors. Shares that do not sum to one per location are not
    an error; the report only records the fact.
    """
    report = ValidationReport()
    G, S, P = ds.n_locations, ds.n_sectors, ds.n_evolution_periods

    if G < 2:
        report.add_error("DegenerateShape", f"need at least 2 locations, got {G}")
    if S < 1:
        report.add_error("DegenerateShape", f"need at least 1 sector, got {S}")
    if P < 1:
        report.add_error("DegenerateShape",
                         "need at least 1 evolution period (2 raw periods)")

    expected = {
        "d_evol": (ds.d_evol, (G, P)),
        "y_evol": (ds.y_evol, (G, P)),
    }
    for name, (arr, shape) in expected.items():
        if arr.shape != shape:
            report.add_error("DimensionMismatch",
                             f"{name} has shape {arr.shape}, expected {shape}")
    shock_ok = ds.shocks.shape in ((S, P), (S, G, P))
    if not shock_ok:
        report.add_error("DimensionMismatch",
                         f"shocks have shape {ds.shocks.shape}, expected "
                         f"{(S, P)} or {(S, G, P)}")
    share_ok = ds.shares.shape in ((S, G), (S, G, P))
    if not share_ok:
        report.add_error("DimensionMismatch",
                         f"shares have shape {ds.shares.shape}, expected "
                         f"{(S, G)} or {(S, G, P)}")

    for name, arr in (("d_evol", ds.d_evol), ("y_evol", ds.y_evol),
                      ("shocks", ds.shocks), ("shares", ds.shares)):
        bad = ~np.isfinite(arr)
        if bad.any():
            coords = tuple(int(i) for i in np.argwhere(bad)[0])
            report.add_error("NonFinite", f"non-finite entry in {name}", coords)

    if share_ok:
        neg = ds.shares < 0
        if neg.any():
            coords = tuple(int(i) for i in np.argwhere(neg)[0])
            report.add_error("NegativeShare",
                             "exposure shares must be nonnegative", coords)
        sums = ds.share_sums()
        report.share_sum_flag = bool(np.all(np.abs(sums - 1.0) <= SHARE_SUM_TOL))
        zero_cols = np.argwhere(sums == 0.0)
        for coords in zero_cols:
            report.add_warning("ZeroExposure",
                               "location has no exposure to any sector",
                               tuple(int(i) for i in coords))

    if ds.location_weights is not None:
        w = ds.location_weights
        if w.shape != (G,):
            report.add_error("DimensionMismatch",
                             f"location_weights have shape {w.shape}, "
                             f"expected {(G,)}")
        elif not np.all(np.isfinite(w)) or np.any(w <= 0):
            report.add_error("NonPositiveWeight",
                             "location weights must be finite and positive")

    if ds.sector_covariates is not None and not np.all(
            np.isfinite(ds.sector_covariates)):
        report.add_error("NonFinite", "non-finite entry in sector_covariates")
    if ds.location_covariates is not None and not np.all(
            np.isfinite(ds.location_covariates)):
        report.add_error("NonFinite", "non-finite entry in location_covariates")

    return report


# ---------------------------------------------------------------------------
# writing (canonical round-trip)
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    # repr of a Python float is the shortest string that round-trips exactly
    return repr(float(x))


def write_dataset(ds: ShiftShareDataset, directory: str | Path) -> dict[str, Path]:
    """Write the canonical CSVs; reloading them reproduces ``ds`` bit-exactly."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}

    panel_path = directory / "panel.csv"
    with open(panel_path, "w", encoding="utf-8") as f:
        cols = "location,period,d,y"
        if ds.location_weights is not None:
            cols += ",weight"
        f.write(cols + "\n")
        for g, loc in enumerate(ds.locations):
            for t, per in enumerate(ds.periods):
                row = f"{loc},{per},{_fmt(ds.d_evol[g, t])},{_fmt(ds.y_evol[g, t])}"
                if ds.location_weights is not None:
                    row += f",{_fmt(ds.location_weights[g])}"
                f.write(row + "\n")
    paths["panel"] = panel_path

    shocks_path = directory / "shocks.csv"
    with open(shocks_path, "w", encoding="utf-8") as f:
        if ds.per_location_shocks:
            f.write("sector,period,shock,location\n")
            for s, sec in enumerate(ds.sectors):
                for g, loc in enumerate(ds.locations):
                    for t, per in enumerate(ds.periods):
                        f.write(f"{sec},{per},{_fmt(ds.shocks[s, g, t])},{loc}\n")
        else:
            f.write("sector,period,shock\n")
            for s, sec in enumerate(ds.sectors):
                for t, per in enumerate(ds.periods):
                    f.write(f"{sec},{per},{_fmt(ds.shocks[s, t])}\n")
    paths["shocks"] = shocks_path

    shares_path = directory / "shares.csv"
    with open(shares_path, "w", encoding="utf-8") as f:
        if ds.time_varying_shares:
            f.write("sector,location,share,period\n")
            for s, sec in enumerate(ds.sectors):
                for g, loc in enumerate(ds.locations):
                    for t, per in enumerate(ds.periods):
                        f.write(f"{sec},{loc},{_fmt(ds.shares[s, g, t])},{per}\n")
        else:
            f.write("sector,location,share\n")
            for s, sec in enumerate(ds.sectors):
                for g, loc in enumerate(ds.locations):
                    f.write(f"{sec},{loc},{_fmt(ds.shares[s, g])}\n")
    paths["shares"] = shares_path

    if ds.sector_covariates is not None:
        p = directory / "sector_covariates.csv"
        _write_covariates(p, "sector", ds.sectors, ds.sector_covariates,
                          ds.sector_covariate_names)
        paths["sector_covariates"] = p
    if ds.location_covariates is not None:
        p = directory / "location_covariates.csv"
        _write_covariates(p, "location", ds.locations, ds.location_covariates,
                          ds.location_covariate_names)
        paths["location_covariates"] = p
    return paths


def _write_covariates(path: Path, kind: str, ids: tuple[str, ...],
                      values: np.ndarray, names: tuple[str, ...]):
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join([kind] + list(names)) + "\n")
        for i, ident in enumerate(ids):
            f.write(",".join([ident] + [_fmt(v) for v in values[i]]) + "\n")
