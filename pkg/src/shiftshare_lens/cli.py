"""Command-line entry point: one subcommand per pipeline stage.

Every subcommand writes machine-readable reports into ``--output-dir``:
JSON files are fully self-describing (results, the resolved configuration,
and a content hash of each input file) and byte-identical across reruns
with identical inputs and seeds, for any thread count. Floats serialize via
their shortest exact decimal representation (at most 17 significant digits).

Exit codes: 0 on success, 1 when the inputs are invalid, 2 when estimation
is degenerate (singular designs, zero denominators, and the like).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .crc import (
    BOOTSTRAP_TARGETS,
    CrcOptions,
    bootstrap,
    debiased_estimators,
    gmm_fit,
    period_effect_variant,
)
from .dataset import LoadOptions, load_dataset, validate_dataset, write_dataset
from .errors import DataError, EstimationError, MissingColumn, ShiftShareError
from .instrument import build_bartik
from .regress import fit_bartik_system, placebo, shock_exogeneity_test
from .simulate import SimConfig, monte_carlo, simulate
from .weights import (
    aggregate,
    fs_rf_cell_weights,
    summarize_signs,
    tsls_weight_signs,
    tsls_weights_homogeneous_fs,
    weight_summary,
)

ENV_THREADS = "SHIFTSHARE_LENS_THREADS"

_LEVEL_FLAGS = {"cell": "cell", "gt": "location_period", "g": "location"}
_SPEC_FLAGS = {"fe": "period_fe", "none": "no_fe"}
_ASSUME_LEVEL = {"none": "cell", "bg_t": "location_period",
                 "bg": "location", "b": "location_period"}


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _hash_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_report(outdir: Path, name: str, command: str, args: argparse.Namespace,
                  inputs: dict[str, str | Path], results: dict) -> Path:
    config = {k: _jsonable(v) for k, v in vars(args).items()
              if k not in ("func",)}
    payload = {
        "command": command,
        "version": __version__,
        "config": config,
        "input_hashes": {k: _hash_file(v) for k, v in inputs.items()},
        "results": _jsonable(results),
    }
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / name
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write("\n")
    return path


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# shared loading
# ---------------------------------------------------------------------------

def _load(args) -> tuple:
    options = LoadOptions(
        sector_covariates_path=getattr(args, "sector_covariates", None),
        location_covariates_path=getattr(args, "location_covariates", None))
    ds = load_dataset(args.panel, args.shocks, args.shares, options)
    report = validate_dataset(ds)
    if not report.ok:
        code, message, coords = report.errors[0]
        raise DataError(f"dataset rejected: [{code}] {message}",
                        coordinates=coords, n_errors=len(report.errors))
    inputs = {"panel": args.panel, "shocks": args.shocks,
              "shares": args.shares}
    for key in ("sector_covariates", "location_covariates"):
        if getattr(args, key, None):
            inputs[key] = getattr(args, key)
    return ds, report, inputs


def _crc_options(args) -> CrcOptions:
    return CrcOptions(near_zero_policy=args.near_zero_policy, tol=args.tol,
                      winsor_quantile=args.winsor_quantile)


def _regression_dict(fit) -> dict:
    return {"slope": fit.slope, "se_cluster": fit.se_cluster,
            "intercepts": fit.intercepts, "n_obs": fit.n_obs,
            "spec": fit.spec, "weighted": fit.weighted,
            "akm_se": None}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    try:
        ds, report, inputs = _load(args)
    except DataError as exc:
        outdir = Path(args.output_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "validate.json", "w", encoding="utf-8") as f:
            json.dump({"command": "validate", "accepted": False,
                       "error": str(exc)}, f, sort_keys=True, indent=2)
            f.write("\n")
        raise
    results = {
        "accepted": report.ok,
        "errors": [list(e) for e in report.errors],
        "warnings": [list(w) for w in report.warnings],
        "share_sum_flag": report.share_sum_flag,
        "n_locations": ds.n_locations,
        "n_sectors": ds.n_sectors,
        "n_evolution_periods": ds.n_evolution_periods,
        "per_location_shocks": ds.per_location_shocks,
        "time_varying_shares": ds.time_varying_shares,
    }
    _write_report(Path(args.output_dir), "validate.json", "validate", args,
                  inputs, results)
    return 0


def cmd_instrument(args) -> int:
    ds, _, inputs = _load(args)
    panel = build_bartik(ds, weighted=args.weighted or None)
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.format in ("csv", "both"):
        with open(outdir / "bartik.csv", "w", encoding="utf-8") as f:
            f.write("location,period,z\n")
            for g, loc in enumerate(ds.locations):
                for t, per in enumerate(ds.periods):
                    f.write(f"{loc},{per},{_fmt(panel.z[g, t])}\n")
    if args.format in ("json", "both"):
        _write_report(outdir, "instrument.json", "instrument", args, inputs,
                      {"z_bar": panel.z_bar, "weighted": panel.weighted,
                       "n_locations": panel.n_locations,
                       "n_evolution_periods": panel.n_evolution_periods})
    return 0


def cmd_regress(args) -> int:
    ds, _, inputs = _load(args)
    panel = build_bartik(ds, weighted=args.weighted or None)
    spec = {"none": "none", "intercept": "intercept", "fe": "period_fe"}[args.spec]
    fs, rf, tsls = fit_bartik_system(ds, panel, spec=spec)
    results = {
        "first_stage": _regression_dict(fs),
        "reduced_form": _regression_dict(rf),
        "tsls": {"beta_2sls": tsls.beta_2sls, "se_cluster": tsls.se_cluster,
                 "akm_se": None},
    }
    _write_report(Path(args.output_dir), "regress.json", "regress", args,
                  inputs, results)
    return 0


def cmd_weights(args) -> int:
    ds, _, inputs = _load(args)
    panel = build_bartik(ds, weighted=args.weighted or None)
    spec = _SPEC_FLAGS[args.spec]
    cells = fs_rf_cell_weights(ds, panel, spec=spec)

    level = _LEVEL_FLAGS[args.level] if args.level else _ASSUME_LEVEL[args.assume]
    dec = cells if level == "cell" else aggregate(cells, level)

    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.format in ("csv", "both"):
        _write_weight_csv(outdir / "weights.csv", dec)

    covariates = None
    if ds.location_covariates is not None and level == "location":
        covariates = {name: ds.location_covariates[:, j]
                      for j, name in enumerate(ds.location_covariate_names)}
    summary = weight_summary(dec, location_covariate=covariates,
                             assumption_label=_fs_label(args.assume))
    if args.assume == "b":
        # one fully homogeneous effect: the slope estimates it with weight 1
        fs_rf_block = {"n_negative": 0, "n_positive": 1,
                       "sum_negative": 0.0, "sum_positive": 1.0,
                       "assumption": _fs_label("b")}
    else:
        fs_rf_block = _sign_dict(summary.signs)
    results = {
        "spec": spec,
        "level": level,
        "denominator": dec.denominator,
        "bias_factors": dec.bias_factors,
        "sum_of_weights": dec.total(),
        "fs_rf_weights": fs_rf_block,
        "covariate_correlations": {
            k: {"pearson_r": r, "p_value": p}
            for k, (r, p) in summary.covariate_correlations.items()},
    }
    if spec == "period_fe":
        results["tsls_weights"] = _tsls_block(ds, panel, cells, args.assume)
    _write_report(outdir, "weights.json", "weights", args, inputs, results)
    return 0


def _fs_label(assume: str) -> str:
    return {
        "none": "no homogeneity restriction",
        "bg_t": "first-stage effects sector-homogeneous",
        "bg": "first-stage effects sector- and period-homogeneous",
        "b": "first-stage effects fully homogeneous",
    }[assume]


def _sign_dict(signs) -> dict:
    return {"n_negative": signs.n_negative, "n_positive": signs.n_positive,
            "sum_negative": signs.sum_negative,
            "sum_positive": signs.sum_positive,
            "assumption": signs.assumption_label}


def _tsls_block(ds, panel, cells, assume: str) -> dict:
    if assume == "none":
        return {"identified": False,
                "note": "weight signs and magnitudes depend on unobserved "
                        "first-stage effects"}
    fs, _, _ = fit_bartik_system(ds, panel, spec="period_fe")
    if assume == "b":
        dec = tsls_weights_homogeneous_fs(cells)
        return {"identified": True,
                **_sign_dict(summarize_signs(
                    dec, "first-stage effects fully homogeneous"))}
    level = "location_period" if assume == "bg_t" else "location"
    signs = tsls_weight_signs(aggregate(cells, level), fs.slope)
    return {"identified": "signs_only", **_sign_dict(signs)}


def _write_weight_csv(path: Path, dec) -> None:
    with open(path, "w", encoding="utf-8") as f:
        if dec.level == "cell":
            f.write("sector,location,period,weight\n")
            for (s, g, t) in sorted(dec.weights):
                f.write(f"{dec.sectors[s]},{dec.locations[g]},"
                        f"{dec.periods[t]},{_fmt(dec.weights[(s, g, t)])}\n")
        elif dec.level == "location_period":
            f.write("location,period,weight\n")
            for (g, t) in sorted(dec.weights):
                f.write(f"{dec.locations[g]},{dec.periods[t]},"
                        f"{_fmt(dec.weights[(g, t)])}\n")
        else:
            f.write("location,weight\n")
            for (g,) in sorted(dec.weights):
                f.write(f"{dec.locations[g]},{_fmt(dec.weights[(g,)])}\n")


def cmd_crc(args) -> int:
    ds, _, inputs = _load(args)
    panel = build_bartik(ds, weighted=args.weighted or None)
    options = _crc_options(args)
    est = gmm_fit(ds, panel, options)
    results = {
        "mu_d": est.trends.mu_d, "mu_y": est.trends.mu_y,
        "trend_vcov": est.trends.vcov,
        "avg_beta": est.avg_beta, "se_avg_beta": est.se_avg_beta,
        "avg_gamma": est.avg_gamma, "se_avg_gamma": est.se_avg_gamma,
        "ratio": est.ratio, "se_ratio": est.se_ratio,
        "vcov_full": est.vcov_full,
        "n_locations": est.n_locations, "n_dropped": est.n_dropped,
        "akm_se": None,
    }
    if args.period_effects:
        variant = period_effect_variant(ds, panel, options)
        results["period_effect_variant"] = {
            "beta": variant.beta, "mu_y": variant.mu_y,
            "lambda_shift": variant.lambda_shift,
            "avg_alpha": variant.avg_alpha,
            "avg_alpha_by_period": variant.avg_alpha_by_period,
            "n_locations": variant.n_locations,
        }
    if args.bootstrap:
        targets = ("crc_avg_beta", "crc_avg_gamma", "crc_ratio")
        bs = bootstrap(ds, panel, targets, args.bootstrap, args.seed,
                       options, threads=args.threads)
        results["bootstrap"] = _bootstrap_dict(bs)
    _write_report(Path(args.output_dir), "crc.json", "crc", args, inputs,
                  results)
    return 0


def cmd_debias(args) -> int:
    ds, _, inputs = _load(args)
    panel = build_bartik(ds, weighted=args.weighted or None)
    options = _crc_options(args)
    est = gmm_fit(ds, panel, options)
    deb = debiased_estimators(ds, panel, est.trends)
    results = {
        "mu_d": est.trends.mu_d, "mu_y": est.trends.mu_y,
        "fs_debiased": deb.fs_debiased, "rf_debiased": deb.rf_debiased,
        "ss_debiased": deb.ss_debiased,
        "components": deb.components,
    }
    if args.bootstrap:
        targets = ("debiased_fs", "debiased_rf", "debiased_ss",
                   "debiased_ss_minus_tsls")
        bs = bootstrap(ds, panel, targets, args.bootstrap, args.seed,
                       options, threads=args.threads)
        results["bootstrap"] = _bootstrap_dict(bs)
    _write_report(Path(args.output_dir), "debias.json", "debias", args,
                  inputs, results)
    return 0


def _bootstrap_dict(bs) -> dict:
    return {"targets": list(bs.targets), "point": bs.point, "se": bs.se,
            "n_requested": bs.n_requested, "n_kept": len(bs.draws),
            "failed_draws": list(bs.failed_draws), "seed": bs.seed}


def cmd_placebo(args) -> int:
    ds, _, inputs = _load(args)
    panel = build_bartik(ds, weighted=args.weighted or None)
    result = placebo(ds, panel, args.pre, args.instrument_period,
                     strict=not args.allow_nonzero_pre,
                     shock_tol=args.shock_tol)
    results = {
        "coef_d": result.coef_d, "se_d": result.se_d,
        "coef_y": result.coef_y, "se_y": result.se_y,
        "t_pre": list(result.t_pre), "t_instrument": result.t_instrument,
        "n_obs": result.n_obs,
    }
    _write_report(Path(args.output_dir), "placebo.json", "placebo", args,
                  inputs, results)
    return 0


def cmd_shock_test(args) -> int:
    shocks_df = pd.read_csv(args.shocks, dtype=str, keep_default_na=False)
    for col in ("sector", "period", "shock"):
        if col not in shocks_df.columns:
            raise MissingColumn(f"column {col!r} missing from shocks file",
                                file=args.shocks, column=col)
    cov_df = pd.read_csv(args.sector_covariates, dtype=str,
                         keep_default_na=False)
    id_col = cov_df.columns[0]
    cov_df = cov_df.set_index(id_col)

    cluster_col = args.cluster
    if cluster_col is not None and cluster_col not in cov_df.columns:
        raise MissingColumn(f"cluster column {cluster_col!r} missing from "
                            "covariate file", column=cluster_col)
    covariate_names = [c for c in cov_df.columns if c != cluster_col]

    exposure = None
    if args.weight_by_exposure:
        if not args.shares:
            raise MissingColumn("--weight-by-exposure needs --shares")
        shares_df = pd.read_csv(args.shares, dtype=str, keep_default_na=False)
        n_loc = shares_df["location"].nunique()
        shares_df["share"] = pd.to_numeric(shares_df["share"], errors="coerce")
        exposure = shares_df.groupby("sector")["share"].sum() / n_loc

    periods = args.periods or sorted(set(shocks_df["period"]))
    inputs = {"shocks": args.shocks, "sector_covariates": args.sector_covariates}
    if args.shares:
        inputs["shares"] = args.shares

    per_period = {}
    frames = []
    for period in periods:
        sub = shocks_df[shocks_df["period"] == period]
        if sub.empty:
            raise DataError(f"period {period!r} absent from shocks file")
        sectors = sub["sector"].tolist()
        missing = [s for s in sectors if s not in cov_df.index]
        if missing:
            raise DataError(f"sector {missing[0]!r} has no covariate row")
        y = pd.to_numeric(sub["shock"], errors="coerce").to_numpy(float)
        X = np.column_stack([
            pd.to_numeric(cov_df.loc[sectors, c], errors="coerce")
            .to_numpy(float) for c in covariate_names])
        w = exposure.reindex(sectors).to_numpy(float) if exposure is not None \
            else None
        cl = cov_df.loc[sectors, cluster_col].to_numpy() \
            if cluster_col is not None else None
        frames.append((y, X, w, cl))
        res = shock_exogeneity_test(y, X, weights=w, cluster=cl,
                                    covariate_names=tuple(covariate_names))
        per_period[period] = _exog_dict(res)

    results = {"per_period": per_period, "covariates": covariate_names}
    if args.stack and len(frames) > 1:
        y = np.concatenate([f[0] for f in frames])
        X = np.vstack([f[1] for f in frames])
        w = np.concatenate([f[2] for f in frames]) if exposure is not None \
            else None
        cl = np.concatenate([f[3] for f in frames]) if cluster_col else None
        res = shock_exogeneity_test(y, X, weights=w, cluster=cl,
                                    covariate_names=tuple(covariate_names))
        results["stacked"] = _exog_dict(res)
    _write_report(Path(args.output_dir), "shock_test.json", "shock-test",
                  args, inputs, results)
    return 0


def _exog_dict(res) -> dict:
    return {
        "coefficients": dict(zip(res.covariate_names, res.coefficients)),
        "ses": dict(zip(res.covariate_names, res.ses)),
        "intercept": res.intercept, "intercept_se": res.intercept_se,
        "f_stat": res.f_stat, "p_value": res.p_value,
        "r_squared": res.r_squared, "n": res.n,
        "df_denominator": res.df_denominator,
    }


def cmd_simulate(args) -> int:
    config = _read_sim_config(args.config)
    ds, truth = simulate(config, args.seed)
    outdir = Path(args.output_dir)
    write_dataset(ds, outdir)
    truth_payload = {
        "beta": truth.beta, "alpha": truth.alpha, "gamma": truth.gamma,
        "mu_d": truth.mu_d, "mu_y": truth.mu_y,
        "noise_d": truth.noise_d, "noise_y": truth.noise_y,
        "seed": truth.seed,
        "locations": list(ds.locations), "sectors": list(ds.sectors),
        "periods": list(ds.periods),
    }
    with open(outdir / "truth.json", "w", encoding="utf-8") as f:
        json.dump(_jsonable(truth_payload), f, sort_keys=True, indent=2)
        f.write("\n")
    return 0


def cmd_mc(args) -> int:
    config = _read_sim_config(args.config)
    estimators = tuple(args.estimators.split(","))
    report = monte_carlo(config, reps=args.reps, seed=args.seed,
                         estimators=estimators, threads=args.threads)
    results = {
        "estimators": list(report.estimators),
        "mc_mean": report.mc_mean, "estimand_mean": report.estimand_mean,
        "bias": report.bias, "mc_se": report.mc_se,
        "bias_se": report.bias_se, "n_reps": report.n_reps,
        "failed_reps": list(report.failed_reps),
        "draws": report.draws, "estimands": report.estimands,
    }
    _write_report(Path(args.output_dir), "mc_report.json", "mc", args,
                  {"config": args.config}, results)
    return 0


def _read_sim_config(path: str) -> SimConfig:
    if not Path(path).exists():
        raise MissingColumn(f"config file not found: {path}", file=path)
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    array_fields = ("fixed_shocks", "share_matrix", "beta_values",
                    "alpha_values", "location_weights")
    kwargs = {}
    for key, value in raw.items():
        if key in array_fields and value is not None:
            value = np.asarray(value, dtype=float)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return SimConfig(**kwargs)
    except TypeError as exc:
        raise DataError(f"bad simulation config: {exc}") from exc


def cmd_report(args) -> int:
    merged: dict[str, object] = {}
    inputs = {}
    for path in args.inputs:
        if not Path(path).exists():
            raise MissingColumn(f"report file not found: {path}", file=path)
        with open(path, encoding="utf-8") as f:
            sub = json.load(f)
        key = sub.get("command", Path(path).stem)
        merged[key] = sub
        inputs[Path(path).name] = path

    tables = {}
    if "weights" in merged:
        w = merged["weights"]["results"]
        tables["weight_summary"] = {
            "fs_rf": w.get("fs_rf_weights"),
            "tsls": w.get("tsls_weights"),
            "spec": w.get("spec"), "level": w.get("level"),
        }
    if "regress" in merged:
        r = merged["regress"]["results"]
        tables["bartik_regressions"] = {
            "first_stage": r["first_stage"]["slope"],
            "reduced_form": r["reduced_form"]["slope"],
            "tsls": r["tsls"]["beta_2sls"],
        }
    if "crc" in merged:
        c = merged["crc"]["results"]
        tables["crc_estimates"] = {
            "avg_beta": c["avg_beta"], "avg_gamma": c["avg_gamma"],
            "ratio": c["ratio"], "se_ratio": c["se_ratio"],
            "mu_d": c["mu_d"], "mu_y": c["mu_y"],
        }
    if "debias" in merged:
        d = merged["debias"]["results"]
        tables["debiased_estimates"] = {
            "fs": d["fs_debiased"], "rf": d["rf_debiased"],
            "ss": d["ss_debiased"],
        }
    _write_report(Path(args.output_dir), "report.json", "report", args,
                  inputs, {"tables": tables, "sections": sorted(merged)})
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _default_threads() -> int:
    value = os.environ.get(ENV_THREADS, "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shiftshare-lens",
        description="Shift-share instruments, weight diagnostics, and "
                    "correlated-random-coefficient estimators.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_io(p, with_covariates=True):
        p.add_argument("panel", help="panel.csv: location,period,d,y[,weight]")
        p.add_argument("shocks", help="shocks.csv: sector,period,shock[,location]")
        p.add_argument("shares", help="shares.csv: sector,location,share[,period]")
        if with_covariates:
            p.add_argument("--sector-covariates", default=None)
            p.add_argument("--location-covariates", default=None)
        add_common(p)

    def add_common(p):
        p.add_argument("--output-dir", default=".", help="report directory")
        p.add_argument("--format", choices=("json", "csv", "both"),
                       default="both")
        p.add_argument("--threads", type=int, default=_default_threads())

    def add_crc_flags(p):
        p.add_argument("--near-zero-policy",
                       choices=("error", "drop", "winsorize"), default="error")
        p.add_argument("--tol", type=float, default=1e-12,
                       help="near-zero threshold relative to the mean "
                            "squared instrument norm")
        p.add_argument("--winsor-quantile", type=float, default=0.05)
        p.add_argument("--bootstrap", type=int, default=0, metavar="N")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("validate", help="load and validate the dataset")
    add_io(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("instrument", help="emit the instrument panel")
    add_io(p)
    p.add_argument("--weighted", action="store_true")
    p.set_defaults(func=cmd_instrument)

    p = sub.add_parser("regress", help="first stage, reduced form, and IV")
    add_io(p)
    p.add_argument("--spec", choices=("none", "intercept", "fe"), default="fe")
    p.add_argument("--weighted", action="store_true")
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("weights", help="realized decomposition weights")
    add_io(p)
    p.add_argument("--spec", choices=("fe", "none"), default="fe")
    p.add_argument("--level", choices=("cell", "gt", "g"), default=None)
    p.add_argument("--assume", choices=("none", "bg_t", "bg", "b"),
                   default="none")
    p.add_argument("--weighted", action="store_true")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("crc", help="correlated-random-coefficient estimators")
    add_io(p)
    p.add_argument("--weighted", action="store_true")
    p.add_argument("--period-effects", action="store_true",
                   help="also fit the homogeneous-first-stage variant with "
                        "period-shifted second-stage effects")
    add_crc_flags(p)
    p.set_defaults(func=cmd_crc)

    p = sub.add_parser("debias", help="debiased no-constant estimators")
    add_io(p)
    p.add_argument("--weighted", action="store_true")
    add_crc_flags(p)
    p.set_defaults(func=cmd_debias)

    p = sub.add_parser("placebo", help="pre-period placebo regressions")
    add_io(p)
    p.add_argument("--pre", nargs="+", required=True,
                   help="pre-period label(s)")
    p.add_argument("--instrument-period", required=True)
    p.add_argument("--allow-nonzero-pre", action="store_true",
                   help="warn instead of failing when pre-period shocks "
                        "are not zero")
    p.add_argument("--shock-tol", type=float, default=0.0)
    p.add_argument("--weighted", action="store_true")
    p.set_defaults(func=cmd_placebo)

    p = sub.add_parser("shock-test",
                       help="regress shocks on sector characteristics")
    p.add_argument("shocks")
    p.add_argument("sector_covariates")
    p.add_argument("--shares", default=None)
    p.add_argument("--weight-by-exposure", action="store_true")
    p.add_argument("--cluster", default=None,
                   help="covariate-file column holding cluster ids")
    p.add_argument("--periods", nargs="*", default=None)
    p.add_argument("--stack", action="store_true",
                   help="also pool all periods into one regression")
    add_common(p)
    p.set_defaults(func=cmd_shock_test)

    p = sub.add_parser("simulate", help="draw a synthetic dataset")
    p.add_argument("--config", required=True, help="SimConfig as JSON")
    p.add_argument("--seed", type=int, default=0)
    add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mc", help="Monte Carlo study of the estimators")
    p.add_argument("--config", required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--estimators", default="tsls,crc_ratio",
                   help=f"comma list from {','.join(BOOTSTRAP_TARGETS)}")
    add_common(p)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("report", help="merge prior reports into one summary")
    p.add_argument("--inputs", nargs="+", required=True)
    add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except EstimationError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except ShiftShareError as exc:  # pragma: no cover - defensive
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
