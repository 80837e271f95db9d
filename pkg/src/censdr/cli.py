"""Batch front end: config parsing, CSV ingestion, command dispatch.

Commands: fit, bands, decompose, simulate. Each reads a flat JSON config,
writes CSV artifacts plus a JSON manifest into the output directory, and
exits 0 on success, 2 on configuration errors, 3 on data errors, and 4 on
numerical failures. The manifest is written even when a command fails.

Grid convention: with a discrete or bunched selection variable, place
s_points at the bunch values; the indicator 1(S <= s) is inclusive, so mass
sitting exactly at a grid point belongs to the lower cell.
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import __version__, _backend
from . import estimator, functionals, inference, simulate
from .errors import CensdrError, ConfigError, DataError
from .likelihood import FloorConfig, ObservationTable, SortingLayout, link

_DEFAULTS = dict(
    s_col="s",
    y_col="y",
    instrument_cols=[],
    sorting_cols=None,
    sorting0_cols=None,
    group_col=None,
    y_points=None,
    y_quantile_indices=None,
    floor_tau=1e-5,
    bootstrap_b=200,
    level=0.95,
    seed=0,
    workers=1,
    band_z0=None,
    censoring="upper",
    censor_point=0.0,
    taus=None,
    strata=None,
    group1=None,
    group0=None,
    n=1000,
    dgp="hsm",
    hsm_nu=[0.5, 0.8],
    hsm_mu=[0.35, 0.4, 0.6],
    hsm_sigma_u=1.0,
    hsm_sigma_v=1.0,
    hsm_rho=0.5,
)


@dataclass
class RunConfig:
    raw: dict
    warnings: list = field(default_factory=list)

    def __getattr__(self, key):
        try:
            return self.raw[key]
        except KeyError:
            raise AttributeError(key)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a flat JSON object")
        raw = dict(_DEFAULTS)
        raw.update(user)
        cfg = cls(raw=raw)
        if "CENSDR_WORKERS" in os.environ:
            try:
                cfg.raw["workers"] = int(os.environ["CENSDR_WORKERS"])
            except ValueError as exc:
                raise ConfigError("CENSDR_WORKERS must be an integer") from exc
        if not 0.0 < cfg.level < 1.0:
            raise ConfigError("level must lie in (0, 1)")
        return cfg

    def require(self, *keys):
        missing = [k for k in keys if self.raw.get(k) is None]
        if missing:
            raise ConfigError(f"missing config keys: {', '.join(missing)}")


def ingest(path, config):
    """Read the CSV into an ObservationTable, applying censoring transforms.

    Rows with s at the censoring level have any outcome value blanked (with
    a counted warning); a missing outcome on a selected row is a data error.
    """
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except OSError as exc:
        raise DataError(f"cannot read input: {exc}") from exc
    except Exception as exc:
        raise DataError(f"input does not parse as CSV: {exc}") from exc
    config.require("z_cols")
    needed = [config.s_col, config.y_col] + list(config.z_cols)
    if config.group_col:
        needed.append(config.group_col)
    missing = [c for c in needed if c not in df.columns]
    if missing:
        raise DataError(f"missing columns: {', '.join(missing)}")

    numeric = {}
    for col in [config.s_col, config.y_col] + list(config.z_cols):
        vals = pd.to_numeric(df[col], errors="coerce")
        bad = vals.isna() & df[col].notna() & (df[col].astype(str).str.strip() != "")
        if bad.any():
            raise DataError(
                f"non-numeric values in column {col!r}",
                rows=list(np.where(bad)[0]),
            )
        numeric[col] = vals.to_numpy(dtype=np.float64)

    s = numeric[config.s_col]
    if config.censoring == "lower":
        s = config.censor_point - s
    elif config.censoring == "upper":
        s = s - config.censor_point
    else:
        raise ConfigError("censoring must be 'upper' or 'lower'")
    if np.any(~np.isfinite(s)):
        raise DataError("missing selection values", rows=list(np.where(~np.isfinite(s))[0]))
    if np.any(s < 0):
        raise DataError(
            "selection values below the censoring point after transform",
            rows=list(np.where(s < 0)[0]),
        )

    y = numeric[config.y_col]
    stray = (s <= 0) & np.isfinite(y)
    if stray.any():
        config.warnings.append(
            f"{int(stray.sum())} rows had an outcome value at the censoring level; treated as missing"
        )
        y = np.where(stray, np.nan, y)

    z = np.column_stack([numeric[c] for c in config.z_cols])
    x_cols = tuple(
        i for i, c in enumerate(config.z_cols) if c not in set(config.instrument_cols)
    )
    if not x_cols:
        raise ConfigError("instrument_cols leaves no outcome-equation covariates")
    table = ObservationTable(
        z=z, s=s, y=y, x_cols=x_cols, z_names=tuple(config.z_cols)
    )
    groups = df[config.group_col] if config.group_col else None
    return table, groups


def _layout(config):
    def cols(names):
        if names is None:
            return None
        idx = []
        for name in names:
            if name not in config.z_cols:
                raise ConfigError(f"sorting column {name!r} not among z_cols")
            idx.append(config.z_cols.index(name))
        return tuple(idx)

    return SortingLayout(r_cols=cols(config.sorting_cols), r0_cols=cols(config.sorting0_cols))


def _gridspec(config, data):
    config.require("s_points")
    if config.y_points is not None:
        return estimator.GridSpec(tuple(config.s_points), tuple(config.y_points))
    if config.y_quantile_indices is None:
        raise ConfigError("need y_points or y_quantile_indices")
    return estimator.GridSpec.from_quantiles(
        data, tuple(config.s_points), tuple(config.y_quantile_indices)
    )


def _band_z0(config, data):
    if config.band_z0 is not None:
        try:
            return np.array([float(config.band_z0[c]) for c in config.z_cols])
        except KeyError as exc:
            raise ConfigError(f"band_z0 missing column {exc}") from exc
    return data.z.mean(axis=0)


def _cellkey(value):
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    return repr(float(value))


def _manifest(config, command, extra, error=None):
    # worker count is an execution detail that cannot affect results, so it
    # is excluded from the echo to keep artifacts byte-identical across runs
    echo = {k: v for k, v in config.raw.items() if k != "workers"}
    man = {
        "command": command,
        "config": echo,
        "seed": config.raw.get("seed"),
        "versions": {
            "censdr": __version__,
            "numpy": np.__version__,
            "pandas": pd.__version__,
            "backend": _backend.backend_name(),
        },
        "warnings": list(config.warnings),
        "error": error,
    }
    man.update(extra)
    return man


def _write_manifest(outdir, man):
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(man, fh, sort_keys=True, indent=2, default=str)
        fh.write("\n")


def _diag_payload(paths):
    diags = {}
    for key, d in sorted(paths.diagnostics.items(), key=repr):
        block, cell = key
        diags[f"{block}:{_cellkey(cell)}"] = {
            "converged": bool(d.converged),
            "iterations": int(d.iterations),
            "grad_norm": float(d.grad_norm),
            "floor_active": bool(d.floor_active),
            "message": d.message,
        }
    return {
        "cells": diags,
        "failed_cells": [_cellkey(c) for c in sorted(paths.failed)],
        "fit_warnings": list(paths.warnings),
    }


def _fit_with_inference(config, data):
    layout = _layout(config)
    grid = _gridspec(config, data)
    floor = FloorConfig(tau=float(config.floor_tau))
    paths = estimator.fit(
        data, grid, layout=layout, floor=floor, workers=int(config.workers)
    )
    records = inference.influence(paths, data)
    return paths, records


def _coefficients_frame(paths, records, z_names):
    v_mu, v_theta = inference.variance_paths(records)
    v_rho = inference.variance_rho(records)
    n = paths.n_obs
    d_x = len(paths.x_cols)
    rows = []

    def se(block_var, i):
        return float(np.sqrt(max(block_var[i, i], 0.0) / n))

    for s in paths.grid.s_points:
        for i, name in enumerate(z_names):
            rows.append(("mu", s, "", name, paths.mu[s][i], se(v_mu[s], i)))
    for y in paths.grid.y_points:
        for i, c in enumerate(paths.x_cols):
            rows.append(("nu", "", y, z_names[c], paths.nu[y][i], se(v_theta[y], i)))
        for i, c in enumerate(paths.r0_cols):
            rows.append(
                ("rho0", "", y, z_names[c], paths.rho0[y][i], se(v_theta[y], d_x + i))
            )
    for cell in paths.grid.cells():
        s, y = cell
        if cell in paths.failed:
            rows.append(("rho", s, y, "", np.nan, np.nan))
            continue
        for i, c in enumerate(paths.r_cols):
            rows.append(("rho", s, y, z_names[c], paths.rho[cell][i], se(v_rho[cell], i)))
    return pd.DataFrame(
        rows, columns=["block", "s", "y", "coef", "estimate", "se"]
    )


def _plots_frame(paths, z0):
    """Long-format sorting-function values for plotting, failed cells interpolated.

    Interpolated rows are display-only fill; they carry interpolated=1 and
    never feed inference.
    """
    z0r = np.asarray(z0)[list(paths.r_cols)]
    rows = []
    for s in paths.grid.interior_s:
        ys = list(paths.grid.y_points)
        vals = {}
        for y in ys:
            cell = (s, y)
            if cell in paths.rho:
                vals[y] = float(link(z0r @ paths.rho[cell]))
        for y in ys:
            if y in vals:
                rows.append((s, y, "sorting_g", vals[y], 0))
            elif vals:
                good = np.array(sorted(vals))
                gv = np.array([vals[g] for g in good])
                rows.append((s, y, "sorting_g", float(np.interp(y, good, gv)), 1))
    return pd.DataFrame(rows, columns=["s", "y", "series", "value", "interpolated"])


def run_fit(config, outdir):
    config.require("input")
    data, _ = ingest(config.input, config)
    paths, records = _fit_with_inference(config, data)
    coeffs = _coefficients_frame(paths, records, list(config.z_cols))
    coeffs.to_csv(os.path.join(outdir, "coefficients.csv"), index=False)
    _plots_frame(paths, _band_z0(config, data)).to_csv(
        os.path.join(outdir, "plots.csv"), index=False
    )
    extra = _diag_payload(paths)
    extra["influence_warnings"] = records.warnings
    return extra


def run_bands(config, outdir):
    config.require("input")
    data, _ = ingest(config.input, config)
    paths, records = _fit_with_inference(config, data)
    z0 = _band_z0(config, data)
    bs, _ = inference.sorting_function_band(
        paths, records, z0, float(config.level), int(config.bootstrap_b),
        int(config.seed),
    )
    rows = [
        (s, y, bs.estimate[(s, y)], bs.se[(s, y)], bs.lower[(s, y)],
         bs.upper[(s, y)], bs.critical_value, bs.level)
        for (s, y) in sorted(bs.estimate)
    ]
    pd.DataFrame(
        rows, columns=["s", "y", "estimate", "se", "lower", "upper", "cv", "level"]
    ).to_csv(os.path.join(outdir, "bands.csv"), index=False)
    coeffs = _coefficients_frame(paths, records, list(config.z_cols))
    coeffs.to_csv(os.path.join(outdir, "coefficients.csv"), index=False)
    extra = _diag_payload(paths)
    extra["band"] = {
        "critical_value": bs.critical_value,
        "level": bs.level,
        "dropped_cells": [_cellkey(c) for c in bs.dropped],
        "z0": list(map(float, z0)),
    }
    return extra


def run_decompose(config, outdir):
    config.require("input", "group_col", "group1", "group0", "strata")
    data, groups = ingest(config.input, config)
    if groups is None:
        raise ConfigError("decompose needs group_col")
    g1_mask = (groups == config.group1).to_numpy()
    g0_mask = (groups == config.group0).to_numpy()
    if not g1_mask.any() or not g0_mask.any():
        raise DataError("a group has no rows")

    def subset(mask):
        return ObservationTable(
            z=data.z[mask], s=data.s[mask], y=data.y[mask],
            x_cols=data.x_cols, z_names=data.z_names,
        )

    d1, d0 = subset(g1_mask), subset(g0_mask)
    # a common grid: pooled quantiles keep the two fits comparable
    grid = _gridspec(config, data)
    layout = _layout(config)
    floor = FloorConfig(tau=float(config.floor_tau))
    p1 = estimator.fit(d1, grid, layout=layout, floor=floor, workers=int(config.workers))
    p0 = estimator.fit(d0, grid, layout=layout, floor=floor, workers=int(config.workers))
    r1 = inference.influence(p1, d1)
    r0 = inference.influence(p0, d0)
    g1 = functionals.GroupInputs(p1, d1)
    g0 = functionals.GroupInputs(p0, d0)

    s_lo, s_hi = config.strata
    s_hi = np.inf if s_hi in ("inf", None) else float(s_hi)
    s_lo = float(s_lo)
    taus = config.taus or [round(t, 2) for t in np.arange(0.1, 0.91, 0.05)]
    tab = functionals.wage_decomposition(g1, g0, s_lo, s_hi, taus)
    bounds = functionals.wage_decomposition_bootstrap(
        g1, g0, r1, r0, s_lo, s_hi, taus,
        B=int(config.bootstrap_b), seed=int(config.seed), level=float(config.level),
    )
    frame = {
        "tau": tab.taus,
        "total": tab.total,
        "wage_structure": tab.wage_structure,
        "selection_sorting": tab.selection_sorting,
        "selection_structure": tab.selection_structure,
        "composition": tab.composition,
    }
    with np.errstate(divide="ignore", invalid="ignore"):
        for comp in ("wage_structure", "selection_sorting", "selection_structure", "composition"):
            frame[f"{comp}_share"] = np.where(
                tab.total != 0, getattr(tab, comp) / tab.total, np.nan
            )
    for comp, (lo, hi) in bounds.items():
        frame[f"{comp}_lower"] = lo
        frame[f"{comp}_upper"] = hi
    pd.DataFrame(frame).to_csv(os.path.join(outdir, "decomposition.csv"), index=False)

    hd = functionals.hours_decomposition(g1, g0)
    pd.DataFrame(
        {
            "s": hd.s_points,
            "total": hd.total,
            "structure": hd.structure,
            "composition": hd.composition,
        }
    ).to_csv(os.path.join(outdir, "hours_decomposition.csv"), index=False)
    return {
        "group1": _diag_payload(p1),
        "group0": _diag_payload(p0),
        "strata": [s_lo, "inf" if s_hi == np.inf else s_hi],
    }


def run_simulate(config, outdir):
    if config.dgp != "hsm":
        raise ConfigError(f"unknown dgp {config.dgp!r}")
    design = simulate.default_design()
    params = simulate.HsmParams(
        nu=tuple(config.hsm_nu), mu=tuple(config.hsm_mu),
        sigma_u=float(config.hsm_sigma_u), sigma_v=float(config.hsm_sigma_v),
        rho=float(config.hsm_rho), design=design,
    )
    table, truth = simulate.simulate_hsm(int(config.n), params, int(config.seed))
    df = pd.DataFrame({"s": table.s, "y": table.y})
    for j, name in enumerate(table.z_names):
        df[name] = table.z[:, j]
    df.to_csv(os.path.join(outdir, "sample.csv"), index=False)
    return {
        "n": int(config.n),
        "selected_fraction": float(table.d.mean()),
        "true_sorting_g": float(params.rho),
    }


_COMMANDS = {
    "fit": run_fit,
    "bands": run_bands,
    "decompose": run_decompose,
    "simulate": run_simulate,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="censdr",
        description="Censored-selection distribution regression: estimation, bands, decompositions.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="flat JSON config file")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    args = parser.parse_args(argv)

    try:
        config = RunConfig.load(args.config)
        outdir = args.out or config.raw.get("output_dir")
        if not outdir:
            raise ConfigError("no output directory (config output_dir or --out)")
        os.makedirs(outdir, exist_ok=True)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        extra = _COMMANDS[args.command](config, outdir)
    except ConfigError as exc:
        _write_manifest(outdir, _manifest(config, args.command, {}, error={
            "type": type(exc).__name__, "message": str(exc)}))
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        payload = {"type": type(exc).__name__, "message": str(exc), "rows": exc.rows[:50]}
        _write_manifest(outdir, _manifest(config, args.command, {}, error=payload))
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except CensdrError as exc:
        payload = {"type": type(exc).__name__, "message": str(exc)}
        for attr in ("step", "cell"):
            if getattr(exc, attr, None) is not None:
                payload[attr] = repr(getattr(exc, attr))
        _write_manifest(outdir, _manifest(config, args.command, {}, error=payload))
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        # grid/argument validation problems surface as configuration errors
        _write_manifest(outdir, _manifest(config, args.command, {}, error={
            "type": type(exc).__name__, "message": str(exc)}))
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _write_manifest(outdir, _manifest(config, args.command, extra))
    return 0


if __name__ == "__main__":
    sys.exit(main())
