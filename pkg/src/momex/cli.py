"""Command-line front end: config -> experiment -> CSV tables + JSON run record."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import time
import warnings
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .config import (ConfigError, RunConfig, SECTIONS, _parse_scalar, config_to_dict,
                     parse_config, serialize_config)
from .experiments import PRESETS, Table, map_ordered, run_preset
from .physics import PERT_RATIO_WARN, TWO_PI, compute_rates
from .sequence import (Bragg, Dressing, Free, Mark, PulseSequence, SequenceError,
                       apply_bragg, default_phi_grid, fringe_from_state, make_engine, run_sequence)

ENV_OUTPUT = "MOMEX_OUTPUT_DIR"
ENV_WORKERS = "MOMEX_WORKERS"

# internal column -> (output header, factor); frequencies leave as linear Hz
_COLUMN_OUT = {
    "delta_d": ("delta_d_hz", 1 / TWO_PI),
    "chi": ("chi_hz", 1 / TWO_PI),
    "delta_phi": ("delta_phi_rad", 1.0),
    "delta_phi_exchange": ("delta_phi_exchange_rad", 1.0),
    "delta_phi_oat": ("delta_phi_oat_rad", 1.0),
    "ratio": ("chi_n_over_sigma_in", 1.0),
    "transfer_rate": ("transfer_rate_per_s", 1.0),
}


class RunFailure(RuntimeError):
    pass


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(table: Table, path):
    """CSV with one header row, LF line endings, repr floats."""
    headers, factors = [], []
    for col in table.columns:
        name, f = _COLUMN_OUT.get(col, (col, None))
        headers.append(name)
        factors.append(f)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(headers)
        for row in table.rows:
            w.writerow([_cell(v * f if f is not None else v) for v, f in zip(row, factors)])
    return headers


def _rates_summary(params):
    r = compute_rates(params, warn=False)
    g = params.dispersive_shift
    return {
        "dispersive_shift_hz": g / TWO_PI,
        "alpha0_re": r.alpha0.real, "alpha0_im": r.alpha0.imag,
        "intracavity_photons": abs(r.alpha0) ** 2,
        "chi_plus_hz": r.chi_plus / TWO_PI, "chi_minus_hz": r.chi_minus / TWO_PI,
        "chi_hz": r.chi / TWO_PI,
        "gamma_plus_per_s": r.gamma_plus, "gamma_minus_per_s": r.gamma_minus,
        "pert_ratio": r.pert_ratio,
        "sigma_in_hz": params.sigma_in / TWO_PI,
        "chi_n_over_sigma_in": r.chi * params.n_atoms / params.sigma_in if params.sigma_in else math.inf,
    }


def _banner(pert):
    if pert > PERT_RATIO_WARN:
        bar = "!" * 72
        print(f"{bar}\n! perturbative ratio sqrt(N)|alpha0|G / min|delta_d +- omega_z| = {pert:.3g}"
              f"\n! exceeds {PERT_RATIO_WARN}: adiabatic elimination is not reliable here\n{bar}",
              file=sys.stderr)


def build_sequence(events):
    out = []
    for ev in events:
        t = ev["type"]
        if t == "bragg":
            extra = {"rabi": TWO_PI * ev["rabi_hz"]} if "rabi_hz" in ev else {}
            out.append(Bragg(ev["theta"], ev["phi"], ev["mode"], scan=ev["scan"], **extra))
        elif t == "free":
            out.append(Free(ev["duration"]))
        elif t == "dressing":
            out.append(Dressing(ev["duration"], ev["flux_scale"]))
        else:
            out.append(Mark(ev["label"]))
    return PulseSequence(out, "custom")


def _run_custom_sequence(cfg: RunConfig, params, icfg):
    run = cfg.run
    sr = True if run["superradiance"] is None else run["superradiance"]
    eng, st = make_engine(params, run["n_bins"] or 64, run["model"], icfg, sr)
    seq = build_sequence(cfg.sequence)
    prefix, scan = seq.split_scan()
    final, trace = run_sequence(prefix, eng, st)
    cols = list(trace[0].keys())
    tables = {"trace": Table(cols, [tuple(r[c] for c in cols) for r in trace])}
    meta = {}
    if scan is not None:
        phis = default_phi_grid()
        fr = fringe_from_state(final, scan, eng, phis, strict=False)
        meta["fringe"] = dataclasses.asdict(fr)
        rows = []
        for phi in phis:
            out = apply_bragg(final, Bragg(scan.theta, float(phi), scan.mode, scan.rabi),
                              eng.profile, eng.cfg)
            rows.append((float(phi), float(out.jz.sum())))
        tables["fringe"] = Table(["phi_rad", "jz"], rows)
    return tables, meta


def execute(cfg: RunConfig, workers=None):
    """Run the configured experiment; returns ({name: Table}, metadata)."""
    params = cfg.params
    icfg = cfg.integrator_config
    run = cfg.run
    if run["experiment"] == "sequence":
        return _run_custom_sequence(cfg, params, icfg)
    common = dict(cfg=icfg, n_bins=run["n_bins"], mode=run["pulse_mode"],
                  workers=workers if workers is not None else run["workers"])
    if run["model"] != "effective":
        common["model"] = run["model"]
    if run["superradiance"] is not None:
        common["superradiance"] = run["superradiance"]
    keep = "physics.delta_d" not in cfg.defaults_applied
    table = run_preset(run["experiment"], params, cfg.experiment_kwargs(), keep, **common)
    return {run["experiment"]: table}, _jsonable(table.meta)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def output_dir_for(cfg: RunConfig, override=None):
    path = override or os.environ.get(ENV_OUTPUT) or cfg.run["output_dir"]
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise RunFailure(f"output directory {path!r} is not writable")
    return path


def run(cfg: RunConfig, out_dir=None, workers=None, quiet=False):
    """Execute and write outputs. Returns the RunRecord dict."""
    params = cfg.params
    rates = _rates_summary(params)
    _banner(rates["pert_ratio"])
    out = output_dir_for(cfg, out_dir)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            tables, meta = execute(cfg, workers)
    except (SequenceError, ValueError, RuntimeError) as exc:
        raise RunFailure(f"experiment {cfg.run['experiment']!r} failed: {exc}") from exc
    wall = time.perf_counter() - t0
    files = {}
    stem = cfg.run["name"] or cfg.run["experiment"]
    for name, table in tables.items():
        fname = f"{stem}.csv" if name == cfg.run["experiment"] else f"{stem}_{name}.csv"
        headers = write_table(table, os.path.join(out, fname))
        files[name] = {"path": fname, "columns": headers, "rows": len(table.rows)}
    record = {
        "code_version": __version__,
        "config_text": serialize_config(cfg),
        "config": _jsonable(config_to_dict(cfg)),
        "derived_rates": _jsonable(rates),
        "tables": files,
        "metadata": meta,
        "started_utc": started,
        "wall_clock_s": wall,
    }
    with open(os.path.join(out, f"{stem}_record.json"), "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not quiet:
        for name, info in files.items():
            print(f"wrote {os.path.join(out, info['path'])} ({info['rows']} rows)")
    return record


# -- sweeps ------------------------------------------------------------------------

def _sweep_point(job):
    text, section, key, value_text = job
    cfg = parse_config(text)
    value = _parse_scalar(key, SECTIONS[section][key], value_text, None)
    getattr(cfg, {"physics": "physics", "run": "run", "integrator": "integrator",
                  "options": "options"}[section])[key] = value
    cfg.params  # validate
    tables, _ = execute(cfg, workers=1)
    return value, tables


def sweep(cfg: RunConfig, target, values, out_dir=None, workers=1):
    """Re-run the experiment for each value of `section.key`; rows keep grid order."""
    if "." not in target:
        raise ConfigError("sweep target must look like section.key")
    section, key = target.split(".", 1)
    if section not in ("physics", "run", "integrator", "options") or key not in SECTIONS[section]:
        raise ConfigError(f"cannot sweep {target!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    text = serialize_config(cfg)
    results = map_ordered(_sweep_point, [(text, section, key, v) for v in values], workers)
    out = output_dir_for(cfg, out_dir)
    merged = {}
    for value, tables in results:
        for name, t in tables.items():
            m = merged.setdefault(name, Table([f"sweep_{key}"] + t.columns))
            m.rows.extend((value,) + tuple(r) for r in t.rows)
    stem = cfg.run["name"] or cfg.run["experiment"]
    for name, table in merged.items():
        write_table(table, os.path.join(out, f"{stem}_sweep_{key}.csv"))
        print(f"wrote {os.path.join(out, f'{stem}_sweep_{key}.csv')} ({len(table.rows)} rows)")
    return merged


# -- commands ----------------------------------------------------------------------

def _load(path, experiment=None):
    text = ""
    if path:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    cfg = parse_config(text)
    if experiment:
        if cfg.sequence:
            raise ConfigError("a [sequence] section cannot be combined with a figure preset")
        cfg.run["experiment"] = experiment
    return cfg


def _workers(arg):
    if arg is not None:
        return arg
    env = os.environ.get(ENV_WORKERS)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{ENV_WORKERS} must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError(f"{ENV_WORKERS} must be >= 1")
        return n
    return None


def cmd_rates(args):
    cfg = _load(args.config)
    summary = _rates_summary(cfg.params)
    width = max(len(k) for k in summary)
    for k, v in summary.items():
        print(f"{k:<{width}}  {v:.6g}")
    _banner(summary["pert_ratio"])
    return 0


def cmd_run(args, experiment=None):
    cfg = _load(args.config, experiment)
    run(cfg, args.out, _workers(args.workers))
    return 0


def cmd_sweep(args):
    cfg = _load(args.config)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    sweep(cfg, args.param, values, args.out, _workers(args.workers) or 1)
    return 0


def cmd_oracle(args):
    from .oracle import ERROR_TABLE_COLUMNS, collective_recoil_check, meanfield_vs_exact
    try:
        n_grid = [int(v) for v in args.n_grid.split(",")]
        rows = meanfield_vs_exact(n_grid, args.scenario)
    except ValueError as exc:
        raise RunFailure(f"oracle: {exc}") from exc
    out = args.out or os.environ.get(ENV_OUTPUT) or "momex_out"
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, f"oracle_{args.scenario}.csv")
    write_table(Table(list(ERROR_TABLE_COLUMNS), rows), path)
    for r in rows:
        print("  ".join(_cell(v) for v in r))
    rep = collective_recoil_check(args.recoil_n)
    print(json.dumps(_jsonable(rep), sort_keys=True))
    print(f"wrote {path}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="momex", description="Cavity momentum-exchange simulator")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("config", nargs=None if config_required else "?", help="config file")
        sp.add_argument("--out", help=f"output directory (env {ENV_OUTPUT})")
        sp.add_argument("--workers", type=int, help=f"worker processes (env {ENV_WORKERS})")

    sp = sub.add_parser("rates", help="print derived couplings")
    sp.add_argument("config", nargs="?")
    sp.set_defaults(func=cmd_rates)
    sp = sub.add_parser("run", help="run the experiment named in a config")
    common(sp, config_required=True)
    sp.set_defaults(func=cmd_run)
    sp = sub.add_parser("sweep", help="repeat a run over values of one config key")
    common(sp, config_required=True)
    sp.add_argument("--param", required=True, help="section.key, e.g. physics.n_atoms")
    sp.add_argument("--values", required=True, help="comma-separated values (units allowed)")
    sp.set_defaults(func=cmd_sweep)
    for name in PRESETS:
        sp = sub.add_parser(name, help=f"run the {name} preset")
        common(sp)
        sp.set_defaults(func=lambda a, n=name: cmd_run(a, n))
    sp = sub.add_parser("oracle", help="exact small-N validation tables")
    sp.add_argument("--scenario", default="homogeneous",
                    choices=("homogeneous", "two_group", "dissipative"))
    sp.add_argument("--n-grid", default="2,4,6,8,10,12")
    sp.add_argument("--recoil-n", type=int, default=6)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_oracle)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        where = getattr(args, "config", None) or "<defaults>"
        print(f"momex: config error in {where}: {exc}", file=sys.stderr)
        return 2
    except (RunFailure, OSError) as exc:
        print(f"momex: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
