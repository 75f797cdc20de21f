"""Command line entry point: ``spamnet <command> --config run.ini``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__, glm, network, rates, simulate
from .errors import ConfigError, DataError, SpamnetError
from .estimator import NetworkFit, cross_validate, fit_network, predict
from .io import RunConfig, TimeSeries, load_config, load_csv, save_csv, write_json

COMMANDS = ("simulate", "fit", "rates", "experiment", "cluster", "cv", "predict")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest(command: str, cfg: RunConfig, seed: int, inputs=()) -> dict:
    return {
        "command": command,
        "config_sha256": cfg.digest(),
        "config": cfg.sections,
        "seed": seed,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "versions": {"spamnet": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
    }


def _need_data(args, family=None) -> TimeSeries:
    if not args.data:
        raise ConfigError(f"{args.command} needs --data")
    return load_csv(args.data, family)


def _load_fit(path_str: str, what: str) -> NetworkFit:
    if not path_str:
        raise ConfigError(f"[{what}] fit = <path to fit.json> is required")
    try:
        with open(path_str) as fh:
            return NetworkFit.from_dict(json.load(fh))
    except OSError as exc:
        raise DataError(f"cannot read fit file {path_str}: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed fit file {path_str}: {exc}") from exc


def choose_lambda(cfg: RunConfig, series: TimeSeries) -> tuple[float, float, dict]:
    """Penalties for the configured mode, plus a report of how they were chosen."""
    lam = cfg["lambda"]
    kernel = cfg.kernel()
    if lam["mode"] == "fixed":
        return lam["lambda_T"], lam["lambda_H"], {"mode": "fixed"}
    if lam["mode"] == "theory":
        rep = rates.tuning(kernel, cfg.mixing(), series.T, series.d, c1=lam["c1"], s=lam["s"])
        return rep.lambda_T, rep.lambda_H, {"mode": "theory", "rates": rep.as_flat()}
    c = cfg["cv"]
    res = cross_validate(series, cfg.cv_grid(), c["horizon"], kernel, glm.family(cfg.family),
                         cfg.fit_config(), train_len=c["train_len"])
    return res.best[0], res.best[1], {"mode": "cv", "table": res.table, "folds": res.folds}


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg: RunConfig, args, out: Path) -> None:
    s = cfg["simulate"]
    spec = simulate.SimSpec(cfg.family, s["d"], s["T"], s["r"], s=s["s"], seed=args.seed,
                            burn_in=s["burn_in"])
    X, truth = simulate.generate(spec)
    names = [f"x{k}" for k in range(spec.d)]
    save_csv(TimeSeries(X, names, cfg.family), out / "data.csv")
    write_json(truth.to_dict(), out / "truth.json")
    write_json(manifest("simulate", cfg, args.seed), out / "manifest.json")


def cmd_fit(cfg: RunConfig, args, out: Path) -> None:
    series = _need_data(args, cfg.family)
    lam_T, lam_H, how = choose_lambda(cfg, series)
    fit = fit_network(series, cfg.kernel(), glm.family(cfg.family), cfg.fit_config(lam_T, lam_H))
    A = fit.adjacency()
    report = {
        "lambda_T": lam_T, "lambda_H": lam_H, "lambda_choice": how,
        "columns": series.column_names,
        "supports": {series.column_names[nf.j]: [series.column_names[k] for k in nf.support]
                     for nf in fit.node_fits},
        "n_edges": int(A.sum()), "empty_network": bool(A.sum() == 0),
        "converged": [nf.converged for nf in fit.node_fits],
    }
    write_json(fit.to_dict(), out / "fit.json")
    write_json(report, out / "report.json")
    _write_matrix(A, series.column_names, out / "adjacency.csv")
    write_json(manifest("fit", cfg, args.seed, [args.data]), out / "manifest.json")


def cmd_rates(cfg: RunConfig, args, out: Path) -> None:
    if args.data:
        series = load_csv(args.data, cfg.family)
        T, d, inputs = series.T, series.d, [args.data]
    else:
        T, d, inputs = cfg["simulate"]["T"], cfg["simulate"]["d"], []
    rep = rates.tuning(cfg.kernel(), cfg.mixing(), T, d, c1=cfg["lambda"]["c1"],
                       s=cfg["lambda"]["s"])
    write_json(rep.as_flat(), out / "rates.json")
    write_json(manifest("rates", cfg, args.seed, inputs), out / "manifest.json")


def cmd_experiment(cfg: RunConfig, args, out: Path) -> None:
    e = cfg["experiment"]
    sim = cfg["simulate"]
    rows = simulate.run_grid(e["families"], e["d_list"], e["T_list"], e["r_list"], e["trials"],
                             seed0=args.seed, s=sim["s"], burn_in=sim["burn_in"],
                             lambda_scale=e["lambda_scale"])
    simulate.write_grid_csv(rows, out / "grid.csv")
    simulate.write_grid_jsonl(rows, out / "grid.jsonl")
    slopes = simulate.trend_slopes(rows)
    with open(out / "slopes.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["family", "d", "r", "slope", "n_T"])
        w.writeheader()
        w.writerows(slopes)
    with open(out / "plot.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "d", "r", "T", "median_mse", "log_T", "log_median_mse"])
        for key in sorted({(r["family"], r["d"], r["r"], r["T"]) for r in rows}):
            med = simulate.median_mse(rows, family=key[0], d=key[1], r=key[2], T=key[3])
            log_m = math.log(med) if med > 0 else math.nan
            w.writerow([*key, repr(med), repr(math.log(key[3])), repr(log_m)])
    write_json(manifest("experiment", cfg, args.seed), out / "manifest.json")


def _write_matrix(A, names, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", *names])
        for name, row in zip(names, A):
            w.writerow([name, *[int(v) for v in row]])


def cmd_cluster(cfg: RunConfig, args, out: Path) -> None:
    c = cfg["cluster"]
    fit = _load_fit(c["fit"], "cluster")
    A = network.adjacency(fit, c["threshold"])
    try:
        ccfg = network.ClusterConfig(c["k"], c["lambda_cov"], args.seed, c["kmeans_restarts"])
    except ValueError as exc:
        raise ConfigError(f"[cluster] {exc}") from exc
    inputs = [c["fit"]]
    if c["coords"]:
        coords = load_csv(c["coords"])
        if coords.values.shape[0] != fit.d:
            raise DataError(f"coords file has {coords.values.shape[0]} rows, fit has {fit.d} nodes")
        labels = network.covariate_cluster(A, coords.values, ccfg)
        inputs.append(c["coords"])
    else:
        labels = network.spectral_cluster(A, ccfg)
    with open(out / "labels.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "label"])
        w.writerows(enumerate(int(v) for v in labels))
    _write_matrix(A, [str(k) for k in range(fit.d)], out / "adjacency.csv")
    write_json(manifest("cluster", cfg, args.seed, inputs), out / "manifest.json")


def cmd_cv(cfg: RunConfig, args, out: Path) -> None:
    series = _need_data(args, cfg.family)
    if not cfg["cv"]["lambda_T_grid"]:
        raise ConfigError("[cv] lambda_T_grid is required")
    c = cfg["cv"]
    res = cross_validate(series, cfg.cv_grid(), c["horizon"], cfg.kernel(),
                         glm.family(cfg.family), cfg.fit_config(), train_len=c["train_len"])
    write_json({"best": {"lambda_T": res.best[0], "lambda_H": res.best[1]},
                "table": res.table, "folds": res.folds}, out / "cv.json")
    write_json(manifest("cv", cfg, args.seed, [args.data]), out / "manifest.json")


def cmd_predict(cfg: RunConfig, args, out: Path) -> None:
    fit = _load_fit(cfg["predict"]["fit"], "predict")
    series = _need_data(args)
    if series.d != fit.d:
        raise DataError(f"data has {series.d} columns, fit expects {fit.d}")
    with open(out / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        names = series.column_names
        w.writerow(["t", *[f"eta_{n}" for n in names], *[f"mean_{n}" for n in names]])
        for t, x in enumerate(series.values):
            eta, mean = predict(fit, x)
            w.writerow([t + 1, *[format(v, ".17g") for v in eta],
                        *[format(v, ".17g") for v in mean]])
    write_json(manifest("predict", cfg, args.seed, [args.data, cfg["predict"]["fit"]]),
               out / "manifest.json")


HANDLERS = {"simulate": cmd_simulate, "fit": cmd_fit, "rates": cmd_rates,
            "experiment": cmd_experiment, "cluster": cmd_cluster, "cv": cmd_cv,
            "predict": cmd_predict}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spamnet", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="sectioned key = value file")
    p.add_argument("--data", help="time-series CSV with a header row")
    p.add_argument("--out", help="output directory (overrides [run] out)")
    p.add_argument("--seed", type=int, help="overrides [run] seed")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is None:
            args.seed = cfg.seed
        else:
            cfg.sections["run"]["seed"] = args.seed
        out = Path(args.out or cfg["run"]["out"])
        out.mkdir(parents=True, exist_ok=True)
        HANDLERS[args.command](cfg, args, out)
    except SpamnetError as exc:
        print(f"spamnet {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ArithmeticError as exc:
        print(f"spamnet {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        # invalid settings that reached the library unchecked
        print(f"spamnet {args.command}: invalid setting: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
