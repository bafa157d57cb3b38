"""Command-line front end.

Every command reads one JSON config (``--config``), applies overrides
(``--set key=value`` with JSON values, plus a few shortcut flags) and writes
CSV/JSON files into ``--out``.  Exit status: 0 success, 1 configuration or
input error, 2 numerical failure.  File layouts are described in
``docs/formats.md``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import bench
from .core import LagPolicy, SmcError, resolve_lag
from .em import DegenerateStatisticsError, McemSchedule
from .kalman import log_likelihood
from .models import Ar1Params, SvParams, make_model, simulate
from .rng import RngContract
from .smoother import ESTIMATOR_KINDS, run_smoother

log = logging.getLogger("fixedlag")

SCHEMA_VERSION = 1

DEFAULT_PARAMS = {
    "ar1": {"a": 0.8, "sigma_w": 0.5, "sigma_v": 2.0},
    "sv": {"beta": 0.63, "alpha": 0.975, "sigma": 0.16},
}
DEFAULT_DATA_PARAMS = {
    "ar1": {"a": 0.98, "sigma_w": 0.2, "sigma_v": 1.0},
    "sv": {"beta": 0.63, "alpha": 0.975, "sigma": 0.16},
}
DEFAULT_THETA0 = {
    "ar1": {"a": 0.8, "sigma_w": 0.5, "sigma_v": 2.0},
    "sv": {"beta": 0.8, "alpha": 0.9, "sigma": 0.3},
}
DEFAULTS = {
    "model": "ar1",
    "proposal": "bootstrap",
    "n": 1000,
    "N": 1000,
    "lag": 16,
    "estimator": "fixed_lag_weighted",
    "resampler": "systematic",
    "ess_threshold": None,
    "component": 1,
    "lags": [2, 4, 8, 16, 128, 1000],
    "replicates": 100,
    "N_grid": [250, 1000, 4000],
    "mcem": {
        "iterations": 250,
        "warm_iterations": 150,
        "warm_N": 100,
        "final_N": 1600,
        "seeds": 1,
        "lag": 40,
        "estimator": "fixed_lag_weighted",
        "estep": "particle",
    },
    "degeneracy": {"N": 50, "seeds": 100, "resample": True, "resampler": "multinomial"},
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _set_path(cfg: dict, dotted: str, value):
    keys = dotted.split(".")
    node = cfg
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {dotted}: {key} is not an object")
    node[keys[-1]] = value


def load_config(path: str | None, overrides: list[str], shortcuts: dict) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))
    if path:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        cfg = _merge(cfg, user)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        _set_path(cfg, key, value)
    for key, value in shortcuts.items():
        if value is not None:
            cfg[key] = value
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    if cfg["model"] not in ("ar1", "sv"):
        raise ConfigError(f"model must be 'ar1' or 'sv', got {cfg['model']!r}")
    if cfg["proposal"] not in ("bootstrap", "optimal"):
        raise ConfigError("proposal must be 'bootstrap' or 'optimal'")
    if cfg["model"] == "ar1" and cfg["proposal"] != "bootstrap":
        raise ConfigError("the AR(1) model only supports the bootstrap proposal")
    if cfg["estimator"] not in ESTIMATOR_KINDS:
        raise ConfigError(f"estimator must be one of {ESTIMATOR_KINDS}")
    if cfg["resampler"] not in ("systematic", "multinomial"):
        raise ConfigError("resampler must be 'systematic' or 'multinomial'")
    if not (isinstance(cfg["n"], int) and cfg["n"] >= 0):
        raise ConfigError("n must be a nonnegative integer")
    if not (isinstance(cfg["N"], int) and cfg["N"] >= 1):
        raise ConfigError("N must be a positive integer")
    if not 1 <= int(cfg["component"]) <= 4:
        raise ConfigError("component must be in 1..4")
    try:
        LagPolicy.parse(cfg["lag"])
        params_from(cfg, "params").validate()
        params_from(cfg, "theta0").validate()
        params_from(cfg, "data_params")
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def params_from(cfg: dict, key: str):
    """Parameter object for ``params``, ``data_params`` or ``theta0``."""
    model = cfg["model"]
    if key == "theta0":
        raw = cfg["mcem"].get("theta0") or DEFAULT_THETA0[model]
    elif key == "data_params":
        raw = cfg.get("data_params") or DEFAULT_DATA_PARAMS[model]
    else:
        raw = cfg.get("params") or DEFAULT_PARAMS[model]
    cls = Ar1Params if model == "ar1" else SvParams
    try:
        return cls(**{k: float(v) for k, v in raw.items()})
    except (TypeError, AttributeError) as exc:
        raise ConfigError(f"bad {key} for model {model}: {exc}") from exc


# ---------------------------------------------------------------------------
# output helpers


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["NA" if v is None else v for v in row])


def _write_json(path: Path, payload: dict):
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    path.write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _sidecar(out: Path, name: str, command: str, cfg: dict, seed, **extra):
    _write_json(out / f"{name}.json", {"command": command, "seed": seed, "config": cfg, **extra})


def read_dataset(path: str):
    """Load a ``simulate`` CSV and its JSON sidecar (if present)."""
    p = Path(path)
    try:
        data = np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read dataset {path}: {exc}") from exc
    if data.shape[1] != 3:
        raise ConfigError(f"dataset {path} must have columns k,x,y")
    meta_path = p.with_suffix(".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return data[:, 1], data[:, 2], meta


def _dataset(cfg: dict, args, seed: int):
    """Observations from ``--data`` or simulated from ``data_params``."""
    if args.data:
        _, y, meta = read_dataset(args.data)
        if meta and meta.get("model") != cfg["model"]:
            raise ConfigError(
                f"dataset was generated by model {meta.get('model')!r}, config uses {cfg['model']!r}"
            )
        return y, {"source": str(args.data)}
    data_seed = int(cfg.get("data_seed", seed))
    _, y = simulate(params_from(cfg, "data_params"), cfg["n"], data_seed)
    return y, {"source": "simulated", "data_seed": data_seed}


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg, args, out: Path):
    params = params_from(cfg, "data_params")
    x, y = simulate(params, cfg["n"], args.seed)
    _write_csv(out / "dataset.csv", ["k", "x", "y"], zip(range(len(x)), x.tolist(), y.tolist()))
    _write_json(
        out / "dataset.json",
        {"command": "simulate", "model": cfg["model"], "params": params.as_dict(), "seed": args.seed, "n": cfg["n"]},
    )
    return {"rows": len(x)}


def cmd_smooth(cfg, args, out: Path):
    y, source = _dataset(cfg, args, args.seed)
    params = params_from(cfg, "params")
    n = len(y) - 1
    kind = cfg["estimator"]
    lag = None
    lags = ()
    if kind.startswith("fixed_lag"):
        lag = resolve_lag(LagPolicy.parse(cfg["lag"]), n)
        lags = (lag,)
    t0 = time.perf_counter()
    run = run_smoother(
        make_model(params, cfg["proposal"]),
        y,
        bench.statistics_for(params),
        cfg["N"],
        lags,
        seed=args.seed,
        resampler=cfg["resampler"],
        ess_threshold=cfg["ess_threshold"],
    )
    est = run.get(kind, lag)
    record = {
        "command": "smooth",
        "model": cfg["model"],
        "params": params.as_dict(),
        "estimator": kind,
        "N": cfg["N"],
        "n": n,
        "lag": lag,
        "seed": args.seed,
        "resampler": cfg["resampler"],
        "data": source,
        "estimate": est.value.tolist(),
        "wall_time": time.perf_counter() - t0,
    }
    exact = bench.exact_target(params, y)
    if exact is not None:
        record["exact"] = exact.tolist()
        record["error"] = np.abs(est.value - exact).tolist()
    _write_json(out / "smooth.json", record)
    return record


def cmd_bench_lags(cfg, args, out: Path):
    y, source = _dataset(cfg, args, args.seed)
    params = params_from(cfg, "params")
    comp = int(cfg["component"]) - 1
    rows, summaries, exact = bench.bench_lags(
        params, y, cfg["N"], cfg["lags"], int(cfg["replicates"]), args.seed, comp,
        cfg["estimator"], cfg["resampler"], cfg["proposal"],
    )
    table = []
    for lag, r, value in rows:
        err = None if exact is None else value - exact
        table.append(["replicate", lag, r, value, exact, err, None, None, None, None])
    for s in summaries:
        table.append(["summary", s.lag, None, None, exact, None, s.mean, s.bias, s.std, s.mse])
    header = ["row_type", "lag", "replicate", "estimate", "exact", "error", "mean", "bias", "std", "mse"]
    _write_csv(out / "bench_lags.csv", header, table)
    summary = [s.__dict__ for s in summaries]
    _sidecar(out, "bench_lags", "bench-lags", cfg, args.seed, data=source, exact=exact, summary=summary)
    return {"summary": summary, "exact": exact}


def cmd_bench_scaling(cfg, args, out: Path):
    if int(cfg["replicates"]) < 2:
        raise ConfigError("bench-scaling needs at least two replicates")
    if len(cfg["N_grid"]) < 2:
        raise ConfigError("bench-scaling needs at least two values in N_grid")
    y, source = _dataset(cfg, args, args.seed)
    params = params_from(cfg, "params")
    comp = int(cfg["component"]) - 1
    rows, stds, slope = bench.bench_scaling(
        params, y, cfg["N_grid"], int(cfg["replicates"]), args.seed, cfg["lag"], comp,
        cfg["estimator"], cfg["resampler"], cfg["proposal"],
    )
    table = [["replicate", N, r, v, None] for N, r, v in rows]
    table += [["summary", N, None, None, s] for N, s in stds.items()]
    _write_csv(out / "bench_scaling.csv", ["row_type", "N", "replicate", "estimate", "std"], table)
    _sidecar(out, "bench_scaling", "bench-scaling", cfg, args.seed, data=source, stds=stds, slope=slope)
    return {"stds": stds, "slope": slope}


def cmd_mcem(cfg, args, out: Path):
    y, source = _dataset(cfg, args, args.seed)
    mc = cfg["mcem"]
    schedule = McemSchedule(
        int(mc["iterations"]), int(mc["warm_iterations"]), int(mc["warm_N"]), int(mc["final_N"])
    )
    theta0 = params_from(cfg, "theta0")
    traces, summary = bench.mcem_replicates(
        y, theta0, schedule, int(mc["seeds"]), args.seed, mc["estimator"], mc["lag"],
        cfg["proposal"], cfg["resampler"], mc["estep"],
    )
    names = list(theta0.as_dict())
    header = ["iteration", "N", *names, "S1", "S2", "S3", "S4", "loglik", "wall_time"]
    for s, trace in enumerate(traces):
        rows = trace.rows()
        if mc["estep"] == "exact":
            for row, p in zip(rows, trace.params):
                row["loglik"] = log_likelihood(p, y)
        _write_csv(out / f"mcem_trace_seed{s}.csv", header, [[row[h] for h in header] for row in rows])
    summary_rows = [["mean", *summary["mean"].values()]]
    std = summary["std"]
    summary_rows.append(["std", *(std.values() if std else [None] * len(names))])
    _write_csv(out / "mcem_summary.csv", ["statistic", *names], summary_rows)
    _sidecar(out, "mcem", "mcem", cfg, args.seed, data=source, summary=summary, cumulative_N=schedule.cumulative())
    return summary


def cmd_degeneracy(cfg, args, out: Path):
    dg = cfg["degeneracy"]
    params = params_from(cfg, "params")
    data_params = params_from(cfg, "data_params")
    seeds = int(dg["seeds"])
    if args.data:
        ys = [read_dataset(args.data)[1]] * seeds
    else:
        base = int(cfg.get("data_seed", args.seed))
        ys = [simulate(data_params, cfg["n"], int(RngContract(base).child("data", r).seed))[1] for r in range(seeds)]
    profiles = bench.bench_degeneracy(
        params, ys, int(dg["N"]), args.seed, dg["resampler"], bool(dg["resample"])
    )
    table = [[r, k, int(c)] for r, prof in enumerate(profiles) for k, c in enumerate(prof)]
    _write_csv(out / "degeneracy.csv", ["replicate", "k", "unique_ancestors"], table)
    firsts = [bench.first_collapse(p) for p in profiles]
    n = len(ys[0]) - 1
    frac = float(np.mean([f is not None and f < n for f in firsts])) if seeds else None
    _sidecar(out, "degeneracy", "degeneracy", cfg, args.seed, first_collapse=firsts, collapsed_fraction=frac)
    return {"collapsed_fraction": frac}


COMMANDS = {
    "simulate": cmd_simulate,
    "smooth": cmd_smooth,
    "bench-lags": cmd_bench_lags,
    "bench-scaling": cmd_bench_scaling,
    "mcem": cmd_mcem,
    "degeneracy": cmd_degeneracy,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fixedlag", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, required=True, help="master seed (u64)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--data", help="dataset CSV written by 'simulate'")
        p.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                       help="override a config field (dotted keys allowed)")
        p.add_argument("--n", type=int)
        p.add_argument("--N", type=int)
        p.add_argument("--lag", type=int)
        p.add_argument("--replicates", type=int)
        p.add_argument("--model", choices=["ar1", "sv"])
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.seed < 0 or args.seed >= 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 1
    try:
        shortcuts = {
            "n": args.n, "N": args.N, "lag": args.lag,
            "replicates": args.replicates, "model": args.model,
        }
        cfg = load_config(args.config, args.set, shortcuts)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[args.command](cfg, args, out)
        log.info("%s finished: %s", args.command, result)
    except (SmcError, DegenerateStatisticsError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
