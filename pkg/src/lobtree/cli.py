"""Command line entry point.

Exit codes: 0 all criteria pass, 1 some criterion fails, 2 configuration
error, 3 inconclusive (and nothing failed).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .registry import REGISTRY, ConfigError, ExperimentConfig, list_experiments, run_experiment

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_INCONCLUSIVE = 0, 1, 2, 3

_FLOAT_LIST = ("u_list", "y_list", "eps_list", "n")
_KEYS = {"experiment": str, "lambda": float, "j_pmf": str, "n": str, "t": float, "horizon": float,
         "replicas": int, "seed": int, "u_list": str, "y_list": str, "eps_list": str, "node_cap": int,
         "out": str, "format": str, "threads": int}


def _num_list(text: str) -> list:
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        v = float(tok)
        vals.append(int(v) if v.is_integer() else v)
    if not vals:
        raise ConfigError(f"empty list {text!r}")
    return vals


def read_config_file(path: str) -> dict:
    """key=value per line; '#' starts a comment; keys use - or _ freely."""
    settings = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            settings[key.replace("-", "_")] = value
    return settings


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lobtree", description="Run a registered experiment.")
    p.add_argument("command", nargs="?", choices=["run", "list"], default="run")
    p.add_argument("--experiment")
    p.add_argument("--lambda", dest="lambda_", type=float)
    p.add_argument("--j-pmf")
    p.add_argument("--n", help="comma list where the experiment sweeps n")
    p.add_argument("--t", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--replicas", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--u-list")
    p.add_argument("--y-list")
    p.add_argument("--eps-list")
    p.add_argument("--node-cap", type=int)
    p.add_argument("--out")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--threads", type=int)
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--threshold", action="append", default=[], metavar="NAME=VALUE",
                   help="override a default threshold (repeatable)")
    return p


def make_config(args: argparse.Namespace) -> ExperimentConfig:
    settings: dict = {}
    thresholds: dict = {}
    if args.config:
        for key, value in read_config_file(args.config).items():
            if key.startswith("threshold."):
                thresholds[key.split(".", 1)[1]] = float(value)
            elif key in _KEYS:
                settings[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
    flags = {"experiment": args.experiment, "lambda": args.lambda_, "j_pmf": args.j_pmf, "n": args.n,
             "t": args.t, "horizon": args.horizon, "replicas": args.replicas, "seed": args.seed,
             "u_list": args.u_list, "y_list": args.y_list, "eps_list": args.eps_list,
             "node_cap": args.node_cap, "out": args.out, "format": args.format, "threads": args.threads}
    settings.update({k: v for k, v in flags.items() if v is not None})
    for item in args.threshold:
        if "=" not in item:
            raise ConfigError(f"--threshold expects NAME=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        thresholds[k.strip()] = float(v)
    if "experiment" not in settings:
        raise ConfigError("no experiment given")
    try:
        typed = {k: _KEYS[k](v) for k, v in settings.items()}
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for k in _FLOAT_LIST:
        if k in typed:
            typed[k] = _num_list(typed[k])
    cfg = ExperimentConfig(
        experiment=typed["experiment"], lam=typed.get("lambda", 1.0),
        n=typed.get("n"), t=typed.get("t"), horizon=typed.get("horizon"),
        replicas=typed.get("replicas"), u_list=typed.get("u_list"), y_list=typed.get("y_list"),
        eps_list=typed.get("eps_list"), node_cap=typed.get("node_cap"), out=typed.get("out"),
        fmt=typed.get("format", "csv"), threads=typed.get("threads", 1), thresholds=thresholds)
    if "j_pmf" in typed:
        cfg.j_pmf = typed["j_pmf"]
    if "seed" in typed:
        cfg.seed = typed["seed"]
    try:
        cfg.validate()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def _header() -> str:
    stamp = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    return f"# lobtree {__version__} generated {stamp}"


def _value(v) -> str:
    return "nan" if v is None else repr(float(v))


def render_csv(cfg: ExperimentConfig, verdicts) -> str:
    buf = io.StringIO()
    buf.write(_header() + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment", "statistic", "value", "threshold", "pass"])
    for v in verdicts:
        flag = "inconclusive" if v.inconclusive else str(bool(v.passed)).lower()
        w.writerow([cfg.experiment, v.statistic, _value(v.value), v.threshold, flag])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


def render_json(cfg: ExperimentConfig, verdicts) -> str:
    doc = {"version": __version__, "generated": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
           "experiment": cfg.experiment, "anchor": REGISTRY[cfg.experiment].anchor, "seed": cfg.seed,
           "j_pmf": cfg.j_pmf, "lambda": cfg.lam,
           "verdicts": [{"statistic": v.statistic, "value": v.value, "threshold": v.threshold,
                         "pass": bool(v.passed), "inconclusive": v.inconclusive, "detail": v.detail}
                        for v in verdicts]}
    return json.dumps(_jsonable(doc), indent=2, default=str) + "\n"


def exit_code(verdicts) -> int:
    if any(not v.passed and not v.inconclusive for v in verdicts):
        return EXIT_FAIL
    if any(v.inconclusive for v in verdicts):
        return EXIT_INCONCLUSIVE
    return EXIT_PASS


def run(cfg: ExperimentConfig, stream=None) -> int:
    stream = stream or sys.stdout
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            verdicts = run_experiment(cfg, pool)
    else:
        verdicts = run_experiment(cfg)
    for v in verdicts:
        status = "INCONCLUSIVE" if v.inconclusive else ("PASS" if v.passed else "FAIL")
        print(f"{status} {cfg.experiment} {v.statistic} value={_value(v.value)} threshold={v.threshold}",
              file=stream)
    if cfg.out:
        text = render_csv(cfg, verdicts) if cfg.fmt == "csv" else render_json(cfg, verdicts)
        with open(cfg.out, "w") as fh:
            fh.write(text)
    return exit_code(verdicts)


def print_catalog(stream=None) -> None:
    stream = stream or sys.stdout
    for e in list_experiments():
        thr = ",".join(f"{k}={v}" for k, v in e["thresholds"].items()) or "-"
        print(f"{e['name']:24s} {e['anchor']:34s} thresholds: {thr}", file=stream)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "list":
        print_catalog()
        return EXIT_PASS
    try:
        cfg = make_config(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        if "unknown experiment" in str(exc):
            print("registered experiments:", file=sys.stderr)
            print_catalog(sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
