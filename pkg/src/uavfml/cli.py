"""Command-line entry point: ``uavfml {optimize,sweep,train,bound,oracle-check}``.

Every command that takes ``--out`` writes ``manifest.json`` before its CSV
results. Exit codes: 0 success, 1 infeasible problem or runtime failure,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, channel
from .exceptions import (ConfigError, Infeasible, MalformedRow, MaxIterReached, ModelError, UAVFMLError,
                         UnknownColumn)
from .scenario import DecisionVector, default_scenario, load_config

__all__ = ["main", "build_parser", "worker_count"]

MODES = ("t-opt", "uav-ss-pc", "uav-t-ra", "bs-ra")
CASES = {"1": "unimodal:0", "2": "unimodal:1", "3": "multimodal"}


class _Usage(Exception):
    """Bad flag values detected after parsing."""


def worker_count():
    """Worker pool size: ``UAVFML_THREADS`` if set, else the CPU count."""
    raw = os.environ.get("UAVFML_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise _Usage(f"UAVFML_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise _Usage(f"UAVFML_THREADS must be a positive integer, got {raw!r}")
    return n


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _load(args):
    """Scenario from ``--config`` (or defaults) with ``--seed`` applied."""
    if args.config is None:
        raw = {}
    else:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a flat JSON object")
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    return load_config(raw) if raw else default_scenario()


class _Run:
    """Writes the manifest once, before any result file."""

    def __init__(self, args, command, mode=None):
        self.out = None if getattr(args, "out", None) is None else Path(args.out)
        self.info = {
            "command": command,
            "config": args.config,
            "seed": None,
            "mode": mode,
            "output_dir": None if self.out is None else str(self.out),
            "version": __version__,
        }
        self.t0 = time.perf_counter()
        self.written = False

    def manifest(self, seed, status="ok"):
        if self.written or self.out is None:
            return
        self.written = True
        self.info.update(seed=int(seed), status=status,
                         duration_s=round(time.perf_counter() - self.t0, 3))
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "manifest.json").write_text(json.dumps(self.info, indent=2) + "\n")

    def path(self, name):
        return self.out / name


def _solution_rows(dec: DecisionVector):
    """Long format: ``variable, round, i, j, value`` (unused indices blank)."""
    rows = []
    for name, arr in dec.as_dict().items():
        for idx in np.ndindex(arr.shape):
            pad = list(idx) + [""] * (3 - len(idx))
            rows.append([name, *pad, float(arr[idx])])
    return rows


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def cmd_optimize(args):
    from .solver.bcd import BaselineMode, bcd_optimize_detailed

    run = _Run(args, "optimize", args.mode)
    config = _load(args)
    mode = BaselineMode.parse(args.mode)
    try:
        res = bcd_optimize_detailed(config, mode)
    except UAVFMLError:
        run.manifest(config.seed, "failed")
        raise
    run.manifest(config.seed)
    if run.out is not None:
        _write_csv(run.path("trace.csv"), ["iteration", "objective"], enumerate(res.trace))
        _write_csv(run.path("solution.csv"), ["variable", "round", "i", "j", "value"],
                   _solution_rows(res.decision))
        rows = [r for k, lat in enumerate(res.evaluation.rounds) for r in lat.rows(k)]
        _write_csv(run.path("latency.csv"), channel.LATENCY_COLUMNS, rows)
    print(f"{mode.name}: latency {res.objective:.6g} s after {res.iterations} iterations "
          f"(converged: {res.converged})")
    return 0


def _sweep_chain(payload):
    from .solver.sweep import sweep

    config, param, values, mode = payload
    return sweep(config, param, values, modes=(mode,))[1][:, 0]


def cmd_sweep(args):
    from .solver.bcd import BaselineMode
    from .solver.sweep import apply_param, parse_range

    modes = list(MODES) if args.mode == "all" else args.mode.split(",")
    parsed = [BaselineMode.parse(m) for m in modes]
    values = parse_range(args.range)
    run = _Run(args, "sweep", ",".join(modes))
    config = _load(args)
    for v in values:
        apply_param(config, args.param, v)
    workers = min(worker_count(), len(parsed))
    payloads = [(config, args.param, values, m) for m in parsed]
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                cols = list(pool.map(_sweep_chain, payloads))
        else:
            cols = [_sweep_chain(p) for p in payloads]
    except UAVFMLError:
        run.manifest(config.seed, "failed")
        raise
    run.manifest(config.seed)
    header = ["param_value"] + [f"latency_{m}" for m in modes]
    rows = [[float(v)] + [float(c[i]) for c in cols] for i, v in enumerate(values)]
    if run.out is not None:
        _write_csv(run.path("sweep.csv"), header, rows)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return 0


def _csv_datasets(args, config):
    from .fml.data import load_csv_dataset

    groups = [[c.strip() for c in g.split(",") if c.strip()] for g in args.modality_columns.split(";")]
    if not all(groups):
        raise _Usage("--modality-columns needs comma-separated names per modality, modalities split by ';'")
    return load_csv_dataset(args.data, groups, args.label_column, num_uavs=config.num_uavs,
                            probe_size=config.probe_set_size, seed=config.seed)


def cmd_train(args):
    from .fml.federated import run_federated_training

    mode = CASES[args.case]
    run = _Run(args, "train", f"case{args.case}-{'iid' if args.iid else 'noniid'}")
    config = _load(args)
    try:
        datasets = None
        if args.data is not None:
            if args.modality_columns is None or args.label_column is None:
                raise _Usage("--data needs --modality-columns and --label-column")
            datasets = _csv_datasets(args, config)
            config = config.replace(num_modalities=len(datasets))
        res = run_federated_training(config, mode, config.seed, iid=args.iid, datasets=datasets)
    except (UAVFMLError, OSError):
        run.manifest(config.seed, "failed")
        raise
    run.manifest(config.seed)
    if run.out is not None:
        res.to_csv(run.path("training.csv"))
    if len(res.accuracy):
        print(f"case {args.case}: final accuracy {res.accuracy[-1]:.4f}, loss {res.loss[-1]:.4f}")
    else:
        print(f"case {args.case}: no rounds")
    return 0


_BOUND_KEYS = {"K", "J", "U", "M", "B", "eta", "L", "sigma", "C1", "gaps", "lam", "mu"}


def _parse_overrides(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise _Usage(f"override must look like key=value, got {item!r}")
        k, v = item.split("=", 1)
        if k not in _BOUND_KEYS:
            raise _Usage(f"unknown bound input {k!r}; choose from {', '.join(sorted(_BOUND_KEYS))}")
        try:
            vals = tuple(float(x) for x in v.split(","))
        except ValueError:
            raise _Usage(f"{k} must be numeric, got {v!r}") from None
        if k == "gaps":
            out[k] = vals
        elif len(vals) != 1:
            raise _Usage(f"{k} takes one value")
        else:
            out[k] = int(vals[0]) if k == "M" else vals[0]
    return out


def cmd_bound(args):
    from .convergence import bound_inputs_from_config, empirical_report, report_csv, theorem1_bound

    run = _Run(args, "bound")
    config = _load(args)
    over = _parse_overrides(args.overrides)
    if "gaps" in over and len(over["gaps"]) == 1:
        M = int(over.get("M", config.num_modalities))
        over["gaps"] = over["gaps"] * M
    if args.empirical:
        inputs, rep = empirical_report(config, config.seed, **over)
        emp, lam = rep.empirical, rep.extra["lambda_hat"]
    else:
        inputs = bound_inputs_from_config(config, **over)
        emp = lam = float("nan")
        if inputs.lam is not None:
            lam = inputs.lam
    bound = theorem1_bound(inputs)
    row = [int(inputs.K), int(inputs.J), inputs.U, int(inputs.M), inputs.B, inputs.eta, bound, emp, lam]
    text = report_csv([row])
    run.manifest(config.seed)
    if run.out is not None:
        (run.path("bound.csv")).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_oracle_check(args):
    from .solver.bcd import bcd_optimize_detailed
    from .solver.oracle import brute_force_oracle, tiny_scenario

    run = _Run(args, "oracle-check")
    rows = []
    ok = True
    for i in range(args.instances):
        cfg = tiny_scenario(args.seed + i, time_slots=3 if i % 2 == 0 else 2)
        orc = brute_force_oracle(cfg)
        res = bcd_optimize_detailed(cfg, rel_tol=args.tol, sca_passes=args.sca_passes)
        gap = abs(res.objective - orc.objective) / orc.objective
        ok &= gap <= args.threshold
        rows.append([args.seed + i, cfg.time_slots, orc.objective, res.objective, gap, gap <= args.threshold])
    run.manifest(args.seed, "ok" if ok else "failed")
    header = ["seed", "time_slots", "oracle", "bcd", "rel_gap", "within"]
    if run.out is not None:
        _write_csv(run.path("oracle_check.csv"), header, rows)
    for r in rows:
        print(f"seed {r[0]} T={r[1]}: oracle {r[2]:.6g} bcd {r[3]:.6g} gap {100 * r[4]:.3f}% "
              f"{'ok' if r[5] else 'FAIL'}")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------
def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="uavfml", description="UAV-assisted multimodal federated learning toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True, out=True):
        sp.add_argument("--config", help="flat JSON scenario file (defaults when omitted)")
        if seed:
            sp.add_argument("--seed", type=_nonneg_int, default=None, help="scenario seed (default 0)")
        if out:
            sp.add_argument("--out", help="output directory for the manifest and CSV files")

    sp = sub.add_parser("optimize", help="minimize total training latency")
    common(sp)
    sp.add_argument("--mode", choices=MODES, default="t-opt")
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("sweep", help="final latency over a range of one parameter")
    common(sp)
    sp.add_argument("--param", required=True, help="parameter to sweep, e.g. p_se_max or bandwidth")
    sp.add_argument("--range", required=True, help="min:max:steps")
    sp.add_argument("--mode", default="t-opt", help="mode, comma-separated modes, or 'all'")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("train", help="federated training (case 1/2 unimodal, case 3 multimodal)")
    common(sp)
    sp.add_argument("--case", choices=sorted(CASES), default="3")
    split = sp.add_mutually_exclusive_group()
    split.add_argument("--iid", dest="iid", action="store_true", default=True)
    split.add_argument("--noniid", dest="iid", action="store_false")
    sp.add_argument("--data", help="CSV dataset instead of synthetic data")
    sp.add_argument("--modality-columns", help="feature columns: 'a,b;c,d' for two modalities")
    sp.add_argument("--label-column")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("bound", help="print the convergence bound report as CSV")
    common(sp)
    sp.add_argument("--overrides", nargs="*", metavar="KEY=VALUE",
                    help="bound inputs: K J U M B eta L sigma C1 gaps lam mu")
    sp.add_argument("--empirical", action="store_true",
                    help="train once and estimate L, sigma, lambda and the gaps")
    sp.set_defaults(func=cmd_bound)

    sp = sub.add_parser("oracle-check", help="compare the optimizer with the grid oracle on tiny instances")
    sp.add_argument("--seed", type=_nonneg_int, default=0)
    sp.add_argument("--out")
    sp.add_argument("--instances", type=int, default=5)
    sp.add_argument("--tol", type=float, default=1e-3, help="optimizer stopping tolerance")
    sp.add_argument("--sca-passes", type=int, default=5,
                    help="inner passes per block; tiny instances afford more than the default")
    sp.add_argument("--threshold", type=float, default=0.01, help="largest accepted relative gap")
    sp.set_defaults(func=cmd_oracle_check, config=None)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MalformedRow, UnknownColumn) as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return 1
    except (_Usage, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Infeasible as exc:
        print(f"infeasible: {exc.constraint}: {exc}", file=sys.stderr)
        return 1
    except (MaxIterReached, ModelError, UAVFMLError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
