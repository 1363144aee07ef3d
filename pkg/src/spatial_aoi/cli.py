"""Command-line front end: run, sweep, analytic, report."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import engine, metrics
from .aoi import WeightParams, analytic_paoi, weight_coefficient
from .config import ADAPTIVE, FIXED, ConfigError, RunConfig, load_config


def _parse_weights(text: str) -> list[WeightParams]:
    """Parse '0:0,1:0.01' into weighting configurations."""
    out = []
    for chunk in text.split(","):
        alpha, beta = chunk.split(":")
        out.append(WeightParams(float(alpha), float(beta)))
    return out


def _parse_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",")]


def _base_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    sc = cfg.scenario
    if args.kind is not None:
        sc.kind = args.kind
    if args.vehicles is not None:
        sc.vehicle_count = args.vehicles
    if args.sim_time is not None:
        sc.sim_time = args.sim_time
    if args.warmup is not None:
        sc.warmup = args.warmup
    if args.rate is not None:
        sc.rate_hz = args.rate
    if args.adaptive:
        sc.beacon_mode = ADAPTIVE
    if args.weights is not None:
        sc.weights = _parse_weights(args.weights)
    if args.target is not None:
        sc.target = type(sc.target)(args.target)
    if args.seed is not None:
        sc.seed = args.seed
    cfg.validate()
    return cfg


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON configuration file; flags override its values")
    p.add_argument("--kind", choices=("freespace", "freespace_static", "manhattan",
                                      "manhattan_static"))
    p.add_argument("--vehicles", type=int)
    p.add_argument("--sim-time", type=float, dest="sim_time")
    p.add_argument("--warmup", type=float)
    p.add_argument("--rate", type=float, help="fixed beacon rate, or initial rate with --adaptive")
    p.add_argument("--adaptive", action="store_true", help="enable PID rate adaptation")
    p.add_argument("--weights", help="weighting configs as 'alpha:beta,alpha:beta,...'")
    p.add_argument("--target", type=float, help="target age in seconds")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--samples", action="store_true", help="also export raw per-sample CSVs")


def _cmd_run(args) -> int:
    cfg = _base_config(args)
    store = engine.run(cfg)
    paths = metrics.export(store, args.out, weight_sets=cfg.scenario.weights,
                           include_samples=args.samples)
    print(f"run complete: {store.n_samples} samples, "
          f"{int(store.transmitted.sum())} transmissions")
    for p in paths:
        print(f"  wrote {p}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _base_config(args)
    rates = _parse_floats(args.rates) if args.rates else [cfg.scenario.rate_hz]
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [cfg.scenario.seed]
    weight_sets = cfg.scenario.weights
    stores = []
    failures = 0
    for result in engine.sweep(cfg, rates, weight_sets, seeds):
        if isinstance(result, engine.SweepFailure):
            failures += 1
            print(f"  FAILED rate={result.rate_hz:g} seed={result.seed}: {result.error}",
                  file=sys.stderr)
            continue
        print(f"  finished rate={result.meta['rate_hz']:g} seed={result.meta['seed']}: "
              f"{result.n_samples} samples")
        stores.append(result)
    if stores:
        metrics.export(stores, args.out, weight_sets=weight_sets, include_samples=args.samples)
    print(f"sweep complete: {len(stores)} runs, {failures} failures -> {args.out}")
    return 0 if failures == 0 else 1


def _cmd_analytic(args) -> int:
    """Expected weighted PAoI over beacon rates for several weighting configs.

    Links come either from a CSV of (theta, distance, p_sd) rows or from a
    synthetic uniform placement; every link contributes its coefficient times
    interarrival / p_sd + system time.
    """
    if args.links:
        links = []
        with open(args.links, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            if header[:3] != ["theta", "distance", "p_sd"]:
                print("links file must have header theta,distance,p_sd", file=sys.stderr)
                return 2
            for line in fh:
                t, d, p = line.strip().split(",")[:3]
                links.append((float(t), float(d), float(p)))
    else:
        rng = np.random.default_rng(args.seed or 1)
        side = args.side
        pos = rng.uniform(0.0, side, size=(args.random_links, 2, 2))
        theta = rng.uniform(0.0, np.pi, size=args.random_links)
        dist = np.hypot(pos[:, 0, 0] - pos[:, 1, 0], pos[:, 0, 1] - pos[:, 1, 1])
        links = [(float(t), float(d), args.p_sd) for t, d in zip(theta, dist)]
    rates = _parse_floats(args.rates)
    configs = _parse_weights(args.weights)
    os.makedirs(os.path.dirname(os.path.abspath(args.out_file)) or ".", exist_ok=True)
    with open(args.out_file, "w", encoding="utf-8") as fh:
        fh.write("rate_hz,alpha,beta,weighted_paoi_s\n")
        for wp in configs:
            omegas = [weight_coefficient(t, d, wp) for (t, d, _p) in links]
            for rate in rates:
                vals = [w * analytic_paoi(1.0 / rate, args.system_time, p)
                        for w, (_t, _d, p) in zip(omegas, links)]
                fh.write(f"{rate:.9g},{wp.alpha:.9g},{wp.beta:.9g},"
                         f"{float(np.mean(vals)):.9g}\n")
    print(f"wrote {args.out_file}")
    return 0


def _cmd_report(args) -> int:
    """Recompute statistics from exported CSVs and print a summary."""
    sample_files = sorted(
        f for f in os.listdir(args.out) if f.startswith("samples") and f.endswith(".csv"))
    if not sample_files:
        path = os.path.join(args.out, "network_aoi.csv")
        if not os.path.exists(path):
            print(f"no samples or aggregates found in {args.out}", file=sys.stderr)
            return 2
        with open(path, "r", encoding="utf-8") as fh:
            print(fh.read().rstrip("\n"))
        return 0
    weights = _parse_weights(args.weights) if args.weights else [WeightParams(0.0, 0.0)]
    for name in sample_files:
        samples = metrics.read_samples(os.path.join(args.out, name))
        if not samples:
            print(f"{name}: empty")
            continue
        paoi = np.asarray([s.paoi for s in samples])
        print(f"{name}: {len(samples)} samples, mean PAoI {paoi.mean():.6g} s")
        for wp in weights:
            omega = np.asarray([weight_coefficient(s.bearing, s.link_distance, wp)
                                for s in samples])
            target = next((s.weighted_target / s.omega for s in samples if s.omega > 0), None)
            if target is None:
                continue
            weighted = float(np.mean(omega * paoi))
            ratio = float(np.mean(omega * paoi <= omega * target))
            print(f"  alpha={wp.alpha:g} beta={wp.beta:g}: weighted PAoI {weighted:.6g} s, "
                  f"below-target ratio {ratio:.4f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="spatial-aoi",
        description="Simulate spatially weighted peak-AoI beaconing scenarios")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one scenario and export its metrics")
    _add_scenario_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a rate x weight-config x seed grid")
    _add_scenario_flags(p_sweep)
    p_sweep.add_argument("--rates", help="comma-separated beacon rates in Hz")
    p_sweep.add_argument("--seeds", help="comma-separated seeds")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_an = sub.add_parser("analytic", help="expected weighted PAoI curves from p_sd")
    p_an.add_argument("--rates", required=True)
    p_an.add_argument("--weights", required=True)
    p_an.add_argument("--links", help="CSV with theta,distance,p_sd rows")
    p_an.add_argument("--random-links", type=int, default=200, dest="random_links")
    p_an.add_argument("--side", type=float, default=550.0)
    p_an.add_argument("--p-sd", type=float, default=1.0, dest="p_sd")
    p_an.add_argument("--system-time", type=float, default=0.001, dest="system_time")
    p_an.add_argument("--seed", type=int, default=1)
    p_an.add_argument("--out-file", default="analytic.csv", dest="out_file")
    p_an.set_defaults(func=_cmd_analytic)

    p_rep = sub.add_parser("report", help="recompute statistics from exported CSVs")
    p_rep.add_argument("--out", default="out")
    p_rep.add_argument("--weights")
    p_rep.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, metrics.MetricsError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
