"""Command-line simulator: run episodes, Monte Carlo batches, and evaluations."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import sim
from .metrics import OspaParams, Track, windowed_ospa2, write_metric_csv
from .occupancy import write_grid_csv
from .rfs import TrackLabel


def _add_common(parser):
    parser.add_argument("--scenario", default="3", help="scenario id (1-4 or crawdad)")
    parser.add_argument("--config", default=None, help="YAML config overriding the scenario file")
    parser.add_argument("--mode", default="Vmo", choices=sim.MODES, help="value function mode")
    parser.add_argument("--agents", type=int, default=None, help="override agent count")
    parser.add_argument("--seed", type=int, default=None, help="override RNG seed")
    parser.add_argument("--horizon", type=int, default=None, help="override lookahead horizon")
    parser.add_argument("--out-dir", default="out", help="output directory")
    parser.add_argument("--truth-csv", default=None, help="planar trace CSV for ground truth")
    parser.add_argument("--scale", type=float, default=1.0, help="position scale for ingestion")
    parser.add_argument("--speedup", type=float, default=1.0, help="time speedup for ingestion")


def _load(args):
    overrides = {}
    if args.config:
        overrides = sim.load_config(args.config)
    cfg = sim.scenario_config(args.scenario, overrides)
    if args.agents is not None:
        cfg["agents"]["count"] = args.agents
    if args.horizon is not None:
        cfg["agents"]["horizon"] = args.horizon
        cfg["agents"].setdefault("replan_period", args.horizon)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.truth_csv:
        truth = sim.ingest_trajectories(args.truth_csv, args.scale, args.speedup,
                                        t0=float(cfg["motion"].get("t0", 1.0)))
    else:
        truth = sim.build_truth(cfg)
    return cfg, truth


def _write_episode_log(path, log):
    with open(path, "w") as fh:
        for k, (ests, poses, timing) in enumerate(
            zip(log.estimates, log.agent_poses, log.timings), start=1
        ):
            record = {
                "scan": k,
                "estimates": [
                    {"label": list(label), "x": x, "y": y} for label, x, y in ests
                ],
                "agent_poses": [list(p) for p in poses],
                "timing": timing,
            }
            fh.write(json.dumps(record) + "\n")


def cmd_run(args):
    cfg, truth = _load(args)
    seed = int(cfg.get("seed", 0))
    log = sim.run_episode(cfg, truth, args.mode, seed, collect_grids=True)
    os.makedirs(args.out_dir, exist_ok=True)
    write_metric_csv(os.path.join(args.out_dir, f"run_{args.mode}_metrics.csv"), log.metric_rows)
    _write_episode_log(os.path.join(args.out_dir, f"run_{args.mode}_log.jsonl"), log)
    write_grid_csv(os.path.join(args.out_dir, f"run_{args.mode}_grid.csv"), log.grids[-1])
    final = log.metric_rows[-1]
    print(
        f"mode={args.mode} seed={seed} ospa2_dist={final[1]:.2f} "
        f"loc={final[2]:.2f} card={final[3]:.2f}"
    )
    return 0


def cmd_batch(args):
    cfg, truth = _load(args)
    modes = args.modes.split(",") if args.modes else ["V1", "V2", "Vmo"]
    for mode in modes:
        if mode not in sim.MODES:
            raise SystemExit(f"unknown mode {mode}")
    runs = args.runs or int(cfg.get("monte_carlo_runs", 20))
    summary, _, _ = sim.run_batch(
        cfg, modes, runs, out_dir=args.out_dir, workers=args.workers,
        base_seed=int(cfg.get("seed", 0)), truth=truth,
    )
    for mode, stats in summary["modes"].items():
        print(
            f"{mode}: ospa2_dist={stats['ospa2_dist_mean']:.2f} "
            f"loc={stats['ospa2_loc_mean']:.2f} card={stats['ospa2_card_mean']:.2f} "
            f"entropy={stats['grid_entropy_mean']:.3f}"
        )
    return 0


def cmd_eval(args):
    cfg, truth = _load(args)
    tracks = {}
    with open(args.log) as fh:
        for line in fh:
            record = json.loads(line)
            for est in record["estimates"]:
                key = tuple(est["label"])
                if key not in tracks:
                    tracks[key] = Track(TrackLabel(*key))
                tracks[key].add(record["scan"], (est["x"], est["y"]))
    params = sim.make_metric_params(cfg)
    rows = windowed_ospa2(
        truth.tracks(), list(tracks.values()), params, range(1, int(cfg["duration"]) + 1)
    )
    est_cards = {}
    for t in tracks.values():
        for k in t.support:
            est_cards[k] = est_cards.get(k, 0) + 1
    full = [
        (t, d, l, c, est_cards.get(t, 0), truth.cardinality(t)) for t, d, l, c in rows
    ]
    os.makedirs(args.out_dir, exist_ok=True)
    out = os.path.join(args.out_dir, "eval_metrics.csv")
    write_metric_csv(out, full)
    print(f"wrote {out}; final ospa2_dist={full[-1][1]:.2f}")
    return 0


def cmd_scenario(args):
    cfg, truth = _load(args)
    os.makedirs(args.out_dir, exist_ok=True)
    out = os.path.join(args.out_dir, f"{cfg.get('name', 'scenario')}_truth.csv")
    truth.to_csv(out, t0=float(cfg["motion"].get("t0", 1.0)))
    print(f"wrote {out} ({len(truth.objects)} objects, {int(cfg['duration'])} scans)")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="searchtrack",
        description="Plan paths for range-limited sensors to discover and track mobile objects.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single episode")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_batch = sub.add_parser("batch", help="Monte Carlo sweep over value modes")
    _add_common(p_batch)
    p_batch.add_argument("--runs", type=int, default=None, help="Monte Carlo runs per mode")
    p_batch.add_argument("--modes", default=None, help="comma-separated modes")
    p_batch.add_argument("--workers", type=int, default=None, help="parallel processes")
    p_batch.set_defaults(func=cmd_batch)

    p_eval = sub.add_parser("eval", help="compute metrics for a stored episode log")
    _add_common(p_eval)
    p_eval.add_argument("--log", required=True, help="episode JSONL log")
    p_eval.set_defaults(func=cmd_eval)

    p_scen = sub.add_parser("scenario", help="dump generated ground truth as CSV")
    _add_common(p_scen)
    p_scen.set_defaults(func=cmd_scenario)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
