"""Scenario construction, trajectory ingestion, and the closed planning loop.

An episode alternates, per scan: simulate detections and clutter at the
current agent poses, run the multi-sensor GLMB update, project to an LMB,
update the occupancy grid, adapt the birth model from the grid, replan at
the configured period, and advance the agents along their committed
trajectories.  Batch runs execute episodes on independent RNG streams and
aggregate OSPA(2) statistics.
"""

from __future__ import annotations

import csv
import json
import math
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

from . import glmb as glmb_mod
from . import kalman
from .info import ValueFunctionContext, agent_trajectory, discovery_value_v2, multiobjective_value, tracking_value_v1
from .metrics import OspaParams, Track, windowed_ospa2, write_metric_csv
from .models import (
    BirthModel,
    MotionModel,
    SensorModel,
    cv_transition,
    detection_probability,
    measure,
    measurement_cov,
    sample_clutter,
    transition,
)
from .occupancy import initialize_grid, grid_entropy, occupancy_update, write_grid_csv
from .planner import COMPASS, PartitionMatroid, fix_gcm_constants, greedy_plan
from .rfs import GaussianMixture, GlmbDensity, LmbDensity, TrackLabel, glmb_to_lmb

MODES = ("V1", "V2", "Vmo", "VmoIdeal")


@dataclass
class TruthObject:
    oid: int
    birth: int
    death: int
    states: dict  # scan index -> kinematic vector

    def position(self, k):
        return self.states[k][[0, 2]]

    def alive(self, k):
        return self.birth <= k <= self.death


@dataclass
class GroundTruth:
    objects: list = field(default_factory=list)

    def alive_at(self, k):
        return [o for o in self.objects if o.alive(k)]

    def cardinality(self, k):
        return len(self.alive_at(k))

    def tracks(self):
        out = []
        for o in self.objects:
            t = Track(TrackLabel(o.birth, o.oid))
            for k, x in o.states.items():
                t.add(k, x[[0, 2]])
            out.append(t)
        return out

    def to_csv(self, path, t0=1.0):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["object_id", "t", "x", "y"])
            for o in self.objects:
                for k in sorted(o.states):
                    pos = o.states[k][[0, 2]]
                    writer.writerow([o.oid, f"{k * t0:.12g}", f"{pos[0]:.12g}", f"{pos[1]:.12g}"])


# ---------------------------------------------------------------------------
# configuration

def _deep_merge(base, override):
    out = dict(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path):
    with open(path) as fh:
        return yaml.safe_load(fh)


def scenario_config(scenario_id, overrides=None):
    """Shipped configuration for scenarios 1-4 (or 'crawdad'), with overrides."""
    name = f"scenario{scenario_id}" if str(scenario_id) in "1234" else str(scenario_id)
    ref = resources.files("searchtrack.configs").joinpath(f"{name}.yaml")
    try:
        text = ref.read_text()
    except FileNotFoundError:
        raise ValueError(f"unknown scenario id: {scenario_id}")
    return _deep_merge(yaml.safe_load(text), overrides or {})


def build_truth(cfg):
    """Noiseless propagation of the configured per-object initial states."""
    motion = make_motion(cfg)
    objects = []
    for spec in cfg.get("objects", []):
        birth, death = int(spec["birth"]), int(spec["death"])
        x = np.asarray(spec["state"], dtype=float)
        states = {birth: x.copy()}
        for k in range(birth + 1, death + 1):
            x = transition(x, motion)
            states[k] = x.copy()
        objects.append(TruthObject(int(spec["id"]), birth, death, states))
    return GroundTruth(objects)


def build_scenario(scenario_id, overrides=None):
    """(config, ground truth) for one of the shipped synthetic scenarios."""
    cfg = scenario_config(scenario_id, overrides)
    return cfg, build_truth(cfg)


def make_motion(cfg):
    m = cfg["motion"]
    return MotionModel(
        kind=m.get("kind", "cv"),
        t0=float(m.get("t0", 1.0)),
        sigma_cv=float(m.get("sigma_cv", 0.0)),
        sigma_eta=float(m.get("sigma_eta", 0.0)),
        sigma_q=float(m.get("sigma_q", 0.0)),
        p_survival=float(m.get("p_survival", 0.99)),
    )


def make_sensors(cfg):
    s = cfg["sensor"]
    region = tuple(cfg["region"])
    count = int(cfg["agents"]["count"])
    return [
        SensorModel(
            agent_index=n,
            pd_max=float(s["pd_max"]),
            r_full=float(s["r_full"]),
            decay=float(s["decay"]),
            r_max=float(s["r_max"]),
            noise_floor=float(s["noise_floor"]),
            noise_slope=float(s.get("noise_slope", 0.0)),
            clutter_rate=float(s.get("clutter_rate", 0.0)),
            clutter_region=region,
        )
        for n in range(count)
    ]


def make_birth_template(cfg):
    b = cfg["birth"]
    region = cfg["region"]
    xmin, xmax, ymin, ymax = region
    nx, ny = int(b["nx"]), int(b["ny"])
    dx = (xmax - xmin) / nx
    dy = (ymax - ymin) / ny
    r0 = float(b["r0"])
    vstd = float(b.get("velocity_std", 1.0))
    motion = make_motion(cfg)
    entries = []
    slot = 0
    for iy in range(ny):
        for ix in range(nx):
            cx = xmin + (ix + 0.5) * dx
            cy = ymin + (iy + 0.5) * dy
            if motion.kind == "ct":
                mean = np.array([cx, 0.0, cy, 0.0, 0.0])
                cov = np.diag([dx / 2, vstd, dy / 2, vstd, np.pi / 30.0]) ** 2
            else:
                mean = np.array([cx, 0.0, cy, 0.0])
                cov = np.diag([dx / 2, vstd, dy / 2, vstd]) ** 2
            entries.append((slot, r0, GaussianMixture.single(mean, cov)))
            slot += 1
    return BirthModel(entries=entries, p_survival=motion.p_survival)


def make_grid(cfg):
    g = cfg["occupancy"]
    xmin, xmax, ymin, ymax = cfg["region"]
    nx, ny = int(g["nx"]), int(g["ny"])
    return initialize_grid(
        nx, ny, (xmax - xmin) / nx, (ymax - ymin) / ny, origin=(xmin, ymin),
        birth=float(g.get("birth", 0.001)),
        p_survival=float(g.get("p_survival", cfg["motion"].get("p_survival", 0.99))),
    )


def make_truncation(cfg):
    t = cfg.get("truncation", {})
    return glmb_mod.TruncationConfig(
        max_hypotheses=int(t.get("max_hypotheses", 200)),
        gibbs_samples=int(t.get("gibbs_samples", 150)),
        enum_cap=int(t.get("enum_cap", 2000)),
        gate_chi2=float(t.get("gate_chi2", 25.0)),
        prune_existence=float(t.get("prune_existence", 1e-4)),
    )


def make_metric_params(cfg):
    m = cfg.get("metrics", {})
    return OspaParams(
        cutoff=float(m.get("cutoff", 50.0)),
        order=float(m.get("order", 1.0)),
        window=int(m.get("window", cfg.get("duration", 200))),
    )


# ---------------------------------------------------------------------------
# trajectory ingestion

class IngestError(ValueError):
    pass


def ingest_trajectories(csv_path, scale=1.0, time_speedup=1.0, t0=1.0):
    """Ground truth from a planar trace CSV (object_id, t, x, y).

    Positions are divided by `scale`, timestamps by `time_speedup`, then each
    object is resampled onto the scan grid by linear interpolation; velocities
    come from finite differences of the resampled positions.
    """
    samples = {}
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:4]] != ["object_id", "t", "x", "y"]:
            raise IngestError(f"{csv_path}: expected header object_id,t,x,y")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                oid = int(row[0])
                t, x, y = float(row[1]), float(row[2]), float(row[3])
            except (ValueError, IndexError):
                raise IngestError(f"{csv_path}:{lineno}: malformed row {row!r}")
            samples.setdefault(oid, []).append((t / time_speedup, x / scale, y / scale, lineno))
    objects = []
    for oid in sorted(samples):
        rows = samples[oid]
        ts = [r[0] for r in rows]
        for a, b, row in zip(ts, ts[1:], rows[1:]):
            if b <= a:
                raise IngestError(
                    f"{csv_path}:{row[3]}: non-monotone timestamps for object {oid}"
                )
        t_arr = np.array(ts)
        xy = np.array([[r[1], r[2]] for r in rows])
        k_first = math.ceil(t_arr[0] / t0 - 1e-12)
        k_last = math.floor(t_arr[-1] / t0 + 1e-12)
        if k_last < k_first:
            continue
        scans = np.arange(k_first, k_last + 1)
        px = np.interp(scans * t0, t_arr, xy[:, 0])
        py = np.interp(scans * t0, t_arr, xy[:, 1])
        vx = np.gradient(px, scans * t0) if len(scans) > 1 else np.zeros(1)
        vy = np.gradient(py, scans * t0) if len(scans) > 1 else np.zeros(1)
        states = {
            int(k): np.array([px[i], vx[i], py[i], vy[i]])
            for i, k in enumerate(scans)
        }
        objects.append(TruthObject(oid, int(scans[0]), int(scans[-1]), states))
    return GroundTruth(objects)


# ---------------------------------------------------------------------------
# measurement simulation

def simulate_scan(truth, k, poses, sensors, rng, tag_truth=False):
    """Detections plus clutter for every agent at scan k."""
    measurements = []
    tags = []
    for pose, sensor in zip(poses, sensors):
        zs, zt = [], []
        for obj in truth.alive_at(k):
            pd = detection_probability(obj.position(k), pose, sensor)
            if pd > 0 and rng.random() < pd:
                zs.append(measure(obj.states[k], pose, sensor, rng=rng))
                zt.append(obj.oid)
        for z in sample_clutter(sensor, rng):
            zs.append(z)
            zt.append(None)
        measurements.append(zs)
        tags.append(zt)
    return glmb_mod.MultiSensorScan(k, poses, measurements, tags if tag_truth else None)


# ---------------------------------------------------------------------------
# known-association tracker (ideal bound)

class IdealTracker:
    """Per-object Bernoulli/Kalman tracker fed origin-tagged measurements.

    Used by the VmoIdeal mode: association and clutter are known, so each
    truth object keeps its own track, giving the best-case tracking bound.
    """

    def __init__(self, motion, birth_cov, p_survival):
        self.motion = motion
        self.birth_cov = birth_cov
        self.p_survival = p_survival
        self.tracks = {}  # oid -> [r, GaussianMixture, TrackLabel]

    def step(self, scan, sensors):
        for entry in self.tracks.values():
            entry[0] *= self.p_survival
            entry[1] = kalman.predict_gm(entry[1], self.motion)
        tagged = {}
        for n, (zs, tags) in enumerate(zip(scan.measurements, scan.truth_tags)):
            for z, tag in zip(zs, tags):
                if tag is not None:
                    tagged.setdefault(tag, []).append((n, z))
        for oid, hits in tagged.items():
            if oid not in self.tracks:
                dim = self.motion.state_dim
                mean = np.zeros(dim)
                mean[0], mean[2] = hits[0][1]
                gm = GaussianMixture.single(mean, self.birth_cov)
                self.tracks[oid] = [1.0, gm, TrackLabel(scan.time, oid)]
            entry = self.tracks[oid]
            entry[0] = 1.0
            for n, z in hits:
                d = float(np.linalg.norm(z - scan.poses[n]))
                _, entry[1] = kalman.update_gm(entry[1], z, measurement_cov(d, sensors[n]))
        for oid, entry in self.tracks.items():
            if oid in tagged:
                continue
            pos = entry[1].mean()[[0, 2]]
            for pose, sensor in zip(scan.poses, sensors):
                pd = detection_probability(pos, pose, sensor)
                entry[0] = entry[0] * (1 - pd) / (1 - entry[0] * pd)
        self.tracks = {oid: e for oid, e in self.tracks.items() if e[0] >= 1e-3}

    def estimates(self):
        return [
            (entry[2], entry[1].mean())
            for entry in self.tracks.values()
            if entry[0] >= 0.5
        ]

    def lmb(self):
        return LmbDensity({e[2]: (e[0], e[1]) for e in self.tracks.values()})


# ---------------------------------------------------------------------------
# episode loop

@dataclass
class EpisodeLog:
    mode: str
    seed: int
    estimates: list = field(default_factory=list)   # per scan: [(label, x, y)]
    agent_poses: list = field(default_factory=list)  # per scan: [(x, y), ...]
    grid_entropy: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    metric_rows: list = field(default_factory=list)
    grids: list = field(default_factory=list)

    def estimate_tracks(self):
        out = {}
        for k, ests in enumerate(self.estimates, start=1):
            for label, x, y in ests:
                key = tuple(label)
                if key not in out:
                    out[key] = Track(TrackLabel(*key))
                out[key].add(k, (x, y))
        return list(out.values())


def _region_allows(start, heading, speed, t0, horizon, region):
    xmin, xmax, ymin, ymax = region
    for pos in agent_trajectory(start, heading, speed, t0, horizon):
        if not (xmin <= pos[0] <= xmax and ymin <= pos[1] <= ymax):
            return False
    return True


def _build_matroid(poses, cfg):
    a = cfg["agents"]
    speed, horizon = float(a["speed"]), int(a["horizon"])
    t0 = float(cfg["motion"].get("t0", 1.0))
    region = tuple(cfg["region"])

    def allowed(agent, heading_idx):
        return _region_allows(poses[agent], COMPASS[heading_idx], speed, t0, horizon, region)

    matroid = PartitionMatroid.compass(poses, allowed=allowed)
    for agent in matroid.agents():
        if not matroid.actions(agent):  # cornered: allow everything rather than stall
            matroid.actions_by_agent[agent] = PartitionMatroid.compass([poses[agent]]).actions(0)
    return matroid


def _plan(mode, lmb, grid, poses, cfg, sensors, motion):
    a = cfg["agents"]
    context = ValueFunctionContext(
        horizon=int(a["horizon"]),
        hypervolume=float(cfg.get("planner", {}).get("hypervolume", 1.0)),
        lmb=lmb,
        grid=grid,
        motion=motion,
        sensors=sensors,
        p_survival=motion.p_survival,
        agent_speed=float(a["speed"]),
        region=tuple(cfg["region"]),
    )
    matroid = _build_matroid(poses, cfg)
    if mode == "V1":
        fn = lambda s: tracking_value_v1(context, s)
    elif mode == "V2":
        fn = lambda s: discovery_value_v2(context, s)
    else:
        consts = fix_gcm_constants(
            matroid,
            lambda s: tracking_value_v1(context, s),
            lambda s: discovery_value_v2(context, s),
        )
        fn = lambda s: multiobjective_value(context, s, consts)
    plan = greedy_plan(matroid, fn)
    return {action.agent: action.heading for action in plan.actions}


def _planning_lmb(posterior_lmb, min_existence=1e-3):
    tracks = {l: (r, gm) for l, (r, gm) in posterior_lmb.items() if r >= min_existence}
    return LmbDensity(tracks)


def run_episode(cfg, truth, value_mode, seed, collect_grids=False):
    """One closed search-and-track episode; returns an EpisodeLog."""
    if value_mode not in MODES:
        raise ValueError(f"unknown value mode {value_mode}; expected one of {MODES}")
    rng = np.random.default_rng(seed)
    duration = int(cfg["duration"])
    motion = make_motion(cfg)
    sensors = make_sensors(cfg)
    template = make_birth_template(cfg)
    truncation = make_truncation(cfg)
    grid = make_grid(cfg)
    a = cfg["agents"]
    n_agents = int(a["count"])
    poses = [np.asarray(a["start"], dtype=float).copy() for _ in range(n_agents)]
    replan = int(a.get("replan_period", a["horizon"]))
    speed = float(a["speed"])
    t0 = motion.t0

    posterior = GlmbDensity.empty()
    birth_model = template
    ideal = None
    if value_mode == "VmoIdeal":
        bcov = template.entries[0][2].covs[0]
        ideal = IdealTracker(motion, bcov, motion.p_survival)

    log = EpisodeLog(mode=value_mode, seed=seed)
    headings = {n: None for n in range(n_agents)}
    grids = []
    for k in range(1, duration + 1):
        t_start = _time.perf_counter()
        scan = simulate_scan(truth, k, poses, sensors, rng, tag_truth=value_mode == "VmoIdeal")
        t_scan = _time.perf_counter()
        if value_mode == "VmoIdeal":
            ideal.step(scan, sensors)
            estimates = [(lab, gmean) for lab, gmean in ideal.estimates()]
            lmb = ideal.lmb()
        else:
            posterior = glmb_mod.predict_and_update(
                posterior, birth_model, motion, sensors, scan, truncation, rng
            )
            estimates = [
                (s.label, np.asarray(s.kinematics)) for s in glmb_mod.estimate_tracks(posterior)
            ]
            lmb = glmb_to_lmb(posterior)
        t_filter = _time.perf_counter()
        grid = occupancy_update(grid, poses, sensors)
        birth_model = glmb_mod.adaptive_birth(grid, template)
        t_grid = _time.perf_counter()
        if (k - 1) % replan == 0:
            headings = _plan(value_mode, _planning_lmb(lmb), grid, poses, cfg, sensors, motion)
        t_plan = _time.perf_counter()

        log.estimates.append(
            [
                ((lab.birth_time, lab.birth_index), float(x[0]), float(x[2]))
                for lab, x in estimates
            ]
        )
        log.agent_poses.append([tuple(map(float, p)) for p in poses])
        log.grid_entropy.append(grid_entropy(grid) / grid.n_cells)
        log.timings.append(
            {
                "scan": t_scan - t_start,
                "filter": t_filter - t_scan,
                "grid": t_grid - t_filter,
                "plan": t_plan - t_grid,
            }
        )
        if collect_grids:
            grids.append(grid)

        # advance agents along committed headings
        new_poses = []
        for n, pose in enumerate(poses):
            h = headings.get(n)
            if h is None:
                new_poses.append(pose.copy())
            else:
                step = speed * t0 * np.array([np.cos(h), np.sin(h)])
                new_poses.append(pose + step)
        poses = new_poses

    params = make_metric_params(cfg)
    truth_tracks = truth.tracks()
    est_tracks = log.estimate_tracks()
    rows = windowed_ospa2(truth_tracks, est_tracks, params, range(1, duration + 1))
    log.metric_rows = [
        (t, d, l, c, len(log.estimates[t - 1]), truth.cardinality(t))
        for (t, d, l, c) in rows
    ]
    if collect_grids:
        log.grids = grids
    return log


def _episode_worker(args):
    cfg, truth, mode, seed = args
    log = run_episode(cfg, truth, mode, seed)
    return {
        "mode": mode,
        "seed": seed,
        "metric_rows": log.metric_rows,
        "grid_entropy": log.grid_entropy,
        "estimates": log.estimates,
        "agent_poses": log.agent_poses,
        "timings": log.timings,
    }


def run_batch(cfg, modes, runs, out_dir=None, workers=None, base_seed=None, truth=None):
    """Monte Carlo sweep over value modes; independent RNG streams per run."""
    if truth is None:
        truth = build_truth(cfg)
    if base_seed is None:
        base_seed = int(cfg.get("seed", 0))
    jobs = []
    for mode in modes:
        for run in range(runs):
            seed = int(np.random.SeedSequence([base_seed, MODES.index(mode), run]).generate_state(1)[0])
            jobs.append((cfg, truth, mode, seed))
    if workers is None or workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_episode_worker, jobs))
    else:
        results = [_episode_worker(j) for j in jobs]

    summary = {"runs": runs, "modes": {}}
    series = {}
    for mode in modes:
        mode_results = [r for r in results if r["mode"] == mode]
        finals = np.array([r["metric_rows"][-1][1:4] for r in mode_results])
        entropy = np.array([np.mean(r["grid_entropy"]) for r in mode_results])
        summary["modes"][mode] = {
            "ospa2_dist_mean": float(finals[:, 0].mean()),
            "ospa2_dist_std": float(finals[:, 0].std()),
            "ospa2_loc_mean": float(finals[:, 1].mean()),
            "ospa2_card_mean": float(finals[:, 2].mean()),
            "grid_entropy_mean": float(entropy.mean()),
        }
        rows = np.array([[row[1:] for row in r["metric_rows"]] for r in mode_results])
        mean_rows = rows.mean(axis=0)
        series[mode] = [
            (t,) + tuple(mean_rows[t - 1]) for t in range(1, len(mean_rows) + 1)
        ]
    if out_dir is not None:
        import os

        os.makedirs(out_dir, exist_ok=True)
        for mode in modes:
            write_metric_csv(os.path.join(out_dir, f"{mode}_series.csv"), series[mode])
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
    return summary, series, results
