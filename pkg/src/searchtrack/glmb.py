"""Multi-sensor GLMB recursion: joint prediction/update, truncation, adaptive birth.

The update follows the standard joint form: for each prior hypothesis the
candidate label set is births plus survivors, and each multi-agent
association map contributes a posterior hypothesis whose weight is the
product of per-label factors

    unborn birth     1 - r_B
    dead survivor    1 - P_S
    live birth       r_B  * <psi, birth density>
    live survivor    P_S  * <psi, predicted density>

where psi multiplies, over agents, either the missed-detection factor
(1 - P_D) or the detection factor P_D g(z|x) / kappa(z).  Single-object
integrals are closed-form Kalman expressions; detection probability is
evaluated at the predicted component means so the agent fold order is
immaterial.  Association maps are enumerated exhaustively when the space is
small, otherwise candidates come from a Gibbs sampler and are scored exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb, perm

import numpy as np

from . import kalman
from .models import (
    BirthModel,
    MotionModel,
    detection_probability_grid,
    measurement_cov,
    position_matrix,
)
from .rfs import GaussianMixture, GlmbDensity, GlmbHypothesis, LabelledState, TrackLabel

NEG_INF = -np.inf


@dataclass(frozen=True)
class TruncationConfig:
    max_hypotheses: int = 200
    gibbs_samples: int = 150       # per-scan candidate budget, split over hypotheses
    enum_cap: int = 10**6          # largest association space enumerated exhaustively
    gate_chi2: float = 25.0        # Mahalanobis^2 gate for Gibbs proposals
    prune_existence: float = 1e-4  # drop posterior labels below this marginal existence
    prune_weight: float = 0.0      # drop hypotheses below this fraction of the best weight


class MultiSensorScan:
    """Per-agent measurement sets with the agent poses at scan time."""

    __slots__ = ("time", "poses", "measurements", "truth_tags")

    def __init__(self, time, poses, measurements, truth_tags=None):
        if len(poses) != len(measurements):
            raise ValueError("one pose per agent measurement set required")
        self.time = int(time)
        self.poses = [np.asarray(p, dtype=float) for p in poses]
        self.measurements = [[np.asarray(z, dtype=float) for z in zs] for zs in measurements]
        self.truth_tags = truth_tags

    @property
    def n_agents(self):
        return len(self.poses)

    def counts(self):
        return [len(zs) for zs in self.measurements]


class AssociationMap:
    """Per-agent map label -> {-1, 0, 1..|Z|}; positive values injective per agent."""

    __slots__ = ("labels", "values")

    def __init__(self, labels, values):
        self.labels = tuple(labels)
        values = np.asarray(values, dtype=int)
        if values.ndim != 2 or values.shape[1] != len(self.labels):
            raise ValueError("values must be (n_agents, n_labels)")
        for row in values:
            pos = row[row > 0]
            if len(pos) != len(set(pos.tolist())):
                raise ValueError("association not positive 1-1")
        dead = values == -1
        bad = np.any(dead, axis=0) & ~np.all(dead, axis=0)
        if np.any(bad):
            raise ValueError("dead labels must be dead for every agent")
        self.values = values

    def is_live(self, i):
        return self.values[0, i] >= 0

    def key(self):
        return tuple(map(tuple, self.values))


class AssociationCapExceeded(RuntimeError):
    pass


def count_associations(n_labels, meas_counts, cap=None):
    """Number of valid multi-agent association maps (exact).

    With `cap` given, returns early with cap + 1 as soon as the count
    provably exceeds it (the space grows super-exponentially).
    """
    if cap is not None and n_labels >= 1 and 2 ** n_labels > cap:
        return cap + 1  # lower bound: every label dead or alive-and-missed
    total = 0
    for a in range(n_labels + 1):
        per_agent = 1
        for m in meas_counts:
            per_agent *= sum(comb(a, k) * perm(m, k) for k in range(min(a, m) + 1))
        total += comb(n_labels, a) * per_agent
        if cap is not None and total > cap:
            return cap + 1
    return total


def _agent_vectors(alive_idx, n_meas):
    """All injective choice vectors over the alive labels for one agent."""
    out = []

    def rec(pos, current, used):
        if pos == len(alive_idx):
            out.append(tuple(current))
            return
        current.append(0)
        rec(pos + 1, current, used)
        current.pop()
        for j in range(1, n_meas + 1):
            if j not in used:
                used.add(j)
                current.append(j)
                rec(pos + 1, current, used)
                current.pop()
                used.remove(j)

    rec(0, [], set())
    return out


def iter_association_values(n_labels, meas_counts, cap=None):
    """Yield (n_agents, n_labels) arrays of all valid maps, dead labels as -1."""
    produced = 0
    indices = list(range(n_labels))
    for a in range(n_labels + 1):
        for alive in itertools.combinations(indices, a):
            per_agent = [_agent_vectors(alive, m) for m in meas_counts]
            for combo in itertools.product(*per_agent):
                values = np.full((len(meas_counts), n_labels), -1, dtype=int)
                for n, vec in enumerate(combo):
                    for k, i in enumerate(alive):
                        values[n, i] = vec[k]
                produced += 1
                if cap is not None and produced > cap:
                    raise AssociationCapExceeded(
                        f"association space exceeds cap ({cap}); use sampled truncation"
                    )
                yield values


def enumerate_associations(labels, scan: MultiSensorScan, sensors, cap=10**6):
    """All association maps for the label list, exactly once each."""
    labels = tuple(labels)
    counts = scan.counts()
    if count_associations(len(labels), counts, cap=cap) > cap:
        raise AssociationCapExceeded(
            f"association space exceeds cap ({cap}); use sampled truncation"
        )
    return [AssociationMap(labels, v) for v in iter_association_values(len(labels), counts)]


class _Track:
    """A unique (label, density) pair used during one update step."""

    __slots__ = (
        "label", "gm", "log_prior_live", "log_prior_dead", "is_birth",
        "pd", "logq", "f0", "fpos", "gated",
    )

    def __init__(self, label, gm, log_prior_live, log_prior_dead, is_birth):
        self.label = label
        self.gm = gm
        self.log_prior_live = log_prior_live
        self.log_prior_dead = log_prior_dead
        self.is_birth = is_birth

    def has_candidates(self):
        return any(len(g) for g in self.gated)


def _build_all_tables(tracks, scan, sensors, gate_chi2):
    """Per-agent detection probabilities, measurement log-likelihoods and gates.

    One vectorized pass over the stacked components of every track with
    explicit 2x2 innovation algebra; S = H P H' + R(z) where R depends on the
    measurement's range from the agent.
    """
    counts = [len(t.gm) for t in tracks]
    offsets = np.concatenate([[0], np.cumsum(counts)])
    positions = np.concatenate([t.gm.means[:, [0, 2]] for t in tracks])
    covs = np.concatenate([t.gm.covs for t in tracks])
    c11 = covs[:, 0, 0]
    c22 = covs[:, 2, 2]
    c12 = covs[:, 0, 2]
    for t in tracks:
        t.pd, t.logq, t.f0, t.fpos, t.gated = [], [], [], [], []
    for n, sensor in enumerate(sensors):
        pose = scan.poses[n]
        zs = scan.measurements[n]
        pd_all = detection_probability_grid(positions, pose, sensor)
        m = len(zs)
        if m:
            Z = np.stack(zs)
            sigma = sensor.noise_floor + sensor.noise_slope * np.linalg.norm(Z - pose, axis=1)
            rvar = sigma**2
            s11 = c11[:, None] + rvar[None, :]
            s22 = c22[:, None] + rvar[None, :]
            s12 = np.broadcast_to(c12[:, None], s11.shape)
            det = s11 * s22 - s12**2
            dx = Z[None, :, 0] - positions[:, 0][:, None]
            dy = Z[None, :, 1] - positions[:, 1][:, None]
            mahal_all = (s22 * dx**2 - 2.0 * s12 * dx * dy + s11 * dy**2) / det
            logq_all = -0.5 * mahal_all - 0.5 * np.log(det) - np.log(2.0 * np.pi)
            q_all = np.exp(logq_all)
        kappa = sensor.clutter_intensity or 1.0  # zero-clutter: absolute likelihoods
        for k, t in enumerate(tracks):
            lo, hi = offsets[k], offsets[k + 1]
            pd = pd_all[lo:hi]
            t.pd.append(pd)
            miss = float(t.gm.weights @ (1.0 - pd))
            t.f0.append(miss)
            if m == 0:
                t.logq.append(np.empty((counts[k], 0)))
                t.fpos.append(np.empty(0))
                t.gated.append(np.empty(0, dtype=int))
                continue
            t.logq.append(logq_all[lo:hi])
            fpos = (t.gm.weights * pd) @ q_all[lo:hi] / kappa
            t.fpos.append(fpos)
            ok = (mahal_all[lo:hi].min(axis=0) <= gate_chi2) & (fpos > 0)
            t.gated.append(np.nonzero(ok)[0] + 1)


def _live_factor(track: _Track, choices, scan, sensors):
    """Exact log integral <psi, p> and posterior density for one live track.

    Folds agents in index order; misses reweight components by (1 - pd),
    detections Kalman-update every component.  pd factors come from the
    predicted means (fixed before folding), so the result is order-free.
    """
    gm = track.gm
    logw = np.log(gm.weights)
    means = gm.means.copy()
    covs = gm.covs.copy()
    H = position_matrix(gm.dim)
    for n, j in enumerate(choices):
        pd = track.pd[n]
        if j == 0:
            with np.errstate(divide="ignore"):
                logw = logw + np.log1p(-pd)
            continue
        sensor = sensors[n]
        z = scan.measurements[n][j - 1]
        R = measurement_cov(float(np.linalg.norm(z - scan.poses[n])), sensor)
        kappa = sensor.clutter_intensity or 1.0
        with np.errstate(divide="ignore"):
            logw = logw + np.log(pd) - np.log(kappa)
        for i in range(len(logw)):
            if logw[i] == NEG_INF:
                continue
            S = H @ covs[i] @ H.T + R
            S = 0.5 * (S + S.T)
            K = np.linalg.solve(S, H @ covs[i]).T
            innov = z - H @ means[i]
            logw[i] += kalman.gaussian_loglik(z, H @ means[i], S)
            means[i] = means[i] + K @ innov
            covs[i] = covs[i] - K @ S @ K.T
            covs[i] = 0.5 * (covs[i] + covs[i].T)
    mx = logw.max()
    if mx == NEG_INF:
        return NEG_INF, None
    w = np.exp(logw - mx)
    total = w.sum()
    post = GaussianMixture(w / total, means, covs, _validated=True)
    return float(mx + np.log(total)), post


class _UpdateContext:
    """Shared exact scoring with a per-(track, choices) cache."""

    def __init__(self, tracks, scan, sensors):
        self.tracks = tracks
        self.scan = scan
        self.sensors = sensors
        self.cache = {}

    def factor(self, t_idx, choices):
        key = (t_idx, choices)
        hit = self.cache.get(key)
        if hit is None:
            track = self.tracks[t_idx]
            if all(c == -1 for c in choices):
                hit = (track.log_prior_dead, None)
            else:
                logf, post = _live_factor(track, choices, self.scan, self.sensors)
                hit = (track.log_prior_live + logf, post)
            self.cache[key] = hit
        return hit


class _Proposal:
    """Plain-list per-(track, agent) proposal tables for the Gibbs sweep."""

    __slots__ = (
        "f0", "cands", "prior_live", "prior_dead", "is_birth", "dead",
        "quiet", "w_live_quiet", "all_miss",
    )

    def __init__(self, track, n_agents):
        self.f0 = [float(f) for f in track.f0]
        self.cands = [
            [(int(j), float(track.fpos[n][j - 1])) for j in track.gated[n]]
            for n in range(n_agents)
        ]
        self.prior_live = float(np.exp(track.log_prior_live))
        self.prior_dead = float(np.exp(track.log_prior_dead))
        self.is_birth = track.is_birth
        self.dead = (-1,) * n_agents
        self.all_miss = (0,) * n_agents
        # tracks with no gated measurement anywhere flip between two states only
        self.quiet = all(not c for c in self.cands)
        w = self.prior_live
        for f in self.f0:
            w *= f
        self.w_live_quiet = w


def _greedy_init(props, n_agents):
    """Nearest-measurement seeding: per track, its best free gated measurement.

    Surviving tracks pick before birth slots (their densities are tighter and
    their lineage must not be starved by same-scan rebirths), higher-likelihood
    tracks first within each class.
    """
    order = sorted(
        range(len(props)),
        key=lambda i: (
            props[i].is_birth,
            -max((f for c in props[i].cands for _, f in c), default=0.0),
        ),
    )
    choices = [None] * len(props)
    occupied = [set() for _ in range(n_agents)]
    for i in order:
        pr = props[i]
        vec = []
        for n in range(n_agents):
            best_j, best_f = 0, pr.f0[n]
            for j, f in pr.cands[n]:
                if j not in occupied[n] and f > best_f:
                    best_j, best_f = j, f
            if best_j:
                occupied[n].add(best_j)
            vec.append(best_j)
        if pr.is_birth and not any(vec):
            choices[i] = pr.dead
        else:
            choices[i] = tuple(vec)
    return choices, occupied


def _gibbs_candidates(props, rng, n_samples, n_agents, seen):
    """Candidate association maps from a blocked Gibbs sweep over labels.

    Proposal weights treat agents independently against the predicted
    densities; candidates are deduplicated into `seen` and scored exactly
    by the caller.
    """
    choices, occupied = _greedy_init(props, n_agents)
    seen.setdefault(tuple(choices))
    n_tracks = len(props)
    uniform = rng.random
    sweeps = 10 * n_samples  # zero-budget hypotheses keep just the seeded maps
    patience = max(20, n_samples)  # stop once the chain yields nothing new
    stale = 0
    for _ in range(sweeps):
        if stale > patience:
            break
        for t in range(n_tracks):
            pr = props[t]
            cur = choices[t]
            if pr.quiet:
                tot = pr.prior_dead + pr.w_live_quiet
                choices[t] = (
                    pr.all_miss if (tot > 0 and uniform() * tot < pr.w_live_quiet) else pr.dead
                )
                continue
            # tentative per-agent draws for the live branch
            draft = []
            w_live = pr.prior_live
            for n in range(n_agents):
                f0 = pr.f0[n]
                cands = pr.cands[n]
                curn = cur[n]
                occn = occupied[n]
                total = f0
                for j, f in cands:
                    if j == curn or j not in occn:
                        total += f
                if total <= 0:
                    draft.append(0)
                    w_live *= f0
                    continue
                target = uniform() * total
                pick, fpick = 0, f0
                if target >= f0:
                    acc = f0
                    for j, f in cands:
                        if j == curn or j not in occn:
                            acc += f
                            if target < acc:
                                pick, fpick = j, f
                                break
                draft.append(pick)
                w_live *= fpick
            # live/dead flip given the drafted assignment
            tot = pr.prior_dead + w_live
            new = tuple(draft) if (tot > 0 and uniform() * tot < w_live) else pr.dead
            if new != cur:
                for n in range(n_agents):
                    if cur[n] > 0:
                        occupied[n].discard(cur[n])
                    if new[n] > 0:
                        occupied[n].add(new[n])
                choices[t] = new
        key = tuple(choices)
        if key in seen:
            stale += 1
        else:
            seen[key] = None
            stale = 0
    return seen


def predict_and_update(
    prior: GlmbDensity,
    birth: BirthModel,
    motion: MotionModel,
    sensors,
    scan: MultiSensorScan,
    truncation: TruncationConfig = TruncationConfig(),
    rng=None,
) -> GlmbDensity:
    """One joint prediction/update step of the multi-sensor GLMB filter."""
    if not prior.hypotheses:
        raise ValueError("prior GLMB has no hypotheses")
    if len(sensors) != scan.n_agents:
        raise ValueError("sensor list must match scan agents")
    rng = rng if rng is not None else np.random.default_rng(0)
    n_agents = scan.n_agents
    counts = scan.counts()
    p_s = birth.p_survival

    # birth tracks, one per slot
    tracks = []
    birth_ids = []
    with np.errstate(divide="ignore"):
        for slot, r_b, gm in birth.entries:
            label = TrackLabel(scan.time, slot)
            t = _Track(label, gm, np.log(r_b) if r_b > 0 else NEG_INF,
                       np.log1p(-r_b) if r_b < 1 else NEG_INF, True)
            tracks.append(t)
            birth_ids.append(len(tracks) - 1)

        # survivor tracks, unique per (label, prior density)
        surv_index = {}
        hyp_tracks = []
        for h in prior.hypotheses:
            ids = []
            for label in sorted(h.labels):
                key = (label, id(h.densities[label]))
                if key not in surv_index:
                    predicted = kalman.predict_gm(h.densities[label], motion).compacted()
                    t = _Track(label, predicted, np.log(p_s), np.log1p(-p_s), False)
                    tracks.append(t)
                    surv_index[key] = len(tracks) - 1
                ids.append(surv_index[key])
            hyp_tracks.append(ids)

    _build_all_tables(tracks, scan, sensors, truncation.gate_chi2)

    ctx = _UpdateContext(tracks, scan, sensors)
    dead = (-1,) * n_agents
    # zero-clutter agents cannot explain stray measurements: every one of
    # their measurements must be assigned for a candidate to be feasible
    strict_agents = [
        n for n, s in enumerate(sensors) if s.clutter_intensity == 0 and counts[n] > 0
    ]

    # one mode for the whole scan keeps hypothesis weights comparable
    max_labels = len(birth_ids) + max((len(ids) for ids in hyp_tracks), default=0)
    enumerate_all = count_associations(max_labels, counts, cap=truncation.enum_cap) \
        <= truncation.enum_cap

    # candidate generation + exact scoring
    raw = []  # (log_weight, prior_idx, {track_idx: choices})
    weights = np.array([h.weight for h in prior.hypotheses])
    budgets = np.round(truncation.gibbs_samples * weights / weights.sum()).astype(int)
    budgets[weights > 0.01] = np.maximum(budgets[weights > 0.01], 2)
    proposals = {}
    active_births = [t for t in birth_ids if tracks[t].has_candidates()]
    for p_idx, h in enumerate(prior.hypotheses):
        if enumerate_all:
            # in enumeration mode every label, birth slots included, is scored
            ids = birth_ids + hyp_tracks[p_idx]
            assignments = [
                tuple(tuple(values[:, i]) for i in range(len(ids)))
                for values in iter_association_values(len(ids), counts)
            ]
        else:
            # inactive birth slots stay dead everywhere; their (1 - r_B)
            # factors are shared by all candidates and cancel on normalizing
            ids = active_births + hyp_tracks[p_idx]
            for t in ids:
                if t not in proposals:
                    proposals[t] = _Proposal(tracks[t], n_agents)
            props = [proposals[t] for t in ids]
            legacy = tuple(pr.dead if pr.is_birth else pr.all_miss for pr in props)
            seen = dict.fromkeys([legacy])
            _gibbs_candidates(props, rng, int(budgets[p_idx]), n_agents, seen)
            assignments = list(seen)
        logw0 = np.log(h.weight) if h.weight > 0 else NEG_INF
        for choice_vec in assignments:
            if strict_agents:
                ok = all(
                    sum(1 for c in choice_vec if c[n] > 0) == counts[n]
                    for n in strict_agents
                )
                if not ok:
                    continue
            logw = logw0
            live = {}
            ok = True
            for t, choices in zip(ids, choice_vec):
                f, post = ctx.factor(t, choices)
                if f == NEG_INF:
                    ok = False
                    break
                logw += f
                if post is not None:
                    live[t] = post
            if ok:
                raw.append((logw, p_idx, live))

    if not raw:
        raise RuntimeError("no feasible association found (truncation too tight)")

    logs = np.array([r[0] for r in raw])
    mx = logs.max()
    w = np.exp(logs - mx)
    w /= w.sum()

    hypotheses = []
    for weight, (_, p_idx, live) in zip(w, raw):
        densities = {tracks[t].label: gm for t, gm in live.items()}
        assoc = (prior.hypotheses[p_idx].assoc_id, tuple(sorted((t, id(g)) for t, g in live.items())))
        hypotheses.append(GlmbHypothesis(set(densities), assoc, weight, densities))

    posterior = GlmbDensity(hypotheses, normalize=True)
    posterior = truncate_hypotheses(posterior, truncation)
    return _prune_labels(posterior, truncation.prune_existence)


def truncate_hypotheses(posterior: GlmbDensity, config: TruncationConfig) -> GlmbDensity:
    """Keep the highest-weight hypotheses up to the cap and renormalize."""
    hyps = sorted(posterior.hypotheses, key=lambda h: -h.weight)[: config.max_hypotheses]
    if config.prune_weight > 0 and hyps:
        floor = hyps[0].weight * config.prune_weight
        hyps = [h for h in hyps if h.weight >= floor]
    return GlmbDensity(hyps, normalize=True)


def _prune_labels(posterior: GlmbDensity, threshold) -> GlmbDensity:
    """Drop labels with negligible marginal existence, merging duplicate hypotheses."""
    existence = posterior.label_existence()
    drop = {label for label, r in existence.items() if r < threshold}
    merged = {}
    for h in posterior.hypotheses:
        labels = h.labels - drop
        densities = {l: h.densities[l] for l in labels}
        key = tuple(sorted((l, id(g)) for l, g in densities.items()))
        if key in merged:
            old = merged[key]
            merged[key] = GlmbHypothesis(labels, old.assoc_id, old.weight + h.weight, densities)
        else:
            merged[key] = GlmbHypothesis(labels, h.assoc_id, h.weight, densities)
    return GlmbDensity(list(merged.values()), normalize=True)


def adaptive_birth(grid, template: BirthModel) -> BirthModel:
    """Re-weight birth existence from the occupancy grid, keeping total mass fixed.

    The grid is resampled at the birth slot centres by bicubic interpolation;
    slot weights become 1 + r/max(r) and are scaled so the expected number of
    births is unchanged.
    """
    from .occupancy import sample_bicubic

    if not template.entries:
        return template
    points = np.array([gm.mean()[[0, 2]] for _, _, gm in template.entries])
    sampled = sample_bicubic(grid, points)
    peak = max(float(sampled.max()), 1e-12)
    scaled = 1.0 + sampled / peak
    total = template.total_birth_mass()
    new_r = scaled * total / scaled.sum()
    entries = [
        (slot, float(min(r, 1.0)), gm)
        for (slot, _, gm), r in zip(template.entries, new_r)
    ]
    return BirthModel(entries=entries, p_survival=template.p_survival)


def estimate_tracks(posterior: GlmbDensity):
    """MAP-cardinality estimator: best hypothesis at the most probable cardinality."""
    cdn = posterior.cardinality_distribution()
    n_map = int(np.argmax(cdn))
    best = None
    for h in posterior.hypotheses:
        if len(h.labels) == n_map and (best is None or h.weight > best.weight):
            best = h
    if best is None or n_map == 0:
        return []
    return [
        LabelledState(label, tuple(best.densities[label].mean()))
        for label in sorted(best.labels)
    ]
