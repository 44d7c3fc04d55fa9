"""Differential entropy of LMB densities and the planning value functions.

The LMB entropy sums, over label subsets L, the subset weight times its
log plus the per-track single-object entropy terms; because the subset
weights factor into independent Bernoullis the sum has an exact additive
form, used above the subset-enumeration cap.  Single-object entropies use
the moment-matched Gaussian closed form.

Value functions evaluate candidate action sets by rolling the current LMB
and occupancy grid over the lookahead horizon: V1 measures tracking
information from predicted ideal measurements, V2 measures discovery
information from empty measurements over the grid, and the multi-objective
combination normalizes both to distance-from-ideal per the global criterion
method.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import kalman
from .models import (
    detection_probability,
    measurement_cov,
    position_matrix,
)
from .occupancy import binary_entropy, negative_update, predict_cells
from .models import detection_probability_grid
from .rfs import GaussianMixture, LmbDensity, gm_moment_match

LOG_2PI_E = np.log(2.0 * np.pi * np.e)

SUBSET_CAP = 20          # exhaustive subset enumeration up to this many tracks
LOW_EXISTENCE = 0.01     # below this, tracks contribute only their Bernoulli term
PIMS_THRESHOLD = 0.5     # tracks at or above this existence generate ideal measurements


def gaussian_entropy(cov, hypervolume=1.0):
    """Differential entropy of a Gaussian relative to the unit hypervolume K."""
    cov = np.asarray(cov, dtype=float)
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise ValueError("covariance must be positive definite")
    return 0.5 * (cov.shape[0] * LOG_2PI_E + logdet) - np.log(hypervolume)


def _track_terms(density: LmbDensity, hypervolume):
    """Existence probabilities and single-object entropy terms -<p, log(Kp)>."""
    rs, ents = [], []
    for _, (r, gm) in density.items():
        rs.append(r)
        matched = gm_moment_match(gm)
        ents.append(gaussian_entropy(matched.covs[0], hypervolume))
    return np.array(rs), np.array(ents)


def bernoulli_entropy(r, single_object_entropy=0.0):
    """Entropy of a Bernoulli RFS with existence r and -<p, log(Kp)> given."""
    return float(binary_entropy(np.array([r]))[0] + r * single_object_entropy)


def _entropy_enumerated(rs, ents):
    """Literal subset sum over L of -w(L) log w(L) + w(L) sum of track entropies."""
    n = len(rs)
    h = 0.0
    for subset in itertools.product([0, 1], repeat=n):
        inc = np.array(subset, dtype=bool)
        w = np.prod(np.where(inc, rs, 1.0 - rs))
        if w > 0:
            h -= w * np.log(w)
        if inc.any():
            h += w * ents[inc].sum()
    return h


def _entropy_additive(rs, ents):
    return float(binary_entropy(rs).sum() + (rs * ents).sum())


def lmb_entropy(density: LmbDensity, hypervolume=1.0, subset_cap=SUBSET_CAP):
    """Differential entropy of an LMB in nats.

    Tracks with existence below LOW_EXISTENCE always contribute through the
    additive Bernoulli form; the rest are subset-enumerated when few enough,
    otherwise the (algebraically identical) additive form is used.
    """
    if len(density) == 0:
        return 0.0
    rs, ents = _track_terms(density, hypervolume)
    big = rs >= LOW_EXISTENCE
    h = _entropy_additive(rs[~big], ents[~big])
    if big.sum() > subset_cap:
        h += _entropy_additive(rs[big], ents[big])
    else:
        h += _entropy_enumerated(rs[big], ents[big])
    return float(h)


@dataclass
class ValueFunctionContext:
    """Everything a value evaluation needs, frozen for one planning step."""

    horizon: int
    hypervolume: float
    lmb: LmbDensity
    grid: object                 # OccupancyGrid
    motion: object               # MotionModel
    sensors: list                # one SensorModel per agent
    p_survival: float = 0.99
    agent_speed: float = 20.0
    region: tuple = (0.0, 1000.0, 0.0, 1000.0)
    _rollout: list = field(default_factory=list, repr=False)
    _grid_baseline: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least one scan")
        if self.hypervolume <= 0:
            raise ValueError("unit hypervolume must be positive")
        self._build_rollout()

    def _build_rollout(self):
        """Action-independent prediction of the LMB and the unsensed grid."""
        self._rollout = []
        current = self.lmb
        for _ in range(self.horizon):
            tracks = {}
            for label, (r, gm) in current.items():
                tracks[label] = (r * self.p_survival, kalman.predict_gm(gm, self.motion))
            current = LmbDensity(tracks)
            self._rollout.append(current)
        self._prior_entropy = [lmb_entropy(lmb, self.hypervolume) for lmb in self._rollout]
        # moment-matched (existence, position, covariance) triples per step
        self._moments = []
        for lmb in self._rollout:
            step_moments = []
            for _, (r, gm) in lmb.items():
                matched = gm_moment_match(gm)
                step_moments.append((r, matched.means[0][[0, 2]], matched.covs[0]))
            self._moments.append(step_moments)
        self._grid_baseline = []
        self._baseline_entropy = []
        r = self.grid.r.ravel()
        for _ in range(self.horizon):
            r = predict_cells(r, self.grid.birth, self.grid.p_survival)
            self._grid_baseline.append(r)
            self._baseline_entropy.append(float(binary_entropy(r).sum()))
        self._centers = self.grid.cell_centers().reshape(-1, 2)
        self._traj_cache = {}
        self._alpha_cache = {}

    def predicted_lmb(self, step):
        return self._rollout[step]

    def rollout_moments(self, step):
        return self._moments[step]

    def prior_entropy(self, step):
        return self._prior_entropy[step]

    def baseline_cells(self, step):
        return self._grid_baseline[step]

    def baseline_entropy(self, step):
        return self._baseline_entropy[step]

    def action_poses(self, action):
        key = (action.agent, action.heading_index, action.start)
        traj = self._traj_cache.get(key)
        if traj is None:
            traj = agent_trajectory(
                action.start, action.heading, self.agent_speed, self.motion.t0, self.horizon
            )
            self._traj_cache[key] = traj
        return traj

    def miss_grid(self, agent, pose):
        """Cached per-cell (1 - P_D) field for one agent pose."""
        key = (agent, round(float(pose[0]), 6), round(float(pose[1]), 6))
        alpha = self._alpha_cache.get(key)
        if alpha is None:
            alpha = 1.0 - detection_probability_grid(self._centers, pose, self.sensors[agent])
            self._alpha_cache[key] = alpha
        return alpha


def agent_trajectory(start, heading, speed, t0, horizon):
    """Positions after 1..horizon steps of constant-heading motion."""
    start = np.asarray(start, dtype=float)
    step = speed * t0 * np.array([np.cos(heading), np.sin(heading)])
    return [start + (j + 1) * step for j in range(horizon)]


def generate_pims(predicted: LmbDensity, agent_poses, sensors, threshold=PIMS_THRESHOLD):
    """Predicted ideal measurement set for one lookahead step.

    Every confident track (existence >= threshold) yields one noiseless
    position measurement at each agent whose detection probability there is
    positive; no clutter, no misdetections.
    """
    out = []
    for pose, sensor in zip(agent_poses, sensors):
        zs = []
        for label, (r, gm) in predicted.items():
            if r < threshold:
                continue
            pos = gm_moment_match(gm).means[0][[0, 2]]
            if detection_probability(pos, pose, sensor) > 0:
                zs.append((label, pos))
        out.append(zs)
    return out


def _pseudo_update(moments, agent_poses, sensors, hypervolume, state_dim):
    """Conditional entropy of the LMB given the PIMS scan at one step.

    Detected tracks get the covariance-only Kalman shrinkage from each
    covering agent (ideal measurements carry zero innovation); existence
    probabilities are left untouched so expected cardinality -- and with it
    the hypervolume unit -- cancels from the mutual information exactly.
    """
    rs, ents = [], []
    H = position_matrix(state_dim)
    for r, pos, cov in moments:
        if r >= PIMS_THRESHOLD:
            Rs = []
            for pose, sensor in zip(agent_poses, sensors):
                if detection_probability(pos, pose, sensor) > 0:
                    d = float(np.linalg.norm(pos - np.asarray(pose, float)))
                    Rs.append(measurement_cov(d, sensor))
            if Rs:
                cov = kalman.fuse_covariance(cov, H, Rs)
        rs.append(r)
        ents.append(gaussian_entropy(cov, hypervolume))
    rs = np.array(rs)
    ents = np.array(ents)
    if len(rs) == 0:
        return 0.0
    big = rs >= LOW_EXISTENCE
    if big.sum() > SUBSET_CAP:
        return _entropy_additive(rs, ents)
    return _entropy_additive(rs[~big], ents[~big]) + _entropy_enumerated(rs[big], ents[big])


def _poses_at_step(action_set, step, context):
    poses, sensors = [], []
    for action in action_set.actions:
        poses.append(context.action_poses(action)[step])
        sensors.append(context.sensors[action.agent])
    return poses, sensors


def tracking_value_v1(context: ValueFunctionContext, action_set) -> float:
    """Mutual information between the multi-object state and the PIMS over the horizon."""
    action_set.check_feasible()
    if not action_set.actions:
        return 0.0
    state_dim = context.motion.state_dim
    total = 0.0
    for step in range(context.horizon):
        moments = context.rollout_moments(step)
        if not moments:
            continue
        poses, sensors = _poses_at_step(action_set, step, context)
        h_cond = _pseudo_update(moments, poses, sensors, context.hypervolume, state_dim)
        total += context.prior_entropy(step) - h_cond
    return float(total)


def discovery_value_v2(context: ValueFunctionContext, action_set) -> float:
    """Mutual information between the occupancy grid and empty measurement sets.

    The conditional entropy propagates the grid along the hypothesized
    trajectories with empty measurements; the baseline is the same
    propagation without any sensing, so an empty action set scores zero.
    The agents' per-cell negative updates compose into a single update with
    the product of their missed-detection fields.
    """
    action_set.check_feasible()
    if not action_set.actions:
        return 0.0
    grid = context.grid
    r = grid.r.ravel()
    total = 0.0
    for step in range(context.horizon):
        r = predict_cells(r, grid.birth, grid.p_survival)
        alpha = None
        for action in action_set.actions:
            pose = context.action_poses(action)[step]
            miss = context.miss_grid(action.agent, pose)
            alpha = miss if alpha is None else alpha * miss
        if alpha is not None:
            r = alpha * r / (1.0 - r + alpha * r)
        h_cond = binary_entropy(r).sum()
        total += context.baseline_entropy(step) - h_cond
    return float(total)


def multiobjective_value(context, action_set, norm_constants) -> float:
    """Global criterion combination of V1 and V2 with frozen normalization constants."""
    action_set.check_feasible()
    if not action_set.actions:
        return 0.0
    (min1, max1), (min2, max2) = norm_constants
    total = 0.0
    v1 = tracking_value_v1(context, action_set)
    if max1 > min1:
        total += (v1 - min1) / (max1 - min1)
    v2 = discovery_value_v2(context, action_set)
    if max2 > min2:
        total += (v2 - min2) / (max2 - min2)
    return float(total)
