"""Core labelled-RFS types: track labels, Gaussian mixtures, LMB and GLMB densities.

All objects here are immutable value types shared freely between the filter,
the planner and the simulator.  Kinematic vectors are laid out as
[x, vx, y, vy] for constant-velocity states and [x, vx, y, vy, turn_rate]
for constant-turn states; downstream code dispatches on length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WEIGHT_TOL = 1e-9
COV_JITTER = 1e-9
PRUNE_WEIGHT = 1e-6
MAX_COMPONENTS = 20


@dataclass(frozen=True, order=True)
class TrackLabel:
    """Unique track identity: (birth scan index, index among same-scan births)."""

    birth_time: int
    birth_index: int

    def __repr__(self):
        return f"L({self.birth_time},{self.birth_index})"


@dataclass(frozen=True)
class LabelledState:
    label: TrackLabel
    kinematics: tuple

    @property
    def position(self):
        x = self.kinematics
        return np.array([x[0], x[2]])


def _check_distinct_labels(states):
    labels = [s.label for s in states]
    if len(set(labels)) != len(labels):
        raise ValueError("multi-object state has duplicate labels")


def make_multi_object_state(states):
    """Validated multi-object state: a frozenset of LabelledState with distinct labels."""
    states = list(states)
    _check_distinct_labels(states)
    return frozenset(states)


def _ensure_pd(cov, jitter=COV_JITTER):
    """Return a symmetric positive-definite copy of cov, or raise.

    Symmetry must hold within 1e-9; PD is established by Cholesky, retried
    with up to `jitter` added to the diagonal before giving up.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"covariance must be square, got shape {cov.shape}")
    if np.max(np.abs(cov - cov.T)) > 1e-9:
        raise ValueError("covariance not symmetric within 1e-9")
    cov = 0.5 * (cov + cov.T)
    try:
        np.linalg.cholesky(cov)
        return cov
    except np.linalg.LinAlgError:
        pass
    bumped = cov + jitter * np.eye(cov.shape[0])
    try:
        np.linalg.cholesky(bumped)
        return bumped
    except np.linalg.LinAlgError:
        raise ValueError("covariance not positive definite (jitter 1e-9 insufficient)")


class GaussianMixture:
    """Normalized Gaussian mixture over a kinematic space.

    weights: (n,), non-negative, summing to 1 within 1e-9
    means:   (n, d)
    covs:    (n, d, d), each symmetric positive definite
    """

    __slots__ = ("weights", "means", "covs")

    def __init__(self, weights, means, covs, _validated=False):
        weights = np.atleast_1d(np.asarray(weights, dtype=float))
        means = np.atleast_2d(np.asarray(means, dtype=float))
        covs = np.asarray(covs, dtype=float)
        if covs.ndim == 2:
            covs = covs[None, :, :]
        if len(weights) == 0:
            raise ValueError("empty mixture")
        if _validated:
            self.weights, self.means, self.covs = weights, means, covs
            return
        if np.any(weights < 0):
            raise ValueError("mixture weights must be non-negative")
        s = weights.sum()
        if abs(s - 1.0) > WEIGHT_TOL:
            raise ValueError(f"mixture weights sum to {s}, expected 1 within {WEIGHT_TOL}")
        if means.shape[0] != len(weights) or covs.shape[0] != len(weights):
            raise ValueError("component count mismatch")
        covs = np.stack([_ensure_pd(c) for c in covs])
        self.weights = weights
        self.means = means
        self.covs = covs

    @classmethod
    def single(cls, mean, cov):
        return cls(np.array([1.0]), np.atleast_2d(mean), np.asarray(cov)[None, :, :])

    @classmethod
    def from_unnormalized(cls, weights, means, covs, validated=False):
        """Build a mixture from non-negative unnormalized weights, pruning and capping.

        `validated=True` skips the per-component PD check for covariances
        that already come out of Kalman algebra.
        """
        weights = np.atleast_1d(np.asarray(weights, dtype=float))
        total = weights.sum()
        if total <= 0:
            raise ValueError("mixture has no weight")
        means = np.atleast_2d(np.asarray(means, dtype=float))
        covs = np.asarray(covs, dtype=float)
        gm = cls(weights / total, means, covs, _validated=validated)
        return gm.compacted()

    def __len__(self):
        return len(self.weights)

    @property
    def dim(self):
        return self.means.shape[1]

    def mean(self):
        return self.weights @ self.means

    def covariance(self):
        """Overall covariance (moment of the full mixture)."""
        m = self.mean()
        d = self.means - m[None, :]
        spread = np.einsum("i,ij,ik->jk", self.weights, d, d)
        return np.einsum("i,ijk->jk", self.weights, self.covs) + spread

    def compacted(self, prune_weight=PRUNE_WEIGHT, max_components=MAX_COMPONENTS):
        """Prune sub-threshold components and merge lowest-weight pairs down to the cap."""
        keep = self.weights >= prune_weight
        if not np.any(keep):
            keep = self.weights == self.weights.max()
        w = self.weights[keep]
        m = self.means[keep]
        P = self.covs[keep]
        w = w / w.sum()
        while len(w) > max_components:
            i, j = np.argsort(w)[:2]
            wm = w[i] + w[j]
            mu = (w[i] * m[i] + w[j] * m[j]) / wm
            di, dj = m[i] - mu, m[j] - mu
            Pm = (w[i] * (P[i] + np.outer(di, di)) + w[j] * (P[j] + np.outer(dj, dj))) / wm
            keep_idx = [k for k in range(len(w)) if k not in (i, j)]
            w = np.append(w[keep_idx], wm)
            m = np.vstack([m[keep_idx], mu])
            P = np.concatenate([P[keep_idx], Pm[None]], axis=0)
            w = w / w.sum()
        return GaussianMixture(w, m, P, _validated=True)

    def sample(self, rng, n):
        idx = rng.choice(len(self.weights), size=n, p=self.weights)
        out = np.empty((n, self.dim))
        for i in range(len(self.weights)):
            take = idx == i
            k = int(take.sum())
            if k:
                out[take] = rng.multivariate_normal(self.means[i], self.covs[i], size=k)
        return out


def gm_moment_match(mixture: GaussianMixture) -> GaussianMixture:
    """Collapse a mixture to a single Gaussian with the same mean and covariance."""
    if len(mixture) == 0:
        raise ValueError("empty mixture")
    return GaussianMixture.single(mixture.mean(), mixture.covariance())


class LmbDensity:
    """Labelled multi-Bernoulli density: per-label (existence, density) pairs."""

    __slots__ = ("tracks",)

    def __init__(self, tracks=None):
        tracks = dict(tracks or {})
        for label, (r, gm) in tracks.items():
            if not -1e-12 <= r <= 1 + 1e-12:
                raise ValueError(f"existence probability {r} outside [0,1] for {label}")
            tracks[label] = (min(max(float(r), 0.0), 1.0), gm)
        self.tracks = tracks

    def __len__(self):
        return len(self.tracks)

    def labels(self):
        return list(self.tracks.keys())

    def existence(self, label):
        return self.tracks[label][0]

    def density(self, label):
        return self.tracks[label][1]

    def items(self):
        return self.tracks.items()


def expected_cardinality(density: LmbDensity) -> float:
    """First moment of the cardinality distribution: sum of existence probabilities."""
    return float(sum(r for r, _ in density.tracks.values()))


class GlmbHypothesis:
    __slots__ = ("labels", "assoc_id", "weight", "densities")

    def __init__(self, labels, assoc_id, weight, densities):
        self.labels = frozenset(labels)
        self.assoc_id = assoc_id
        self.weight = float(weight)
        self.densities = densities  # label -> GaussianMixture
        if self.weight < 0:
            raise ValueError("hypothesis weight must be non-negative")
        missing = self.labels - set(self.densities)
        if missing:
            raise ValueError(f"labels without densities: {missing}")


class GlmbDensity:
    """GLMB density as a weighted list of (label set, association history) hypotheses."""

    __slots__ = ("hypotheses",)

    def __init__(self, hypotheses, normalize=False):
        hypotheses = list(hypotheses)
        if not hypotheses:
            raise ValueError("GLMB needs at least one hypothesis")
        total = sum(h.weight for h in hypotheses)
        if normalize:
            if total <= 0:
                raise ValueError("GLMB hypothesis weights sum to zero")
            hypotheses = [
                GlmbHypothesis(h.labels, h.assoc_id, h.weight / total, h.densities)
                for h in hypotheses
            ]
        elif abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"GLMB weights sum to {total}, expected 1")
        self.hypotheses = hypotheses

    @classmethod
    def empty(cls):
        return cls([GlmbHypothesis(frozenset(), (), 1.0, {})])

    def weight_sum(self):
        return sum(h.weight for h in self.hypotheses)

    def expected_cardinality(self):
        return float(sum(h.weight * len(h.labels) for h in self.hypotheses))

    def cardinality_distribution(self):
        nmax = max((len(h.labels) for h in self.hypotheses), default=0)
        cdn = np.zeros(nmax + 1)
        for h in self.hypotheses:
            cdn[len(h.labels)] += h.weight
        return cdn

    def label_existence(self):
        """Marginal existence probability per label (Eq. projecting onto each label)."""
        r = {}
        for h in self.hypotheses:
            for label in h.labels:
                r[label] = r.get(label, 0.0) + h.weight
        return r


def glmb_to_lmb(density: GlmbDensity) -> LmbDensity:
    """Project a GLMB onto the LMB with matching first moment.

    Existence is the marginal hypothesis weight carrying each label; the
    per-label density is the weight-mixed Gaussian mixture, renormalized.
    """
    total = density.weight_sum()
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"GLMB not normalized (weight sum {total})")
    pieces = {}
    for h in density.hypotheses:
        for label in h.labels:
            pieces.setdefault(label, []).append((h.weight, h.densities[label]))
    tracks = {}
    for label, parts in pieces.items():
        r = sum(w for w, _ in parts)
        ws, ms, Ps = [], [], []
        for w, gm in parts:
            ws.append(w * gm.weights)
            ms.append(gm.means)
            Ps.append(gm.covs)
        gm = GaussianMixture.from_unnormalized(
            np.concatenate(ws), np.vstack(ms), np.concatenate(Ps), validated=True
        )
        tracks[label] = (min(r, 1.0), gm)
    return LmbDensity(tracks)
