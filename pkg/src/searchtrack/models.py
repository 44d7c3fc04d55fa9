"""Object dynamics, birth/survival, range-limited sensing and clutter models.

Everything here is a pure function over immutable model dataclasses; RNGs are
passed explicitly so Monte Carlo runs can use independent streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .rfs import GaussianMixture

CV = "cv"
CT = "ct"

# switch to a 2nd-order Taylor expansion of the turn matrix below this |theta*T0|
SMALL_TURN = 1e-6


@dataclass(frozen=True)
class MotionModel:
    kind: str = CV
    t0: float = 1.0
    sigma_cv: float = 0.0          # CV process noise (m/s^2)
    sigma_eta: float = 0.0         # CT velocity noise (m/s^2)
    sigma_q: float = 0.0           # CT turn-rate noise (rad/s), std dev
    p_survival: float = 0.99

    def __post_init__(self):
        if self.t0 <= 0:
            raise ValueError("sampling interval must be positive")
        for v in (self.sigma_cv, self.sigma_eta, self.sigma_q):
            if v < 0:
                raise ValueError("noise parameters must be non-negative")

    @property
    def state_dim(self):
        return 4 if self.kind == CV else 5


@dataclass(frozen=True)
class SensorModel:
    agent_index: int = 0
    pd_max: float = 0.8            # peak detection probability
    r_full: float = 200.0          # full-probability range r_D (m)
    decay: float = 0.008           # linear decay rate beyond r_full (1/m)
    r_max: float = 200.0           # hard detection cutoff (m)
    noise_floor: float = 10.0      # sigma_0 (m)
    noise_slope: float = 0.0       # beta (dimensionless), sigma = sigma_0 + beta*d
    clutter_rate: float = 0.0      # expected false alarms per scan
    clutter_region: tuple = (0.0, 1000.0, 0.0, 1000.0)  # xmin, xmax, ymin, ymax

    def __post_init__(self):
        if not 0 <= self.pd_max <= 1:
            raise ValueError("pd_max must be a probability")
        if self.r_full > self.r_max:
            raise ValueError("r_full must not exceed r_max")
        if self.clutter_rate < 0:
            raise ValueError("clutter rate must be non-negative")

    @property
    def clutter_area(self):
        xmin, xmax, ymin, ymax = self.clutter_region
        return (xmax - xmin) * (ymax - ymin)

    @property
    def clutter_intensity(self):
        """Uniform clutter intensity kappa(z) = rate / area."""
        if self.clutter_rate == 0:
            return 0.0
        return self.clutter_rate / self.clutter_area


@dataclass
class BirthModel:
    """Grid-based LMB birth: one (existence, Gaussian) slot per entry."""

    entries: list = field(default_factory=list)  # (slot_index, r_birth, GaussianMixture)
    p_survival: float = 0.99

    def __post_init__(self):
        for _, r, _ in self.entries:
            if not 0 <= r <= 1:
                raise ValueError("birth existence must be a probability")

    def total_birth_mass(self):
        return sum(r for _, r, _ in self.entries)


@lru_cache(maxsize=64)
def _cv_matrices_cached(t, sigma):
    f1 = np.array([[1.0, t], [0.0, 1.0]])
    q1 = sigma**2 * np.array([[t**3 / 3, t**2 / 2], [t**2 / 2, t]])
    return np.kron(np.eye(2), f1), np.kron(np.eye(2), q1)


def cv_matrices(model: MotionModel):
    """CV transition matrix and process-noise covariance for [x, vx, y, vy]."""
    return _cv_matrices_cached(model.t0, model.sigma_cv)


def _turn_entries(theta, t):
    """The four distinct entries of the planar turn matrix, with the small-angle limit."""
    a = theta * t
    if abs(a) < SMALL_TURN:
        # 2nd-order Taylor in theta: avoids 0/0 with no visible discontinuity
        s_over = t - theta**2 * t**3 / 6.0
        c_over = theta * t**2 / 2.0 - theta**3 * t**4 / 24.0
    else:
        s_over = np.sin(a) / theta
        c_over = (1.0 - np.cos(a)) / theta
    return s_over, c_over, np.cos(a), np.sin(a)


def ct_rotation(theta, t):
    """F^CT(theta) acting on [x, vx, y, vy]."""
    s_over, c_over, c, s = _turn_entries(theta, t)
    return np.array(
        [
            [1.0, s_over, 0.0, -c_over],
            [0.0, c, 0.0, -s],
            [0.0, c_over, 1.0, s_over],
            [0.0, s, 0.0, c],
        ]
    )


def ct_rotation_dtheta(theta, t):
    """d F^CT / d theta, with matching small-angle expansions."""
    a = theta * t
    if abs(a) < SMALL_TURN:
        ds_over = -theta * t**3 / 3.0
        dc_over = t**2 / 2.0 - theta**2 * t**4 / 8.0
    else:
        ds_over = (a * np.cos(a) - np.sin(a)) / theta**2
        dc_over = (a * np.sin(a) - (1.0 - np.cos(a))) / theta**2
    dc = -t * np.sin(a)
    ds = t * np.cos(a)
    return np.array(
        [
            [0.0, ds_over, 0.0, -dc_over],
            [0.0, dc, 0.0, -ds],
            [0.0, dc_over, 0.0, ds_over],
            [0.0, ds, 0.0, dc],
        ]
    )


def ct_noise_gain(t):
    """G^CT mapping per-axis acceleration noise into [x, vx, y, vy]."""
    return np.array([[t**2 / 2, 0.0], [t, 0.0], [0.0, t**2 / 2], [0.0, t]])


@lru_cache(maxsize=64)
def _ct_process_cov_cached(t, sigma_eta, sigma_q):
    g = ct_noise_gain(t)
    q4 = sigma_eta**2 * (g @ g.T)
    Q = np.zeros((5, 5))
    Q[:4, :4] = q4
    Q[4, 4] = (t * sigma_q) ** 2
    return Q


def ct_process_cov(model: MotionModel):
    return _ct_process_cov_cached(model.t0, model.sigma_eta, model.sigma_q)


def cv_transition(state, model: MotionModel, noise_sample=None):
    state = np.asarray(state, dtype=float)
    if state.shape != (4,):
        raise ValueError(f"CV state must be 4-dim, got {state.shape}")
    F, _ = cv_matrices(model)
    out = F @ state
    if noise_sample is not None:
        out = out + np.asarray(noise_sample, dtype=float)
    return out


def ct_transition(state, model: MotionModel, noise_sample=None):
    state = np.asarray(state, dtype=float)
    if state.shape != (5,):
        raise ValueError(f"CT state must be 5-dim, got {state.shape}")
    theta = state[4]
    out = np.empty(5)
    out[:4] = ct_rotation(theta, model.t0) @ state[:4]
    out[4] = theta
    if noise_sample is not None:
        noise_sample = np.asarray(noise_sample, dtype=float)
        out[:4] += ct_noise_gain(model.t0) @ noise_sample[:2]
        out[4] += model.t0 * noise_sample[2]
    return out


def transition(state, model: MotionModel, noise_sample=None):
    if model.kind == CV:
        return cv_transition(state, model, noise_sample)
    return ct_transition(state, model, noise_sample)


def transition_jacobian(model: MotionModel, mean):
    """Transition matrix at a linearization point (exact for CV, EKF for CT)."""
    if model.kind == CV:
        F, _ = cv_matrices(model)
        return F
    mean = np.asarray(mean, dtype=float)
    theta = mean[4]
    J = np.zeros((5, 5))
    J[:4, :4] = ct_rotation(theta, model.t0)
    J[:4, 4] = ct_rotation_dtheta(theta, model.t0) @ mean[:4]
    J[4, 4] = 1.0
    return J


def process_cov(model: MotionModel):
    if model.kind == CV:
        return cv_matrices(model)[1]
    return ct_process_cov(model)


@lru_cache(maxsize=8)
def position_matrix(state_dim):
    """Measurement matrix picking (x, y) out of the kinematic vector."""
    H = np.zeros((2, state_dim))
    H[0, 0] = 1.0
    H[1, 2] = 1.0
    H.setflags(write=False)
    return H


def position_of(state):
    state = np.asarray(state, dtype=float)
    return state[[0, 2]]


def detection_probability(object_position, agent_position, sensor: SensorModel):
    """Piecewise-linear range-limited detection probability."""
    d = float(np.linalg.norm(np.asarray(object_position, float) - np.asarray(agent_position, float)))
    if d > sensor.r_max:
        return 0.0
    if d <= sensor.r_full:
        return sensor.pd_max
    return max(0.0, sensor.pd_max - (d - sensor.r_full) * sensor.decay)


def detection_probability_grid(positions, agent_position, sensor: SensorModel):
    """Vectorized detection probability for an (n, 2) array of positions."""
    d = np.linalg.norm(np.asarray(positions, float) - np.asarray(agent_position, float), axis=-1)
    pd = np.maximum(0.0, sensor.pd_max - np.maximum(0.0, d - sensor.r_full) * sensor.decay)
    pd[d > sensor.r_max] = 0.0
    return pd


def measurement_cov(distance, sensor: SensorModel):
    sigma = sensor.noise_floor + sensor.noise_slope * distance
    return np.diag([sigma**2, sigma**2])


def measure(object_state, agent_position, sensor: SensorModel, noise_sample=None, rng=None):
    """Noisy position measurement of a detected object."""
    pos = position_of(object_state)
    if noise_sample is None and rng is None:
        return pos.copy()
    d = float(np.linalg.norm(pos - np.asarray(agent_position, float)))
    if noise_sample is None:
        noise_sample = rng.multivariate_normal(np.zeros(2), measurement_cov(d, sensor))
    return pos + np.asarray(noise_sample, dtype=float)


def sample_clutter(sensor: SensorModel, rng):
    """Poisson number of false alarms, uniform over the clutter rectangle."""
    n = rng.poisson(sensor.clutter_rate)
    if n == 0:
        return []
    xmin, xmax, ymin, ymax = sensor.clutter_region
    xs = rng.uniform(xmin, xmax, size=n)
    ys = rng.uniform(ymin, ymax, size=n)
    return [np.array([x, y]) for x, y in zip(xs, ys)]
