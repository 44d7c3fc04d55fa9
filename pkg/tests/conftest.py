import numpy as np
import pytest

from searchtrack.models import SensorModel
from searchtrack.rfs import GaussianMixture, LmbDensity, TrackLabel


def random_spd(rng, dim, scale=1.0):
    A = rng.normal(size=(dim, dim))
    return scale * (A @ A.T + dim * np.eye(dim))


def random_gm(rng, dim=4, n_comp=1, spread=10.0):
    weights = rng.random(n_comp) + 0.1
    weights /= weights.sum()
    means = rng.normal(scale=spread, size=(n_comp, dim))
    covs = np.stack([random_spd(rng, dim) for _ in range(n_comp)])
    return GaussianMixture(weights, means, covs)


def random_lmb(rng, n_tracks, dim=4, n_comp=1, r_range=(0.05, 0.95)):
    tracks = {}
    for i in range(n_tracks):
        r = rng.uniform(*r_range)
        tracks[TrackLabel(0, i)] = (r, random_gm(rng, dim, n_comp))
    return LmbDensity(tracks)


def disc_sensor(pd_max=0.9, r_full=100.0, r_max=100.0, noise=5.0, clutter=0.0,
                region=(0.0, 400.0, 0.0, 400.0), agent=0):
    return SensorModel(
        agent_index=agent, pd_max=pd_max, r_full=r_full, decay=0.01, r_max=r_max,
        noise_floor=noise, noise_slope=0.0, clutter_rate=clutter, clutter_region=region,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
