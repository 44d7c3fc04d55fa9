"""searchtrack: multi-agent planning for discovering and tracking mobile objects."""

from .rfs import (
    GaussianMixture,
    GlmbDensity,
    GlmbHypothesis,
    LabelledState,
    LmbDensity,
    TrackLabel,
    expected_cardinality,
    glmb_to_lmb,
    gm_moment_match,
)
from .models import BirthModel, MotionModel, SensorModel
from .glmb import MultiSensorScan, TruncationConfig, predict_and_update
from .occupancy import OccupancyGrid, grid_entropy, initialize_grid, occupancy_update
from .metrics import OspaParams, Track, ospa, ospa2, windowed_ospa2
from .planner import ActionSet, PartitionMatroid, brute_force_plan, fix_gcm_constants, greedy_plan
from .info import (
    ValueFunctionContext,
    discovery_value_v2,
    lmb_entropy,
    multiobjective_value,
    tracking_value_v1,
)

__version__ = "0.1.0"
