"""Dynamic occupancy grid of discovery probabilities for undetected mobile objects.

Each cell holds the probability that at least one undetected object occupies
it, propagated by a per-cell Bernoulli recursion: a birth/survival predict
step followed by one negative-information update per agent whose field of
view touches the cell.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .models import SensorModel, detection_probability_grid


@dataclass(frozen=True)
class OccupancyGrid:
    nx: int
    ny: int
    cell_w: float
    cell_h: float
    origin: tuple  # (x, y) of the lower-left corner
    r: np.ndarray  # (ny, nx) discovery probabilities
    birth: float = 0.001   # per-cell per-scan birth probability
    p_survival: float = 0.99

    def __post_init__(self):
        if self.nx <= 0 or self.ny <= 0:
            raise ValueError("grid dims must be positive")
        r = np.asarray(self.r, dtype=float)
        if r.shape != (self.ny, self.nx):
            raise ValueError(f"r must be ({self.ny},{self.nx}), got {r.shape}")
        if np.any(r < 0) or np.any(r > 1):
            raise ValueError("discovery probabilities must lie in [0,1]")
        object.__setattr__(self, "r", r)

    @property
    def n_cells(self):
        return self.nx * self.ny

    def cell_centers(self):
        """(ny, nx, 2) array of cell-center coordinates."""
        x0, y0 = self.origin
        xs = x0 + (np.arange(self.nx) + 0.5) * self.cell_w
        ys = y0 + (np.arange(self.ny) + 0.5) * self.cell_h
        cx, cy = np.meshgrid(xs, ys)
        return np.stack([cx, cy], axis=-1)

    def with_r(self, r):
        return replace(self, r=r)


def initialize_grid(nx, ny, cell_w, cell_h, origin=(0.0, 0.0), birth=0.001, p_survival=0.99):
    """Fresh grid with no prior information: r equals the birth probability."""
    if nx <= 0 or ny <= 0:
        raise ValueError("grid dims must be positive")
    r = np.full((ny, nx), float(birth))
    return OccupancyGrid(nx, ny, cell_w, cell_h, tuple(origin), r, birth, p_survival)


def negative_update(r, pd):
    """One agent's update with an empty measurement (elementwise over cells).

    A Moebius map in r: r' = (1-pd) r / (1 - pd r); keeps [0,1] and never
    increases r.
    """
    return (1.0 - pd) * r / (1.0 - pd * r)


def predict_cells(r, birth, p_survival):
    return birth * (1.0 - r) + r * p_survival


def occupancy_update(grid: OccupancyGrid, agent_poses, sensors) -> OccupancyGrid:
    """Predict (birth + survival) then apply each agent's empty-measurement update."""
    if len(agent_poses) != len(sensors):
        raise ValueError("pose count must equal sensor count")
    centers = grid.cell_centers().reshape(-1, 2)
    r = predict_cells(grid.r.ravel(), grid.birth, grid.p_survival)
    for pose, sensor in zip(agent_poses, sensors):
        pd = detection_probability_grid(centers, pose, sensor)
        r = negative_update(r, pd)
    return grid.with_r(r.reshape(grid.ny, grid.nx))


def binary_entropy(r):
    """Elementwise Bernoulli entropy in nats, with 0 log 0 = 0."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    mask = (r > 0) & (r < 1)
    rm = r[mask]
    out[mask] = -(rm * np.log(rm) + (1 - rm) * np.log(1 - rm))
    return out


def grid_entropy(grid: OccupancyGrid) -> float:
    """Total Shannon entropy of the grid (sum of per-cell binary entropies)."""
    return float(binary_entropy(grid.r).sum())


def _catmull_rom_weights(t):
    """Catmull-Rom cubic kernel weights for the 4 taps around fractional offset t."""
    t2 = t * t
    t3 = t2 * t
    return np.stack(
        [
            -0.5 * t3 + t2 - 0.5 * t,
            1.5 * t3 - 2.5 * t2 + 1.0,
            -1.5 * t3 + 2.0 * t2 + 0.5 * t,
            0.5 * t3 - 0.5 * t2,
        ],
        axis=-1,
    )


def sample_bicubic(grid: OccupancyGrid, points):
    """Catmull-Rom bicubic interpolation of the r field at world coordinates.

    Sampling is in cell-center space with edge clamping; results are clamped
    to [0,1] (cubic kernels can overshoot).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x0, y0 = grid.origin
    gx = (pts[:, 0] - x0) / grid.cell_w - 0.5
    gy = (pts[:, 1] - y0) / grid.cell_h - 0.5
    ix = np.floor(gx).astype(int)
    iy = np.floor(gy).astype(int)
    wx = _catmull_rom_weights(gx - ix)
    wy = _catmull_rom_weights(gy - iy)
    out = np.zeros(len(pts))
    for dy in range(-1, 3):
        rows = np.clip(iy + dy, 0, grid.ny - 1)
        for dx in range(-1, 3):
            cols = np.clip(ix + dx, 0, grid.nx - 1)
            out += wy[:, dy + 1] * wx[:, dx + 1] * grid.r[rows, cols]
    return np.clip(out, 0.0, 1.0)


def write_grid_csv(path, grid: OccupancyGrid):
    """Row-major dump with a geometry header line, one row of values per cell row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["nx", "ny", "cell_w", "cell_h", "origin_x", "origin_y"])
        writer.writerow(
            [grid.nx, grid.ny, grid.cell_w, grid.cell_h, grid.origin[0], grid.origin[1]]
        )
        for row in grid.r:
            writer.writerow([f"{v:.12g}" for v in row])


def read_grid_csv(path, birth=0.001, p_survival=0.99):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["nx", "ny"]:
            raise ValueError("not a grid CSV")
        nx, ny, cw, ch, ox, oy = next(reader)
        rows = [list(map(float, row)) for row in reader]
    r = np.array(rows)
    return OccupancyGrid(int(nx), int(ny), float(cw), float(ch), (float(ox), float(oy)), r,
                         birth, p_survival)
