"""Projection weights emphasizing measurements close to a route of interest."""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from kernelmaps.errors import InvalidArgumentError, InvalidParameterError, TraceFormatError


@dataclass
class Trajectory:
    """
    Ordered pixels of a route (or any area of interest).

    ``pixel_m`` is the pixel side in meters and ``extent_m`` the playground
    side mapped onto the unit square, so pixel ``p`` has its center at
    ``(p + 0.5) * pixel_m / extent_m`` in unit coordinates.
    """

    pixels: np.ndarray
    pixel_m: float
    extent_m: float

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=int).reshape(-1, 2)
        if not (self.pixel_m > 0 and self.extent_m > 0):
            raise InvalidParameterError("pixel_m and extent_m must be positive")
        self._tree = None

    @classmethod
    def on_grid(cls, pixels, grid) -> "Trajectory":
        traj = cls(pixels, grid.pixel_m, grid.extent_m)
        upper = np.array(grid.shape)
        if np.any(traj.pixels < 0) or np.any(traj.pixels >= upper):
            raise InvalidArgumentError("trajectory leaves the grid")
        return traj

    def __len__(self):
        return len(self.pixels)

    def unit_centers(self) -> np.ndarray:
        return (self.pixels + 0.5) * (self.pixel_m / self.extent_m)

    def _kdtree(self):
        if self._tree is None:
            self._tree = cKDTree(self.unit_centers())
        return self._tree

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["px", "py"])
            writer.writerows(self.pixels.tolist())

    @classmethod
    def load_csv(cls, path, pixel_m, extent_m) -> "Trajectory":
        rows = []
        with open(Path(path), newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["px", "py"]:
                raise TraceFormatError("expected header 'px,py'", line=1)
            for lineno, row in enumerate(reader, start=2):
                try:
                    rows.append((int(row[0]), int(row[1])))
                except (ValueError, IndexError):
                    raise TraceFormatError(f"bad pixel row {row!r}", line=lineno) from None
        return cls(np.array(rows, dtype=int).reshape(-1, 2), pixel_m, extent_m)


def min_distance(x, traj: Trajectory) -> float:
    """Distance (unit coordinates) from ``x`` to the nearest route pixel center."""
    if len(traj) == 0:
        raise InvalidArgumentError("empty trajectory")
    d, _ = traj._kdtree().query(np.asarray(x, dtype=np.float64).reshape(2))
    return float(d)


def side_info_weights(samples, traj: Trajectory, eps_w: float = 0.01) -> np.ndarray:
    """
    Normalized weights ``1 / (d_min + eps_w)`` for a batch of locations.

    The raw weight of each location is the inverse of its distance to the
    route plus ``eps_w``; the weights are then scaled to sum to one.
    """
    if not eps_w > 0:
        raise InvalidParameterError(f"eps_w must be positive, got {eps_w!r}")
    if len(traj) == 0:
        raise InvalidArgumentError("empty trajectory")
    xs = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    d, _ = traj._kdtree().query(xs)
    raw = 1.0 / (np.asarray(d, dtype=np.float64) + eps_w)
    return raw / raw.sum()
