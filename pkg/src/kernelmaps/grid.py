"""Pixel lattice holding a path-loss matrix and its world/unit-square mappings."""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from kernelmaps.errors import InvalidArgumentError


@dataclass
class PathLossGrid:
    """
    ``X1 x X2`` matrix of path-loss values (dB) on a square-pixel lattice.

    Pixel ``(i, j)`` covers world coordinates
    ``origin + [i, i+1) * pixel_m`` along the first axis and
    ``origin + [j, j+1) * pixel_m`` along the second. Learners work in unit
    coordinates, where the longer side of the playground maps onto ``[0, 1]``.
    """

    X1: int
    X2: int
    pixel_m: float
    origin: tuple = (0.0, 0.0)
    values: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.X1 = int(self.X1)
        self.X2 = int(self.X2)
        if self.X1 < 1 or self.X2 < 1:
            raise InvalidArgumentError("grid needs at least one pixel per axis")
        if not self.pixel_m > 0:
            raise InvalidArgumentError("pixel size must be positive")
        self.origin = (float(self.origin[0]), float(self.origin[1]))
        if self.values is None:
            self.values = np.zeros((self.X1, self.X2))
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.X1, self.X2):
            raise InvalidArgumentError(
                f"values have shape {self.values.shape}, expected {(self.X1, self.X2)}"
            )
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgumentError("grid values must be finite")

    @property
    def shape(self):
        return (self.X1, self.X2)

    @property
    def extent_m(self) -> float:
        """Side length (m) of the square mapped onto the unit square."""
        return max(self.X1, self.X2) * self.pixel_m

    def same_geometry(self, other: "PathLossGrid") -> bool:
        return (
            self.shape == other.shape
            and self.pixel_m == other.pixel_m
            and self.origin == other.origin
        )

    def with_values(self, values) -> "PathLossGrid":
        return PathLossGrid(self.X1, self.X2, self.pixel_m, self.origin, values)

    def pixel_centers(self) -> np.ndarray:
        """World coordinates of all pixel centers, shape ``(X1*X2, 2)``, C order."""
        i, j = np.meshgrid(np.arange(self.X1), np.arange(self.X2), indexing="ij")
        return self.pixel_to_world(np.stack([i.ravel(), j.ravel()], axis=1))

    def pixel_to_world(self, pixels) -> np.ndarray:
        pixels = np.asarray(pixels, dtype=np.float64)
        return np.asarray(self.origin) + (pixels + 0.5) * self.pixel_m

    def world_to_pixel(self, xy) -> np.ndarray:
        """Pixel index containing each world point, clipped to the grid."""
        xy = np.asarray(xy, dtype=np.float64)
        idx = np.floor((xy - np.asarray(self.origin)) / self.pixel_m).astype(int)
        upper = np.array([self.X1 - 1, self.X2 - 1])
        return np.clip(idx, 0, upper)

    def to_unit(self, xy) -> np.ndarray:
        return (np.asarray(xy, dtype=np.float64) - np.asarray(self.origin)) / self.extent_m

    def from_unit(self, u) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(u, dtype=np.float64) * self.extent_m

    def unit_pixel_centers(self) -> np.ndarray:
        return self.to_unit(self.pixel_centers())

    def meta(self) -> dict:
        return {
            "X1": self.X1,
            "X2": self.X2,
            "pixel_m": self.pixel_m,
            "origin": list(self.origin),
        }

    def save(self, csv_path) -> Path:
        """Write values as a CSV matrix plus a ``.json`` geometry sidecar."""
        csv_path = Path(csv_path)
        np.savetxt(csv_path, self.values, delimiter=",", fmt="%.17g")
        sidecar = csv_path.with_suffix(".json")
        sidecar.write_text(json.dumps(self.meta(), indent=2) + "\n")
        return sidecar

    @classmethod
    def load(cls, csv_path) -> "PathLossGrid":
        csv_path = Path(csv_path)
        meta = json.loads(csv_path.with_suffix(".json").read_text())
        values = np.loadtxt(csv_path, delimiter=",", ndmin=2)
        return cls(meta["X1"], meta["X2"], meta["pixel_m"], tuple(meta["origin"]), values)
