"""
Gaussian kernels and small kernel-matrix helpers.

All coordinates handed to these functions are expected in normalized units
(the playground mapped onto the unit square), so that kernel widths such as
``0.05`` are meaningful.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from kernelmaps.errors import InvalidParameterError

# Default widths, canonical increasing order.
DEFAULT_WIDTHS = (1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 0.1, 0.5, 1.0, 5.0)


def _check_sigma2(sigma2):
    if not np.isfinite(sigma2) or sigma2 <= 0:
        raise InvalidParameterError(f"kernel width must be positive, got {sigma2!r}")


@dataclass(frozen=True)
class KernelParams:
    """Widths ``sigma2_m`` of the ``M`` Gaussian kernels of a dictionary."""

    widths: tuple = DEFAULT_WIDTHS

    def __post_init__(self):
        widths = tuple(float(w) for w in self.widths)
        if len(widths) < 1:
            raise InvalidParameterError("at least one kernel width is required")
        for w in widths:
            _check_sigma2(w)
        if any(b <= a for a, b in zip(widths, widths[1:])):
            raise InvalidParameterError("kernel widths must be strictly increasing")
        object.__setattr__(self, "widths", widths)

    @property
    def M(self) -> int:
        return len(self.widths)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.widths, dtype=np.float64)


def gauss(x1, x2, sigma2: float) -> float:
    """Gaussian kernel ``exp(-||x1 - x2||^2 / (2 sigma2))``."""
    _check_sigma2(sigma2)
    d = np.asarray(x1, dtype=np.float64) - np.asarray(x2, dtype=np.float64)
    return float(np.exp(-np.dot(d, d) / (2.0 * sigma2)))


def sq_dists(a, b) -> np.ndarray:
    """Pairwise squared Euclidean distances between the rows of ``a`` and ``b``."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def gram(a, b, sigma2: float) -> np.ndarray:
    """Kernel matrix ``[kappa(a_i, b_j)]`` for a single width."""
    _check_sigma2(sigma2)
    return np.exp(-sq_dists(a, b) / (2.0 * sigma2))


def kernel_row(x, centers: Sequence, params: KernelParams) -> np.ndarray:
    """
    Multikernel matrix of one input against a dictionary.

    Returns the ``M x r`` matrix whose entry ``(m, i)`` is
    ``gauss(x, centers[i], params.widths[m])``.
    """
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    if centers.shape[0] == 0:
        return np.zeros((params.M, 0))
    d2 = sq_dists(np.asarray(x, dtype=np.float64).reshape(1, 2), centers)[0]
    return np.exp(-d2[None, :] / (2.0 * params.as_array()[:, None]))
