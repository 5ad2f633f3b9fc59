"""
Adaptive projected subgradient method (APSM) over a Gaussian RKHS.

The estimate is a finite kernel expansion ``f(x) = sum_i c_i k(x_i, x)``.
Each update projects the current estimate onto the hyperslabs
``{h : |h(x_j) - y_j| <= eps}`` of a small batch of recent measurements and
moves towards their weighted combination with an extrapolated step
``mu_scale * M_n``.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from kernelmaps.errors import InvalidArgumentError, InvalidParameterError
from kernelmaps.grid import PathLossGrid
from kernelmaps.kernel import gram

# Denominators below this are treated as a cancelled combination.
_DEGENERATE_NORM = 1e-14


@dataclass(frozen=True)
class HyperslabSample:
    """A measurement seen as the hyperslab ``{h : |h(x) - y| <= eps}``."""

    x: tuple
    y: float
    weight: float = 1.0

    def __post_init__(self):
        if not self.weight > 0:
            raise InvalidArgumentError(f"hyperslab weight must be positive, got {self.weight}")


@dataclass
class ApsmModel:
    """Kernel expansion with its APSM tunables."""

    sigma2: float = 0.05
    eps: float = 0.01
    q: int = 20
    alpha: float = 0.01
    mu_scale: float = 1.0
    centers: np.ndarray = field(default=None, repr=False)
    coeffs: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise InvalidParameterError("sigma2 must be positive")
        if not self.eps >= 0:
            raise InvalidParameterError("eps must be non-negative")
        if not 0 < self.mu_scale < 2:
            raise InvalidParameterError("mu_scale must lie in (0, 2)")
        if int(self.q) != self.q or self.q < 1:
            raise InvalidParameterError("q must be a positive integer")
        if not 0 < self.alpha < 1:
            raise InvalidParameterError("alpha must lie in (0, 1)")
        self.q = int(self.q)
        centers = np.zeros((0, 2)) if self.centers is None else self.centers
        coeffs = np.zeros(0) if self.coeffs is None else self.coeffs
        self.centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
        self.coeffs = np.asarray(coeffs, dtype=np.float64).reshape(-1)
        if len(self.centers) != len(self.coeffs):
            raise InvalidArgumentError("centers and coeffs differ in length")
        self._index = {}
        for i, c in enumerate(self.centers):
            key = (c[0], c[1])
            if key in self._index:
                raise InvalidArgumentError(f"duplicate dictionary center {key}")
            self._index[key] = i
        # Diagnostic of the last update: M_n, or None when no slab was violated.
        self.last_M = None

    @property
    def size(self) -> int:
        return len(self.coeffs)

    def params(self) -> dict:
        return {
            "sigma2": self.sigma2,
            "eps": self.eps,
            "q": self.q,
            "alpha": self.alpha,
            "mu_scale": self.mu_scale,
        }

    def copy(self) -> "ApsmModel":
        return ApsmModel(**self.params(), centers=self.centers.copy(), coeffs=self.coeffs.copy())

    def index_of(self, x):
        return self._index.get((float(x[0]), float(x[1])))

    def append_center(self, x, coeff=0.0) -> int:
        x = np.asarray(x, dtype=np.float64).reshape(2)
        key = (x[0], x[1])
        if key in self._index:
            raise InvalidArgumentError(f"center {key} already in dictionary")
        self.centers = np.vstack([self.centers, x])
        self.coeffs = np.append(self.coeffs, coeff)
        self._index[key] = len(self.coeffs) - 1
        return self._index[key]

    def to_dict(self) -> dict:
        return {
            "kind": "apsm",
            "params": self.params(),
            "centers": self.centers.tolist(),
            "coeffs": self.coeffs.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ApsmModel":
        return cls(**data["params"], centers=data["centers"], coeffs=data["coeffs"])


def evaluate(model: ApsmModel, x) -> float:
    """Value of the kernel expansion at a single point."""
    if model.size == 0:
        return 0.0
    return float(gram(x, model.centers, model.sigma2)[0] @ model.coeffs)


def evaluate_many(model: ApsmModel, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64).reshape(-1, 2)
    if model.size == 0:
        return np.zeros(len(xs))
    return gram(xs, model.centers, model.sigma2) @ model.coeffs


def _beta(value, y, eps):
    # Gaussian kernels: kappa(x, x) = 1, so no division is needed.
    r = value - y
    if r < -eps:
        return y - value - eps
    if r > eps:
        return y - value + eps
    return 0.0


def project_hyperslab(model: ApsmModel, s: HyperslabSample) -> float:
    """
    Coefficient ``beta`` of the projection onto one hyperslab.

    The projection of the current estimate ``f`` is ``f + beta * k(s.x, .)``;
    ``beta`` vanishes when ``f`` already satisfies the slab and otherwise moves
    the residual at ``s.x`` onto the nearer slab boundary.
    """
    return _beta(evaluate(model, s.x), s.y, model.eps)


def apsm_update(model: ApsmModel, batch, grow: bool = True) -> ApsmModel:
    """
    One APSM iteration over a batch of weighted hyperslabs, in place.

    Parameters
    ----------
    model : ApsmModel
        Current estimate; modified and returned.
    batch : sequence of HyperslabSample
        Hyperslabs taking part in this iteration. Weights must sum to one.
    grow : bool
        When true, batch locations missing from the dictionary become new
        centers. When false, their contribution is moved onto the nearest
        existing center, scaled by the kernel value between the two points
        (i.e. projected onto that center's kernel section).

    Returns
    -------
    ApsmModel
        The same object. ``model.last_M`` holds ``M_n`` of this iteration,
        or None when the estimate already lay in every slab.
    """
    batch = list(batch)
    if not batch:
        raise InvalidArgumentError("empty batch")
    w = np.array([s.weight for s in batch], dtype=np.float64)
    if abs(w.sum() - 1.0) > 1e-9:
        raise InvalidArgumentError(f"batch weights sum to {w.sum()!r}, expected 1")
    xs = np.array([s.x for s in batch], dtype=np.float64).reshape(-1, 2)
    ys = np.array([s.y for s in batch], dtype=np.float64)

    values = evaluate_many(model, xs)
    betas = np.array([_beta(v, y, model.eps) for v, y in zip(values, ys)])
    model.last_M = None
    if not np.any(betas):
        return model

    wb = w * betas
    # RKHS norms through the kernel trick on the batch locations.
    numerator = float(np.sum(w * betas**2))
    denominator = float(wb @ gram(xs, xs, model.sigma2) @ wb)
    M = numerator / denominator if denominator >= _DEGENERATE_NORM else 1.0
    model.last_M = M
    step = model.mu_scale * M * wb

    for x, delta in zip(xs, step):
        if delta == 0.0:
            continue
        i = model.index_of(x)
        if i is None:
            if grow or model.size == 0:
                i = model.append_center(x)
            else:
                k = gram(x, model.centers, model.sigma2)[0]
                i = int(np.argmax(k))
                delta = delta * k[i]
        model.coeffs[i] += delta
    return model


def admit_to_dictionary(model: ApsmModel, x) -> bool:
    """
    Coherence test for a new center.

    ``x`` joins the dictionary (with a zero coefficient) when its largest
    kernel value against the existing centers is at most ``1 - alpha``.
    """
    if model.size > 0:
        coherence = float(np.max(gram(x, model.centers, model.sigma2)))
        if coherence > 1.0 - model.alpha:
            return False
    model.append_center(x)
    return True


def render_grid(model: ApsmModel, grid: PathLossGrid) -> PathLossGrid:
    """Evaluate the model at every pixel center (unit coordinates)."""
    values = evaluate_many(model, grid.unit_pixel_centers())
    return grid.with_values(values.reshape(grid.shape))


class ApsmLearner:
    """
    Streaming driver around an :class:`ApsmModel`.

    Every measurement is offered to the dictionary first. The batch of an
    iteration is made of the ``q`` most recently admitted measurements; a
    measurement the dictionary rejected still takes part through its own
    slab, replacing the oldest batch member.

    Projection weights are uniform unless a trajectory is given, in which
    case measurements near the trajectory are emphasized.
    """

    kind = "apsm"

    def __init__(self, model=None, trajectory=None, eps_w=0.01, **params):
        self.model = model if model is not None else ApsmModel(**params)
        self.trajectory = trajectory
        self.eps_w = eps_w
        self.recent = deque(maxlen=self.model.q)

    @property
    def dict_size(self) -> int:
        return self.model.size

    def _weights(self, xs):
        if self.trajectory is None:
            return np.full(len(xs), 1.0 / len(xs))
        from kernelmaps.sideinfo import side_info_weights

        return side_info_weights(xs, self.trajectory, self.eps_w)

    def update(self, x, y) -> bool:
        x = (float(x[0]), float(x[1]))
        admitted = admit_to_dictionary(self.model, x)
        if admitted:
            self.recent.append((x, float(y)))
            members = list(self.recent)
        else:
            keep = self.model.q - 1
            members = [(x, float(y))] + (list(self.recent)[-keep:] if keep else [])
        weights = self._weights([m[0] for m in members])
        batch = [HyperslabSample(m[0], m[1], wt) for m, wt in zip(members, weights)]
        apsm_update(self.model, batch, grow=False)
        return admitted

    def predict(self, xs) -> np.ndarray:
        return evaluate_many(self.model, xs)

    def to_dict(self) -> dict:
        return self.model.to_dict()
