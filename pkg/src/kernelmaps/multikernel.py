"""
Sparsity-aware multikernel online learner.

The estimate is ``f(x) = sum_m sum_i A[m, i] k_m(x_i, x)`` with one Gaussian
width per row of the coefficient matrix ``A`` and one dictionary center per
column. Each measurement triggers one proximal forward-backward step on

    1/2 d^2(A, S_n) + ^gamma psi1(A) + psi2(A)

where ``S_n`` is the matrix hyperslab of the measurement,
``psi1 = lambda1 sum_i w_i ||a_i||`` (column sparsity, smoothed by its Moreau
envelope of index ``gamma``) and ``psi2 = lambda2 sum_m nu_m ||xi_m||`` (row
sparsity, handled by its proximal map). The weights ``w`` and ``nu`` are
refreshed by iterative reweighting before every step.
"""

from dataclasses import dataclass, field

import numpy as np

from kernelmaps.errors import InvalidArgumentError, InvalidParameterError
from kernelmaps.grid import PathLossGrid
from kernelmaps.kernel import KernelParams, kernel_row, sq_dists


@dataclass(frozen=True)
class MatrixHyperslab:
    """``{A : |<A, K> - y| <= eps}`` for the kernel matrix ``K`` of one input."""

    K: np.ndarray
    y: float
    eps: float

    @property
    def sq_norm(self) -> float:
        return float(np.sum(self.K * self.K))


@dataclass
class MultiKernelModel:
    """Dictionary, coefficient matrix and tunables."""

    params: KernelParams = field(default_factory=KernelParams)
    eps_mk: float = 0.01
    lambda1: float = 0.1
    lambda2: float = 0.25
    gamma: float = 1.0
    eta: float = 0.5
    delta: float = 0.9995
    prune_tol: float = 1e-2
    eps1: float = 0.01
    centers: np.ndarray = field(default=None, repr=False)
    A: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if not isinstance(self.params, KernelParams):
            self.params = KernelParams(tuple(self.params))
        if self.eps_mk < 0:
            raise InvalidParameterError("eps_mk must be non-negative")
        # Zero regularization is accepted to expose the plain relaxed projection.
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InvalidParameterError("lambda1 and lambda2 must be non-negative")
        if not (self.gamma > 0 and self.eps1 > 0):
            raise InvalidParameterError("gamma and eps1 must be positive")
        if not 0 < self.eta < 2.0 / (1.0 + 1.0 / self.gamma):
            raise InvalidParameterError("eta must lie in (0, 2 / (1 + 1/gamma))")
        if not 0 < self.delta < 1:
            raise InvalidParameterError("delta must lie in (0, 1)")
        if self.prune_tol < 0:
            raise InvalidParameterError("prune_tol must be non-negative")
        M = self.params.M
        centers = np.zeros((0, 2)) if self.centers is None else self.centers
        self.centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
        A = np.zeros((M, len(self.centers))) if self.A is None else self.A
        self.A = np.asarray(A, dtype=np.float64).reshape(M, -1)
        if self.A.shape[1] != len(self.centers):
            raise InvalidArgumentError("A must have one column per dictionary center")

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    def settings(self) -> dict:
        return {
            "widths": list(self.params.widths),
            "eps_mk": self.eps_mk,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "gamma": self.gamma,
            "eta": self.eta,
            "delta": self.delta,
            "prune_tol": self.prune_tol,
            "eps1": self.eps1,
        }

    def copy(self) -> "MultiKernelModel":
        s = self.settings()
        s["params"] = KernelParams(tuple(s.pop("widths")))
        return MultiKernelModel(**s, centers=self.centers.copy(), A=self.A.copy())

    def to_dict(self) -> dict:
        return {
            "kind": "multikernel",
            "params": self.settings(),
            "centers": self.centers.tolist(),
            "A": self.A.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MultiKernelModel":
        s = dict(data["params"])
        s["params"] = KernelParams(tuple(s.pop("widths")))
        M = s["params"].M
        A = np.asarray(data["A"], dtype=np.float64).reshape(M, -1)
        return cls(**s, centers=data["centers"], A=A)


def mk_evaluate(model: MultiKernelModel, x) -> float:
    """``<A, K(x)>`` for a single point."""
    if model.size == 0:
        return 0.0
    return float(np.sum(model.A * kernel_row(x, model.centers, model.params)))


def mk_evaluate_many(model: MultiKernelModel, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64).reshape(-1, 2)
    out = np.zeros(len(xs))
    if model.size == 0:
        return out
    d2 = sq_dists(xs, model.centers)
    for sigma2, row in zip(model.params.widths, model.A):
        if np.any(row):
            out += np.exp(-d2 / (2.0 * sigma2)) @ row
    return out


def render_grid(model: MultiKernelModel, grid: PathLossGrid) -> PathLossGrid:
    values = mk_evaluate_many(model, grid.unit_pixel_centers())
    return grid.with_values(values.reshape(grid.shape))


def project_matrix_hyperslab(A, slab: MatrixHyperslab) -> np.ndarray:
    """Euclidean (Frobenius) projection of ``A`` onto a matrix hyperslab."""
    A = np.asarray(A, dtype=np.float64)
    nk = slab.sq_norm
    if nk <= 0:
        raise InvalidArgumentError("kernel matrix of the hyperslab is zero")
    r = float(np.sum(A * slab.K)) - slab.y
    if r > slab.eps:
        return A - ((r - slab.eps) / nk) * slab.K
    if r < -slab.eps:
        return A - ((r + slab.eps) / nk) * slab.K
    return A.copy()


def _block_shrink(norms, thresholds):
    # Scale factors max(0, 1 - t / ||v||); zero blocks stay zero.
    scale = np.zeros_like(norms)
    nz = norms > 0
    scale[nz] = np.maximum(0.0, 1.0 - thresholds[nz] / norms[nz])
    return scale


def prox_column_sparsity(A, gamma, lambda1, w) -> np.ndarray:
    """Proximal map of ``gamma * lambda1 * sum_i w_i ||a_i||`` (column soft-threshold)."""
    A = np.asarray(A, dtype=np.float64)
    t = gamma * lambda1 * np.broadcast_to(np.asarray(w, dtype=np.float64), (A.shape[1],))
    return A * _block_shrink(np.linalg.norm(A, axis=0), t)[None, :]


def prox_row_sparsity(A, eta, lambda2, nu) -> np.ndarray:
    """Proximal map of ``eta * lambda2 * sum_m nu_m ||xi_m||`` (row soft-threshold)."""
    A = np.asarray(A, dtype=np.float64)
    t = eta * lambda2 * np.broadcast_to(np.asarray(nu, dtype=np.float64), (A.shape[0],))
    return A * _block_shrink(np.linalg.norm(A, axis=1), t)[:, None]


def grad_smooth(A, slab: MatrixHyperslab, w, lambda1, gamma) -> np.ndarray:
    """
    Gradient of ``1/2 d^2(A, S) + ^gamma psi1(A)``.

    The distance term contributes ``A - P_S(A)``; the Moreau envelope of the
    weighted column-norm penalty contributes ``(A - prox_{gamma psi1}(A)) / gamma``.
    """
    A = np.asarray(A, dtype=np.float64)
    return (A - project_matrix_hyperslab(A, slab)) + (
        A - prox_column_sparsity(A, gamma, lambda1, w)
    ) / gamma


def smooth_value(A, slab: MatrixHyperslab, w, lambda1, gamma) -> float:
    """Value of ``1/2 d^2(A, S) + ^gamma psi1(A)``; the function ``grad_smooth`` differentiates."""
    A = np.asarray(A, dtype=np.float64)
    P = project_matrix_hyperslab(A, slab)
    p = prox_column_sparsity(A, gamma, lambda1, w)
    psi1 = lambda1 * float(np.sum(np.asarray(w) * np.linalg.norm(p, axis=0)))
    return 0.5 * float(np.sum((A - P) ** 2)) + psi1 + float(np.sum((A - p) ** 2)) / (2 * gamma)


def forward_backward(A, slab, w, nu, lambda1, lambda2, gamma, eta) -> np.ndarray:
    """``prox_{eta psi2}(A - eta * grad_smooth(A))`` for fixed slab and weights."""
    B = A - eta * grad_smooth(A, slab, w, lambda1, gamma)
    return prox_row_sparsity(B, eta, lambda2, nu)


def reweight(A, eps1):
    """
    Iterative-reweighting weights for columns and rows.

    Returns ``(w, nu)`` with ``w_i`` proportional to ``1 / (||a_i|| + eps1)``
    and ``nu_m`` proportional to ``1 / (||xi_m|| + eps1)``, each normalized to
    sum to one.
    """
    if not eps1 > 0:
        raise InvalidParameterError("eps1 must be positive")
    A = np.asarray(A, dtype=np.float64)
    w = 1.0 / (np.linalg.norm(A, axis=0) + eps1)
    nu = 1.0 / (np.linalg.norm(A, axis=1) + eps1)
    if w.size:
        w /= w.sum()
    if nu.size:
        nu /= nu.sum()
    return w, nu


def reweighted_objective(A, slab: MatrixHyperslab, lam, eps2) -> float:
    """Log-surrogate objective ``1/2 d^2(A, S) + lam * sum_i log(eps2 + ||a_i||)``."""
    if not eps2 > 0:
        raise InvalidParameterError("eps2 must be positive")
    A = np.asarray(A, dtype=np.float64)
    d = A - project_matrix_hyperslab(A, slab)
    return 0.5 * float(np.sum(d * d)) + lam * float(
        np.sum(np.log(eps2 + np.linalg.norm(A, axis=0)))
    )


def mm_reweighting(A, slab: MatrixHyperslab, lam, eps2, n_outer=20, n_inner=100):
    """
    Majorization-minimization on the log-surrogate at a fixed measurement.

    Each outer iteration linearizes the concave log term at the current
    column norms, giving the weighted column penalty
    ``lam * sum_i ||a_i|| / (||a_i^(l)|| + eps2)``, and decreases the
    resulting convex majorizer with ``n_inner`` proximal-gradient steps
    (unit step; the distance term has a 1-Lipschitz gradient) started at the
    current iterate.

    Returns the list of iterates, starting with ``A``.
    """
    A = np.asarray(A, dtype=np.float64).copy()
    iterates = [A.copy()]
    for _ in range(n_outer):
        c = lam / (np.linalg.norm(A, axis=0) + eps2)
        for _ in range(n_inner):
            B = project_matrix_hyperslab(A, slab)
            A = prox_column_sparsity(B, 1.0, 1.0, c)
        iterates.append(A.copy())
    return iterates


def admit_column(model: MultiKernelModel, x) -> bool:
    """
    Novelty test using the widest kernel.

    Adds ``x`` as a zero column when its largest kernel value against the
    dictionary is at most ``delta``.
    """
    x = np.asarray(x, dtype=np.float64).reshape(2)
    if model.size > 0:
        d2 = sq_dists(x, model.centers)[0]
        coherence = float(np.exp(-d2.min() / (2.0 * model.params.widths[-1])))
        if coherence > model.delta:
            return False
    model.centers = np.vstack([model.centers, x])
    model.A = np.hstack([model.A, np.zeros((model.params.M, 1))])
    return True


def prune(model: MultiKernelModel) -> int:
    """Drop columns whose norm is below ``prune_tol``; returns how many were dropped."""
    keep = np.linalg.norm(model.A, axis=0) >= model.prune_tol
    dropped = int(np.count_nonzero(~keep))
    if dropped:
        model.centers = model.centers[keep]
        model.A = model.A[:, keep]
    return dropped


def mk_update(model: MultiKernelModel, x, y) -> MultiKernelModel:
    """
    Process one measurement in place.

    Dictionary admission, kernel matrix of the (extended) dictionary, weight
    refresh, one forward-backward step, then pruning of near-zero columns.
    """
    admit_column(model, x)
    slab = MatrixHyperslab(kernel_row(x, model.centers, model.params), float(y), model.eps_mk)
    w, nu = reweight(model.A, model.eps1)
    model.A = forward_backward(
        model.A, slab, w, nu, model.lambda1, model.lambda2, model.gamma, model.eta
    )
    prune(model)
    return model


class MultiKernelLearner:
    """Streaming driver around a :class:`MultiKernelModel`."""

    kind = "multikernel"

    def __init__(self, model=None, **params):
        if model is None:
            widths = params.pop("widths", None)
            if widths is not None:
                params["params"] = KernelParams(tuple(widths))
            model = MultiKernelModel(**params)
        self.model = model

    @property
    def dict_size(self) -> int:
        return self.model.size

    def update(self, x, y):
        mk_update(self.model, x, y)

    def predict(self, xs) -> np.ndarray:
        return mk_evaluate_many(self.model, xs)

    def to_dict(self) -> dict:
        return self.model.to_dict()
