"""
Synthetic coverage scenarios and measurement traces.

A scenario is a square playground cut into pixels, a handful of base
stations with log-distance path-loss plus spatially correlated shadowing,
users walking shortest routes on a lattice street grid, and per-user Poisson
measurement reports sent to the strongest-server base station.
"""

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import networkx as nx
import numpy as np
from scipy.signal import fftconvolve

from kernelmaps.errors import InvalidParameterError, TraceFormatError
from kernelmaps.grid import PathLossGrid

CSV_HEADER = ["t_s", "x_m", "y_m", "pathloss_db", "bs_id"]


@dataclass
class ScenarioConfig:
    """
    Tunables of a synthetic scenario.

    ``arrival_rate`` is measurements per user per second. ``loc_err_max`` is
    a fraction of the playground side and ``meas_err_max`` a fraction of the
    mean path-loss; both bound uniform errors.
    """

    n_users: int = 20
    duration_s: float = 2000.0
    n_bs: int = 3
    playground_m: float = 1500.0
    pixel_m: float = 50.0
    arrival_rate: float = 0.1
    loc_err_max: float = 0.0
    meas_err_max: float = 0.0
    rng_seed: int = 0
    pl_ref_db: float = 40.0
    pl_exponent: float = 3.5
    pl_d0_m: float = 10.0
    shadow_var_db2: float = 9.0
    shadow_corr_m: float = 150.0
    street_spacing: int = 3
    speed_mps: float = 10.0

    def __post_init__(self):
        for name in ("n_users", "n_bs", "street_spacing", "rng_seed"):
            value = getattr(self, name)
            if int(value) != value:
                raise InvalidParameterError(f"{name} must be an integer")
            setattr(self, name, int(value))
        positive = (
            "n_bs", "playground_m", "pixel_m", "arrival_rate",
            "pl_d0_m", "shadow_corr_m", "street_spacing", "speed_mps",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        for name in ("n_users", "duration_s", "loc_err_max", "meas_err_max", "shadow_var_db2"):
            if not getattr(self, name) >= 0:
                raise InvalidParameterError(f"{name} must be non-negative")
        if self.pixel_m > self.playground_m:
            raise InvalidParameterError("pixel_m exceeds the playground")

    @property
    def n_pixels(self) -> int:
        return max(1, int(round(self.playground_m / self.pixel_m)))

    def grid(self) -> PathLossGrid:
        return PathLossGrid(self.n_pixels, self.n_pixels, self.pixel_m)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidParameterError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class Measurement:
    """One report: reported location (m), path-loss (dB), time (s), serving cell."""

    x_reported: tuple
    y: float
    t: float
    bs_id: int
    x_true: tuple = field(default=None, compare=False)


@dataclass
class Trace:
    """Pixel positions of one user, one entry per hop of ``hop_s`` seconds."""

    pixels: np.ndarray
    hop_s: float

    def at(self, t: float) -> np.ndarray:
        k = min(int(t // self.hop_s), len(self.pixels) - 1)
        return self.pixels[k]


@dataclass
class Scenario:
    cfg: ScenarioConfig
    grids: list
    bs_positions: np.ndarray
    assignment: np.ndarray
    truth: PathLossGrid
    traces: list
    measurements: list


def _streams(seed):
    field_ss, bs_ss, mob_ss, meas_ss = np.random.SeedSequence(seed).spawn(4)
    return (
        np.random.default_rng(field_ss),
        np.random.default_rng(bs_ss),
        np.random.default_rng(mob_ss),
        np.random.default_rng(meas_ss),
    )


def shadowing(shape, pixel_m, var_db2, corr_m, rng) -> np.ndarray:
    """
    Zero-mean Gaussian field with correlation ``exp(-d^2 / (2 corr_m^2))``.

    White noise is convolved with a Gaussian filter of standard deviation
    ``corr_m / sqrt(2)``, then scaled by the filter energy so that the
    pointwise variance equals ``var_db2``.
    """
    if var_db2 == 0:
        return np.zeros(shape)
    s = corr_m / (math.sqrt(2.0) * pixel_m)
    half = max(1, int(math.ceil(4 * s)))
    ax = np.arange(-half, half + 1)
    g = np.exp(-(ax**2) / (2 * s * s))
    kern = np.outer(g, g)
    noise = rng.standard_normal((shape[0] + 2 * half, shape[1] + 2 * half))
    smooth = fftconvolve(noise, kern, mode="valid")
    return smooth * math.sqrt(var_db2 / np.sum(kern * kern))


def log_distance(grid: PathLossGrid, bs_xy, cfg: ScenarioConfig) -> np.ndarray:
    d = np.linalg.norm(grid.pixel_centers() - np.asarray(bs_xy), axis=1)
    d = np.maximum(d, cfg.pl_d0_m)
    pl = cfg.pl_ref_db + 10.0 * cfg.pl_exponent * np.log10(d / cfg.pl_d0_m)
    return pl.reshape(grid.shape)


def synth_field(cfg: ScenarioConfig, bs_positions=None):
    """
    Per-base-station path-loss grids.

    Returns ``(grids, bs_positions)``; positions are drawn uniformly over
    the playground unless given. Deterministic for a fixed ``rng_seed``.
    """
    field_rng, bs_rng, _, _ = _streams(cfg.rng_seed)
    base = cfg.grid()
    if bs_positions is None:
        bs_positions = bs_rng.uniform(0.0, base.extent_m, size=(cfg.n_bs, 2))
    bs_positions = np.asarray(bs_positions, dtype=np.float64).reshape(-1, 2)
    grids = []
    for pos in bs_positions:
        values = log_distance(base, pos, cfg) + shadowing(
            base.shape, cfg.pixel_m, cfg.shadow_var_db2, cfg.shadow_corr_m, field_rng
        )
        grids.append(base.with_values(values))
    return grids, bs_positions


def strongest_server(grids) -> np.ndarray:
    """Index of the base station with the lowest path-loss per pixel (ties: lowest index)."""
    if not grids:
        raise InvalidParameterError("at least one base station grid is required")
    return np.argmin(np.stack([g.values for g in grids]), axis=0)


def stitch(grids, assignment) -> PathLossGrid:
    """Map made of each pixel's value for its assigned base station."""
    stack = np.stack([g.values for g in grids])
    values = np.take_along_axis(stack, assignment[None, :, :], axis=0)[0]
    return grids[0].with_values(values)


def street_graph(n1: int, n2: int, spacing: int) -> nx.Graph:
    """4-connected graph over pixels lying on every ``spacing``-th row or column."""
    g = nx.grid_2d_graph(n1, n2)
    on_street = [p for p in g.nodes if p[0] % spacing == 0 or p[1] % spacing == 0]
    return g.subgraph(on_street).copy()


def street_path(graph: nx.Graph, start, end) -> list:
    """Shortest pixel route between two street nodes (start included)."""
    return nx.shortest_path(graph, tuple(start), tuple(end))


def mobility_trace(cfg: ScenarioConfig, rng=None) -> list:
    """
    One :class:`Trace` per user covering ``[0, duration_s]``.

    Users start at a random street pixel and walk shortest routes to fresh
    uniformly drawn street pixels at ``speed_mps``, one pixel per hop.
    """
    if rng is None:
        rng = _streams(cfg.rng_seed)[2]
    n = cfg.n_pixels
    graph = street_graph(n, n, cfg.street_spacing)
    nodes = sorted(graph.nodes)
    hop_s = cfg.pixel_m / cfg.speed_mps
    n_hops = int(math.ceil(cfg.duration_s / hop_s))
    traces = []
    for _ in range(cfg.n_users):
        current = nodes[rng.integers(len(nodes))]
        route = [current]
        while len(route) <= n_hops:
            if len(nodes) == 1:
                route.append(current)
                continue
            end = current
            while end == current:
                end = nodes[rng.integers(len(nodes))]
            route.extend(street_path(graph, current, end)[1:])
            current = end
        traces.append(Trace(np.array(route[: n_hops + 1], dtype=int), hop_s))
    return traces


def measurement_stream(cfg: ScenarioConfig, grids, assignment, traces, rng=None) -> list:
    """
    Time-ordered noisy reports of all users.

    Each user reports at the epochs of a Poisson process of rate
    ``arrival_rate``. The path-loss of the serving station at the true pixel
    is perturbed by ``U[-e, e]`` with ``e = meas_err_max * mean path-loss``,
    and each coordinate of the pixel center by ``U[-d, d]`` with
    ``d = loc_err_max * playground_m``.
    """
    if rng is None:
        rng = _streams(cfg.rng_seed)[3]
    base = grids[0]
    truth = stitch(grids, assignment)
    e = cfg.meas_err_max * float(np.mean(truth.values))
    d = cfg.loc_err_max * cfg.playground_m
    records = []
    for user, trace in enumerate(traces):
        t = rng.exponential(1.0 / cfg.arrival_rate)
        while t < cfg.duration_s:
            p = trace.at(t)
            bs = int(assignment[p[0], p[1]])
            x_true = base.pixel_to_world(p)
            y = grids[bs].values[p[0], p[1]] + rng.uniform(-e, e)
            x_rep = x_true + rng.uniform(-d, d, size=2)
            records.append(
                (t, user, Measurement(tuple(x_rep.tolist()), float(y), float(t), bs, tuple(x_true.tolist())))
            )
            t += rng.exponential(1.0 / cfg.arrival_rate)
    records.sort(key=lambda r: (r[0], r[1]))
    return [r[2] for r in records]


def simulate(cfg: ScenarioConfig) -> Scenario:
    """Field, assignment, traces and measurement stream for one seeded run."""
    _, _, mob_rng, meas_rng = _streams(cfg.rng_seed)
    grids, bs_positions = synth_field(cfg)
    assignment = strongest_server(grids)
    traces = mobility_trace(cfg, mob_rng)
    measurements = measurement_stream(cfg, grids, assignment, traces, meas_rng)
    return Scenario(
        cfg, grids, bs_positions, assignment, stitch(grids, assignment), traces, measurements
    )


def write_csv(measurements, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for m in measurements:
            writer.writerow(
                [repr(float(m.t)), repr(float(m.x_reported[0])), repr(float(m.x_reported[1])),
                 repr(float(m.y)), int(m.bs_id)]
            )


def load_csv(path) -> list:
    """
    Read a measurement CSV (``t_s,x_m,y_m,pathloss_db,bs_id``).

    Rows are returned sorted by timestamp. Malformed or non-finite rows raise
    :class:`TraceFormatError` naming the offending line.
    """
    out = []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise TraceFormatError(f"expected header {','.join(CSV_HEADER)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise TraceFormatError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", line=lineno)
            try:
                t, x, y, pl = (float(v) for v in row[:4])
                bs = int(row[4])
            except ValueError as exc:
                raise TraceFormatError(str(exc), line=lineno) from None
            if not all(math.isfinite(v) for v in (t, x, y, pl)):
                raise TraceFormatError("non-finite value", line=lineno)
            out.append(Measurement((x, y), pl, t, bs))
    out.sort(key=lambda m: m.t)
    return out


@dataclass(frozen=True)
class ValueScaler:
    """
    Affine map ``(y - lo) / span`` between path-loss (dB) and learner units.

    Fitted on the first measurements of a stream: ``lo`` is their minimum and
    ``span`` either 1 (dB above the minimum) or their range (unit interval).
    """

    lo: float
    span: float = 1.0

    @classmethod
    def fit(cls, values, n_first=50, unit=False) -> "ValueScaler":
        head = np.asarray(values[:n_first], dtype=np.float64)
        if head.size == 0:
            return cls(0.0, 1.0)
        lo = float(head.min())
        span = float(head.max()) - lo if unit else 1.0
        return cls(lo, span if span > 0 else 1.0)

    def forward(self, y):
        return (np.asarray(y, dtype=np.float64) - self.lo) / self.span

    def inverse(self, u):
        return self.lo + np.asarray(u, dtype=np.float64) * self.span
