"""
Experiment harness: metrics, seeded runs, repeated runs and factorial sweeps.

Each base station owns one learner per configured algorithm and only sees
the measurements of the users it serves. At a checkpoint the per-station
estimates are rendered over the pixels each station serves and stitched into
one map, which is compared to the ground truth.
"""

import csv
import hashlib
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy.spatial import cKDTree

from kernelmaps.apsm import ApsmLearner, ApsmModel
from kernelmaps.errors import InvalidArgumentError, InvalidParameterError
from kernelmaps.grid import PathLossGrid
from kernelmaps.multikernel import MultiKernelLearner, MultiKernelModel
from kernelmaps.scenario import ScenarioConfig, ValueScaler, simulate
from kernelmaps.sideinfo import Trajectory

METRICS_HEADER = ["t_s", "learner", "mse", "route_mse", "dict_size"]

# Low/high levels of the default 2^k factorial designs.
FACTORIAL_APSM = {
    "eps": (1e-4, 0.9),
    "mu_scale": (0.1, 1.99),
    "alpha": (1e-3, 0.9),
    "sigma2": (1e-4, 1.0),
}
FACTORIAL_MK = {
    "eps_mk": (1e-4, 0.9),
    "eta": (0.01, 1.99),
    "delta": (0.5, 0.99999),
}

_APSM_FIELDS = {"sigma2", "eps", "q", "alpha", "mu_scale"}
_MK_FIELDS = {"widths", "eps_mk", "lambda1", "lambda2", "gamma", "eta", "delta", "prune_tol", "eps1"}
LEARNER_FIELDS = {"apsm": _APSM_FIELDS, "multikernel": _MK_FIELDS}


def _values(H):
    return H.values if isinstance(H, PathLossGrid) else np.asarray(H, dtype=np.float64)


def normalized_mse(H, H_est) -> float:
    """``||H - H_est||_F^2 / ||H||_F^2`` for one realization."""
    a, b = _values(H), _values(H_est)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch {a.shape} vs {b.shape}")
    if isinstance(H, PathLossGrid) and isinstance(H_est, PathLossGrid) and not H.same_geometry(H_est):
        raise InvalidArgumentError("grids differ in geometry")
    norm = float(np.sum(a * a))
    if norm == 0:
        raise InvalidArgumentError("reference map is zero")
    return float(np.sum((a - b) ** 2)) / norm


def route_mse(H, H_est, traj) -> float:
    """Normalized MSE restricted to the (distinct) pixels of a route."""
    pixels = traj.pixels if isinstance(traj, Trajectory) else np.asarray(traj, dtype=int).reshape(-1, 2)
    if len(pixels) == 0:
        raise InvalidArgumentError("empty trajectory")
    pixels = np.unique(pixels, axis=0)
    a, b = _values(H), _values(H_est)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"shape mismatch {a.shape} vs {b.shape}")
    return normalized_mse(a[pixels[:, 0], pixels[:, 1]], b[pixels[:, 0], pixels[:, 1]])


@dataclass
class LearnerSpec:
    """Which algorithm to run, under what label, with which overrides."""

    kind: str
    params: dict = field(default_factory=dict)
    name: str = None
    side_info: bool = False

    def __post_init__(self):
        if self.kind not in LEARNER_FIELDS:
            raise InvalidParameterError(f"unknown learner kind {self.kind!r}")
        unknown = set(self.params) - LEARNER_FIELDS[self.kind]
        if unknown:
            raise InvalidParameterError(f"unknown {self.kind} parameters: {sorted(unknown)}")
        if self.side_info and self.kind != "apsm":
            raise InvalidParameterError("side information weights apply to apsm only")
        if self.name is None:
            self.name = self.kind + ("+si" if self.side_info else "")

    def build(self, trajectory=None):
        if self.kind == "apsm":
            return ApsmLearner(trajectory=trajectory if self.side_info else None, **self.params)
        return MultiKernelLearner(**dict(self.params))

    def validate(self):
        """Construct a throwaway learner so invalid values fail early."""
        self.build(trajectory=None)


@dataclass(frozen=True)
class Checkpoint:
    t: float
    learner: str
    mse: float
    route_mse: float
    dict_size: int


@dataclass
class RunReport:
    """Metrics of one seeded run, one record per checkpoint and learner."""

    seed: int
    config_hash: str
    records: list = field(default_factory=list)
    n_measurements: int = 0
    truth_norm: float = 0.0
    route_len: int = 0

    def learners(self) -> list:
        seen = []
        for r in self.records:
            if r.learner not in seen:
                seen.append(r.learner)
        return seen

    def series(self, learner, metric="mse") -> np.ndarray:
        return np.array([getattr(r, metric) for r in self.records if r.learner == learner])

    def times(self, learner) -> np.ndarray:
        return np.array([r.t for r in self.records if r.learner == learner])

    def rows(self) -> list:
        return [[repr(r.t), r.learner, repr(r.mse), repr(r.route_mse), r.dict_size] for r in self.records]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(METRICS_HEADER)
            writer.writerows(self.rows())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["records"] = [asdict(r) for r in self.records]
        return d


def config_hash(cfg: ScenarioConfig, learners=(), extra=None) -> str:
    payload = {
        "scenario": cfg.to_dict(),
        "learners": [asdict(s) for s in learners],
        "extra": extra or {},
    }
    blob = json.dumps(payload, sort_keys=True, default=list).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def checkpoint_times(duration_s, every_s=250.0) -> list:
    if every_s <= 0:
        raise InvalidParameterError("checkpoint interval must be positive")
    times = list(np.arange(0.0, duration_s, every_s))
    if not times or times[-1] < duration_s:
        times.append(float(duration_s))
    return [float(t) for t in times]


def route_of(scenario, user=0):
    """Distinct pixels visited by one user, as the route of interest."""
    if not scenario.traces:
        return None
    pixels = np.unique(scenario.traces[user].pixels, axis=0)
    return Trajectory.on_grid(pixels, scenario.truth)


def make_scaler(measurements, value_scaling="offset") -> ValueScaler:
    ys = [m.y for m in measurements]
    if value_scaling == "offset":
        return ValueScaler.fit(ys, unit=False)
    if value_scaling == "unit":
        return ValueScaler.fit(ys, unit=True)
    raise InvalidParameterError(f"unknown value scaling {value_scaling!r}")


class StationEnsemble:
    """
    One learner per base station plus the value scaling they share.

    ``assignment`` maps every pixel to the station whose estimate is used
    there.
    """

    def __init__(self, spec: LearnerSpec, grid: PathLossGrid, assignment, scaler: ValueScaler,
                 trajectory=None):
        self.spec = spec
        self.grid = grid
        self.assignment = np.asarray(assignment, dtype=int)
        self.scaler = scaler
        self.trajectory = trajectory
        self.learners = {}
        self.last_t = 0.0

    def learner(self, bs_id):
        if bs_id not in self.learners:
            self.learners[bs_id] = self.spec.build(self.trajectory)
        return self.learners[bs_id]

    def update(self, m):
        x = self.grid.to_unit(m.x_reported)
        self.learner(int(m.bs_id)).update(x, float(self.scaler.forward(m.y)))
        self.last_t = m.t

    @property
    def dict_size(self) -> int:
        return sum(learner.dict_size for learner in self.learners.values())

    def render(self) -> PathLossGrid:
        centers = self.grid.unit_pixel_centers()
        flat = self.assignment.ravel()
        est = np.zeros(flat.size)
        for bs in np.unique(flat):
            idx = flat == bs
            learner = self.learners.get(int(bs))
            if learner is not None:
                est[idx] = learner.predict(centers[idx])
        return self.grid.with_values(self.scaler.inverse(est).reshape(self.grid.shape))

    def to_dict(self) -> dict:
        return {
            "learner": asdict(self.spec),
            "scaler": {"lo": self.scaler.lo, "span": self.scaler.span},
            "grid": self.grid.meta(),
            "assignment": self.assignment.tolist(),
            "t_s": self.last_t,
            "models": {str(bs): lrn.to_dict() for bs, lrn in sorted(self.learners.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StationEnsemble":
        spec = LearnerSpec(**data["learner"])
        g = data["grid"]
        grid = PathLossGrid(g["X1"], g["X2"], g["pixel_m"], tuple(g["origin"]))
        scaler = ValueScaler(data["scaler"]["lo"], data["scaler"]["span"])
        ens = cls(spec, grid, np.asarray(data["assignment"], dtype=int), scaler)
        ens.last_t = float(data.get("t_s", 0.0))
        for bs, model in data["models"].items():
            if model["kind"] == "apsm":
                lrn = ApsmLearner(model=ApsmModel.from_dict(model))
            else:
                lrn = MultiKernelLearner(model=MultiKernelModel.from_dict(model))
            ens.learners[int(bs)] = lrn
        return ens


def nearest_assignment(grid: PathLossGrid, measurements) -> np.ndarray:
    """Serving station per pixel guessed from the nearest measurement."""
    if not measurements:
        return np.zeros(grid.shape, dtype=int)
    pts = np.array([m.x_reported for m in measurements])
    bs = np.array([m.bs_id for m in measurements], dtype=int)
    _, idx = cKDTree(pts).query(grid.pixel_centers())
    return bs[idx].reshape(grid.shape)


def fit_measurements(measurements, grid: PathLossGrid, spec: LearnerSpec, assignment=None,
                     trajectory=None, value_scaling="offset") -> StationEnsemble:
    """Stream a measurement list through per-station learners."""
    if assignment is None:
        assignment = nearest_assignment(grid, measurements)
    ens = StationEnsemble(spec, grid, assignment, make_scaler(measurements, value_scaling), trajectory)
    for m in measurements:
        ens.update(m)
    return ens


def run_experiment(cfg: ScenarioConfig, learners, checkpoints=None, checkpoint_every=250.0,
                   value_scaling="offset", uoi=0) -> RunReport:
    """
    Simulate one seeded scenario and track every learner over time.

    Parameters
    ----------
    cfg : ScenarioConfig
    learners : sequence of LearnerSpec
    checkpoints : sequence of float, optional
        Simulated times (s) at which metrics are recorded; by default every
        ``checkpoint_every`` seconds from 0 plus the end of the run. A
        checkpoint at ``t`` reflects all measurements with timestamp ``<= t``.
    value_scaling : {"offset", "unit"}
        Units the learners see: dB above the minimum of the first 50
        measurements, or the min/max of those mapped onto ``[0, 1]``.
    uoi : int
        User whose route defines the route-restricted MSE and, for learners
        with ``side_info``, the projection weights.
    """
    learners = list(learners)
    for spec in learners:
        spec.validate()
    scenario = simulate(cfg)
    truth = scenario.truth
    route = route_of(scenario, uoi) if cfg.n_users > 0 else None
    report = RunReport(
        seed=cfg.rng_seed,
        config_hash=config_hash(cfg, learners, {"scaling": value_scaling, "uoi": uoi}),
        n_measurements=len(scenario.measurements),
        truth_norm=float(np.linalg.norm(truth.values)),
        route_len=0 if route is None else len(route),
    )
    if not learners:
        return report
    if checkpoints is None:
        checkpoints = checkpoint_times(cfg.duration_s, checkpoint_every)
    checkpoints = sorted(float(t) for t in checkpoints)

    scaler = make_scaler(scenario.measurements, value_scaling)
    ensembles = [StationEnsemble(s, truth, scenario.assignment, scaler, route) for s in learners]

    def record(t):
        for ens in ensembles:
            est = ens.render()
            report.records.append(Checkpoint(
                t=t,
                learner=ens.spec.name,
                mse=normalized_mse(truth, est),
                route_mse=route_mse(truth, est, route) if route is not None else float("nan"),
                dict_size=ens.dict_size,
            ))

    pending = iter(checkpoints)
    next_t = next(pending, None)
    for m in scenario.measurements:
        while next_t is not None and m.t > next_t:
            record(next_t)
            next_t = next(pending, None)
        for ens in ensembles:
            ens.update(m)
    while next_t is not None:
        record(next_t)
        next_t = next(pending, None)
    return report


def _run_seed(args):
    cfg, learners, kwargs = args
    return run_experiment(cfg, learners, **kwargs)


def run_many(cfg: ScenarioConfig, learners, n_runs=10, workers=1, **kwargs) -> list:
    """Independent runs with seeds ``rng_seed, rng_seed + 1, ...``."""
    jobs = [(replace(cfg, rng_seed=cfg.rng_seed + k), list(learners), kwargs) for k in range(n_runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_seed, jobs))
    return [_run_seed(job) for job in jobs]


def summarize(reports, metric="mse") -> list:
    """
    Mean and two-standard-error band per (checkpoint, learner).

    Returns dict rows with keys ``t_s, learner, mean, sem, lo, hi, n``.
    """
    groups = {}
    for rep in reports:
        for r in rep.records:
            groups.setdefault((r.t, r.learner), []).append(getattr(r, metric))
    rows = []
    for (t, learner), vals in groups.items():
        v = np.asarray(vals, dtype=np.float64)
        sem = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
        mean = float(v.mean())
        rows.append({"t_s": t, "learner": learner, "mean": mean, "sem": sem,
                     "lo": mean - 2 * sem, "hi": mean + 2 * sem, "n": int(v.size)})
    return rows


def write_summary_csv(rows, path, extra_columns=None):
    extra_columns = extra_columns or {}
    header = list(extra_columns) + ["t_s", "learner", "mean", "sem", "lo", "hi", "n"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(list(extra_columns.values()) + [row[k] for k in header[len(extra_columns):]])


def _apply(cfg, learners, assignment):
    scenario_names = {f.name for f in fields(ScenarioConfig)}
    cfg_over, learner_over = {}, {}
    for key, value in assignment.items():
        if key in scenario_names:
            cfg_over[key] = value
        else:
            learner_over[key] = value
    specs = []
    for spec in learners:
        params = dict(spec.params)
        for key, value in learner_over.items():
            kind, _, name = key.rpartition(".")
            if kind and kind not in (spec.kind, spec.name):
                continue
            if name in LEARNER_FIELDS[spec.kind]:
                params[name] = value
        specs.append(replace(spec, params=params))
    for key in learner_over:
        kind, _, name = key.rpartition(".")
        if not any(name in LEARNER_FIELDS[s.kind] and (not kind or kind in (s.kind, s.name))
                   for s in learners):
            raise InvalidParameterError(f"sweep parameter {key!r} matches no learner")
    return ScenarioConfig(**{**cfg.to_dict(), **cfg_over}), specs


def sweep_cells(cfg, learners, grid):
    """Cartesian product of a parameter grid, validated before anything runs."""
    grid = dict(grid or {})
    names = list(grid)
    cells = []
    for combo in itertools.product(*(list(grid[n]) for n in names)):
        assignment = dict(zip(names, combo))
        cell_cfg, specs = _apply(cfg, learners, assignment)
        for spec in specs:
            spec.validate()
        cells.append((assignment, cell_cfg, specs))
    return cells


def sweep(cfg: ScenarioConfig, learners, grid, n_runs=1, workers=1, **kwargs) -> list:
    """
    One batch of runs per cell of a factorial design.

    ``grid`` maps parameter names to level lists. Names are scenario fields,
    learner fields (applied to every learner having them) or
    ``"<kind or label>.<field>"``. Returns ``(assignment, reports)`` pairs.
    """
    out = []
    for assignment, cell_cfg, specs in sweep_cells(cfg, learners, grid):
        reports = run_many(cell_cfg, specs, n_runs=n_runs, workers=workers, **kwargs)
        out.append((assignment, reports))
    return out


def write_sweep_csv(results, path):
    names = []
    for assignment, _ in results:
        for k in assignment:
            if k not in names:
                names.append(k)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cell"] + names + ["seed"] + METRICS_HEADER)
        for cell, (assignment, reports) in enumerate(results):
            levels = [assignment.get(n, "") for n in names]
            for rep in reports:
                for row in rep.rows():
                    writer.writerow([cell] + levels + [rep.seed] + row)
