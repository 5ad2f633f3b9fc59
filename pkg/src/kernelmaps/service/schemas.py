"""Request and response bodies of the HTTP service."""

from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from kernelmaps.grid import PathLossGrid
from kernelmaps.scenario import Measurement, ScenarioConfig


class ScenarioConfigIn(BaseModel):
    model_config = ConfigDict(extra="forbid")

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

    def to_config(self) -> ScenarioConfig:
        return ScenarioConfig(**self.model_dump())


class LearnerSpecIn(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["apsm", "multikernel"]
    params: Dict[str, Any] = Field(default_factory=dict)
    name: Optional[str] = None
    side_info: bool = False


class MeasurementIO(BaseModel):
    t_s: float
    x_m: float
    y_m: float
    pathloss_db: float
    bs_id: int

    @classmethod
    def from_measurement(cls, m: Measurement) -> "MeasurementIO":
        return cls(t_s=m.t, x_m=m.x_reported[0], y_m=m.x_reported[1], pathloss_db=m.y, bs_id=m.bs_id)

    def to_measurement(self) -> Measurement:
        return Measurement((self.x_m, self.y_m), self.pathloss_db, self.t_s, self.bs_id)


class GridIO(BaseModel):
    X1: int
    X2: int
    pixel_m: float
    origin: List[float] = [0.0, 0.0]
    values: Optional[List[List[float]]] = None

    @classmethod
    def from_grid(cls, grid: PathLossGrid) -> "GridIO":
        return cls(**grid.meta(), values=grid.values.tolist())

    def to_grid(self) -> PathLossGrid:
        values = None if self.values is None else np.asarray(self.values, dtype=np.float64)
        return PathLossGrid(self.X1, self.X2, self.pixel_m, tuple(self.origin), values)


class SimulateRequest(BaseModel):
    scenario: ScenarioConfigIn = Field(default_factory=ScenarioConfigIn)
    uoi: int = 0


class SimulateResponse(BaseModel):
    measurements: List[MeasurementIO]
    truth: GridIO
    assignment: List[List[int]]
    route: List[List[int]]
    bs_positions: List[List[float]]


class FitRequest(BaseModel):
    measurements: List[MeasurementIO]
    grid: GridIO
    learner: LearnerSpecIn
    assignment: Optional[List[List[int]]] = None
    route: Optional[List[List[int]]] = None
    value_scaling: Literal["offset", "unit"] = "offset"


class FitResponse(BaseModel):
    checkpoint: Dict[str, Any]
    estimate: GridIO
    dict_size: int


class EvaluateRequest(BaseModel):
    truth: GridIO
    estimate: Optional[GridIO] = None
    checkpoint: Optional[Dict[str, Any]] = None
    route: Optional[List[List[int]]] = None
    learner: Optional[str] = None
    t_s: Optional[float] = None


class MetricsRow(BaseModel):
    t_s: float
    learner: str
    mse: float
    route_mse: Optional[float] = None
    dict_size: int


class ExperimentRequest(BaseModel):
    scenario: ScenarioConfigIn = Field(default_factory=ScenarioConfigIn)
    learners: List[LearnerSpecIn]
    checkpoints: Optional[List[float]] = None
    checkpoint_every: float = 250.0
    n_runs: int = Field(1, ge=1)
    value_scaling: Literal["offset", "unit"] = "offset"
    uoi: int = 0


class RunReportOut(BaseModel):
    seed: int
    config_hash: str
    n_measurements: int
    truth_norm: float
    route_len: int
    records: List[MetricsRow]


class SummaryRow(BaseModel):
    t_s: float
    learner: str
    mean: float
    sem: float
    lo: float
    hi: float
    n: int


class ExperimentResponse(BaseModel):
    reports: List[RunReportOut]
    summary: List[SummaryRow]


class SweepRequest(ExperimentRequest):
    grid: Dict[str, List[float]] = Field(default_factory=dict)


class SweepCell(BaseModel):
    assignment: Dict[str, float]
    reports: List[RunReportOut]
    summary: List[SummaryRow]


class SweepResponse(BaseModel):
    cells: List[SweepCell]


class TrajectoryIO(BaseModel):
    pixels: List[List[int]]
    pixel_m: float
    extent_m: float


class ModelCreate(BaseModel):
    learner: Optional[LearnerSpecIn] = None
    checkpoint: Optional[Dict[str, Any]] = None
    trajectory: Optional[TrajectoryIO] = None
    eps_w: float = 0.01


class ModelInfo(BaseModel):
    model_id: str
    kind: str
    dict_size: int
    n_updates: int


class Sample(BaseModel):
    x: List[float] = Field(min_length=2, max_length=2)
    y: float


class UpdateRequest(BaseModel):
    samples: List[Sample]


class PredictRequest(BaseModel):
    points: List[List[float]]


class PredictResponse(BaseModel):
    values: List[float]
