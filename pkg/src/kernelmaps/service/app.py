"""
HTTP front end.

Batch endpoints wrap the simulation and evaluation harness; the ``/models``
endpoints host long-lived online learners (typically one per base station)
that several clients can feed and query. Each hosted learner has its own
lock, so updates to one learner are applied one at a time while distinct
learners proceed independently.
"""

import threading
import uuid

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

import kernelmaps
from kernelmaps import evaluation as ev
from kernelmaps.apsm import ApsmLearner, ApsmModel
from kernelmaps.errors import InvalidArgumentError, InvalidParameterError, TraceFormatError
from kernelmaps.multikernel import MultiKernelLearner, MultiKernelModel
from kernelmaps.scenario import simulate
from kernelmaps.service import schemas as s
from kernelmaps.sideinfo import Trajectory

app = FastAPI(title="kernelmaps", version=kernelmaps.__version__)


@app.exception_handler(InvalidParameterError)
@app.exception_handler(InvalidArgumentError)
@app.exception_handler(TraceFormatError)
async def _invalid(request: Request, exc: Exception):
    return JSONResponse(status_code=422, content={"detail": str(exc)})


def _spec(body: s.LearnerSpecIn) -> ev.LearnerSpec:
    return ev.LearnerSpec(**body.model_dump())


def _report(rep: ev.RunReport) -> s.RunReportOut:
    rows = []
    for r in rep.records:
        route = None if np.isnan(r.route_mse) else r.route_mse
        rows.append(s.MetricsRow(t_s=r.t, learner=r.learner, mse=r.mse, route_mse=route,
                                 dict_size=r.dict_size))
    return s.RunReportOut(seed=rep.seed, config_hash=rep.config_hash, n_measurements=rep.n_measurements,
                          truth_norm=rep.truth_norm, route_len=rep.route_len, records=rows)


def _route(pixels, grid):
    if not pixels:
        return None
    return Trajectory.on_grid(np.asarray(pixels, dtype=int), grid)


@app.get("/health")
def health():
    return {"status": "ok", "version": kernelmaps.__version__}


@app.post("/simulate", response_model=s.SimulateResponse)
def simulate_scenario(body: s.SimulateRequest):
    cfg = body.scenario.to_config()
    sc = simulate(cfg)
    route = ev.route_of(sc, body.uoi) if cfg.n_users > 0 else None
    return s.SimulateResponse(
        measurements=[s.MeasurementIO.from_measurement(m) for m in sc.measurements],
        truth=s.GridIO.from_grid(sc.truth),
        assignment=sc.assignment.tolist(),
        route=[] if route is None else route.pixels.tolist(),
        bs_positions=sc.bs_positions.tolist(),
    )


@app.post("/fit", response_model=s.FitResponse)
def fit(body: s.FitRequest):
    grid = body.grid.to_grid()
    measurements = sorted((m.to_measurement() for m in body.measurements), key=lambda m: m.t)
    assignment = None if body.assignment is None else np.asarray(body.assignment, dtype=int)
    if assignment is not None and assignment.shape != grid.shape:
        raise InvalidArgumentError("assignment does not match the grid")
    ens = ev.fit_measurements(measurements, grid, _spec(body.learner), assignment,
                              _route(body.route, grid), body.value_scaling)
    return s.FitResponse(checkpoint=ens.to_dict(), estimate=s.GridIO.from_grid(ens.render()),
                         dict_size=ens.dict_size)


@app.post("/evaluate", response_model=list[s.MetricsRow])
def evaluate(body: s.EvaluateRequest):
    truth = body.truth.to_grid()
    if body.checkpoint is not None:
        ens = ev.StationEnsemble.from_dict(body.checkpoint)
        estimate, label = ens.render(), ens.spec.name
        t_s, size = ens.last_t, ens.dict_size
    elif body.estimate is not None:
        estimate, label, t_s, size = body.estimate.to_grid(), "estimate", 0.0, 0
    else:
        raise InvalidArgumentError("either an estimate grid or a model checkpoint is required")
    route = _route(body.route, truth)
    return [s.MetricsRow(
        t_s=body.t_s if body.t_s is not None else t_s,
        learner=body.learner or label,
        mse=ev.normalized_mse(truth, estimate),
        route_mse=None if route is None else ev.route_mse(truth, estimate, route),
        dict_size=size,
    )]


def _summary(reports):
    return [s.SummaryRow(**row) for row in ev.summarize(reports)]


@app.post("/experiments", response_model=s.ExperimentResponse)
def experiment(body: s.ExperimentRequest):
    reports = ev.run_many(
        body.scenario.to_config(), [_spec(l) for l in body.learners], n_runs=body.n_runs,
        checkpoints=body.checkpoints, checkpoint_every=body.checkpoint_every,
        value_scaling=body.value_scaling, uoi=body.uoi,
    )
    return s.ExperimentResponse(reports=[_report(r) for r in reports], summary=_summary(reports))


@app.post("/sweeps", response_model=s.SweepResponse)
def sweep(body: s.SweepRequest):
    results = ev.sweep(
        body.scenario.to_config(), [_spec(l) for l in body.learners], body.grid, n_runs=body.n_runs,
        checkpoints=body.checkpoints, checkpoint_every=body.checkpoint_every,
        value_scaling=body.value_scaling, uoi=body.uoi,
    )
    return s.SweepResponse(cells=[
        s.SweepCell(assignment=a, reports=[_report(r) for r in reps], summary=_summary(reps))
        for a, reps in results
    ])


class _Hosted:
    def __init__(self, learner):
        self.learner = learner
        self.lock = threading.Lock()
        self.n_updates = 0


_models: dict = {}
_registry_lock = threading.Lock()


def _hosted(model_id) -> _Hosted:
    with _registry_lock:
        hosted = _models.get(model_id)
    if hosted is None:
        raise HTTPException(status_code=404, detail=f"no model {model_id!r}")
    return hosted


def _info(model_id, hosted) -> s.ModelInfo:
    return s.ModelInfo(model_id=model_id, kind=hosted.learner.kind,
                       dict_size=hosted.learner.dict_size, n_updates=hosted.n_updates)


def _learner_from(body: s.ModelCreate):
    traj = None
    if body.trajectory is not None:
        t = body.trajectory
        traj = Trajectory(np.asarray(t.pixels, dtype=int), t.pixel_m, t.extent_m)
    if body.checkpoint is not None:
        kind = body.checkpoint.get("kind")
        if kind == "apsm":
            return ApsmLearner(model=ApsmModel.from_dict(body.checkpoint), trajectory=traj, eps_w=body.eps_w)
        if kind == "multikernel":
            return MultiKernelLearner(model=MultiKernelModel.from_dict(body.checkpoint))
        raise InvalidArgumentError(f"unknown checkpoint kind {kind!r}")
    if body.learner is None:
        raise InvalidArgumentError("either a learner spec or a checkpoint is required")
    if body.learner.kind == "apsm":
        return ApsmLearner(trajectory=traj, eps_w=body.eps_w, **body.learner.params)
    return MultiKernelLearner(**body.learner.params)


@app.post("/models", response_model=s.ModelInfo, status_code=201)
def create_model(body: s.ModelCreate):
    hosted = _Hosted(_learner_from(body))
    model_id = uuid.uuid4().hex[:12]
    with _registry_lock:
        _models[model_id] = hosted
    return _info(model_id, hosted)


@app.get("/models", response_model=list[s.ModelInfo])
def list_models():
    with _registry_lock:
        items = list(_models.items())
    return [_info(k, v) for k, v in items]


@app.get("/models/{model_id}")
def get_model(model_id: str):
    hosted = _hosted(model_id)
    with hosted.lock:
        return hosted.learner.to_dict()


@app.delete("/models/{model_id}", status_code=204)
def delete_model(model_id: str):
    with _registry_lock:
        if _models.pop(model_id, None) is None:
            raise HTTPException(status_code=404, detail=f"no model {model_id!r}")


@app.post("/models/{model_id}/measurements", response_model=s.ModelInfo)
def update_model(model_id: str, body: s.UpdateRequest):
    """Feed samples in learner units (unit-square coordinates, scaled values)."""
    hosted = _hosted(model_id)
    with hosted.lock:
        for sample in body.samples:
            hosted.learner.update(sample.x, sample.y)
            hosted.n_updates += 1
        return _info(model_id, hosted)


@app.post("/models/{model_id}/predict", response_model=s.PredictResponse)
def predict(model_id: str, body: s.PredictRequest):
    hosted = _hosted(model_id)
    points = np.asarray(body.points, dtype=np.float64).reshape(-1, 2)
    with hosted.lock:
        values = hosted.learner.predict(points)
    return s.PredictResponse(values=values.tolist())
