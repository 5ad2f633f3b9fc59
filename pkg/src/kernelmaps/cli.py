"""
Command line client.

Every command reads its inputs locally, sends them to the service and writes
the response to disk. Without ``--server`` the service runs in-process.
"""

import asyncio
import csv
import json
import sys
from dataclasses import fields
from pathlib import Path

import click
import httpx
import numpy as np

from kernelmaps.evaluation import FACTORIAL_APSM, FACTORIAL_MK, LEARNER_FIELDS, METRICS_HEADER
from kernelmaps.grid import PathLossGrid
from kernelmaps.scenario import Measurement, ScenarioConfig, load_csv, write_csv

SCENARIO_FIELDS = {f.name: f.type for f in fields(ScenarioConfig)}


class ServiceClient:
    def __init__(self, server=None):
        self.server = server
        self._client = httpx.Client(base_url=server, timeout=None) if server else None

    async def _inprocess(self, path, payload):
        from kernelmaps.service.app import app

        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport, base_url="http://kernelmaps") as client:
            return await client.post(path, json=payload, timeout=None)

    def post(self, path, payload):
        if self._client is not None:
            resp = self._client.post(path, json=payload)
        else:
            resp = asyncio.run(self._inprocess(path, payload))
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            raise click.ClickException(f"{path}: {detail}")
        return resp.json()


def _parse_value(name, raw):
    if name == "widths":
        return [float(v) for v in raw.split(",")]
    ftype = SCENARIO_FIELDS.get(name)
    if ftype in (int, "int") or name == "q":
        return int(raw)
    return float(raw)


def override_options(func):
    """Add one ``--<field>`` flag per scenario and learner field."""
    names = list(SCENARIO_FIELDS) + sorted(LEARNER_FIELDS["apsm"]) + sorted(LEARNER_FIELDS["multikernel"])
    for name in reversed(names):
        flags = [f"--{name}"]
        if "_" in name:
            flags.append(f"--{name.replace('_', '-')}")
        func = click.option(*flags, name, default=None, type=str, help=f"override {name}")(func)
    return func


def _load_config(path):
    if path is None:
        return {}
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise click.ClickException("config must be a JSON object")
    return data


def _settings(config_path, overrides):
    """Merge config file and flags into scenario and per-learner parameter dicts."""
    cfg = _load_config(config_path)
    scenario = dict(cfg.get("scenario", {}))
    learner = {"apsm": dict(cfg.get("apsm", {})), "multikernel": dict(cfg.get("multikernel", {}))}
    for name, raw in overrides.items():
        if raw is None:
            continue
        try:
            value = _parse_value(name, raw)
        except ValueError:
            raise click.ClickException(f"invalid value for --{name}: {raw!r}") from None
        if name in SCENARIO_FIELDS:
            scenario[name] = value
        for kind, names in LEARNER_FIELDS.items():
            if name in names:
                learner[kind][name] = value
    try:
        ScenarioConfig(**scenario)
    except (TypeError, ValueError) as exc:
        raise click.ClickException(f"invalid scenario: {exc}") from None
    return cfg, scenario, learner


def _learner_payload(kinds, learner_params, side_info=False):
    out = []
    for kind in kinds:
        out.append({"kind": kind, "params": learner_params[kind]})
        if side_info and kind == "apsm":
            out.append({"kind": kind, "params": learner_params[kind], "side_info": True})
    return out


def _write_metrics(rows, path):
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for r in rows:
            route = "" if r.get("route_mse") is None else repr(r["route_mse"])
            writer.writerow([repr(r["t_s"]), r["learner"], repr(r["mse"]), route, r["dict_size"]])
    finally:
        if path:
            fh.close()


def _grid_payload(grid: PathLossGrid, with_values=True):
    d = grid.meta()
    d["values"] = grid.values.tolist() if with_values else None
    return d


def _read_pixels(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return [[int(a), int(b)] for a, b in rows[1:] if a != ""]


@click.group()
@click.option("--server", default=None, envvar="KERNELMAPS_SERVER",
              help="Base URL of a running service; in-process when omitted.")
@click.pass_context
def main(ctx, server):
    """Online kernel learners for path-loss map reconstruction."""
    ctx.obj = {"server": server}


def _client(ctx):
    if "client" not in ctx.obj:
        ctx.obj["client"] = ServiceClient(ctx.obj["server"])
    return ctx.obj["client"]


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--uoi", default=0, show_default=True, help="User whose route is exported.")
@override_options
@click.pass_context
def simulate(ctx, config_path, out_dir, uoi, **overrides):
    """Generate a scenario: measurements CSV, truth grid, assignment and route."""
    _, scenario, _ = _settings(config_path, overrides)
    res = _client(ctx).post("/simulate", {"scenario": scenario, "uoi": uoi})
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    measurements = [Measurement((m["x_m"], m["y_m"]), m["pathloss_db"], m["t_s"], m["bs_id"])
                    for m in res["measurements"]]
    write_csv(measurements, out / "measurements.csv")
    t = res["truth"]
    PathLossGrid(t["X1"], t["X2"], t["pixel_m"], tuple(t["origin"]), np.array(t["values"])).save(
        out / "truth.csv")
    np.savetxt(out / "assignment.csv", np.array(res["assignment"], dtype=int), delimiter=",", fmt="%d")
    with open(out / "route.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["px", "py"])
        writer.writerows(res["route"])
    (out / "scenario.json").write_text(json.dumps({"scenario": scenario}, indent=2) + "\n")
    click.echo(f"{len(measurements)} measurements written to {out}")


@main.command()
@click.argument("measurements", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--learner", type=click.Choice(["apsm", "multikernel"]), default="multikernel",
              show_default=True)
@click.option("--grid", "grid_path", type=click.Path(exists=True, dir_okay=False),
              help="Grid CSV whose JSON sidecar gives the geometry; else derived from the config.")
@click.option("--assignment", "assignment_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--route", "route_path", type=click.Path(exists=True, dir_okay=False),
              help="Route CSV; enables side-information weights for apsm.")
@click.option("--value-scaling", type=click.Choice(["offset", "unit"]), default=None)
@click.option("--out-model", type=click.Path(dir_okay=False), required=True)
@click.option("--out-grid", type=click.Path(dir_okay=False), required=True)
@override_options
@click.pass_context
def fit(ctx, measurements, config_path, learner, grid_path, assignment_path, route_path,
        value_scaling, out_model, out_grid, **overrides):
    """Stream a measurement CSV through per-station learners."""
    cfg, scenario, learner_params = _settings(config_path, overrides)
    try:
        ms = load_csv(measurements)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from None
    if grid_path:
        grid = PathLossGrid.load(grid_path)
    else:
        grid = ScenarioConfig(**scenario).grid()
    payload = {
        "measurements": [{"t_s": m.t, "x_m": m.x_reported[0], "y_m": m.x_reported[1],
                          "pathloss_db": m.y, "bs_id": m.bs_id} for m in ms],
        "grid": _grid_payload(grid, with_values=False),
        "learner": {"kind": learner, "params": learner_params[learner], "side_info": bool(route_path)
                    and learner == "apsm"},
        "value_scaling": value_scaling or cfg.get("value_scaling", "offset"),
    }
    if assignment_path:
        payload["assignment"] = np.loadtxt(assignment_path, delimiter=",", ndmin=2).astype(int).tolist()
    if route_path:
        payload["route"] = _read_pixels(route_path)
    res = _client(ctx).post("/fit", payload)
    Path(out_model).write_text(json.dumps(res["checkpoint"]) + "\n")
    est = res["estimate"]
    PathLossGrid(est["X1"], est["X2"], est["pixel_m"], tuple(est["origin"]),
                 np.array(est["values"])).save(out_grid)
    click.echo(f"fitted {len(ms)} measurements, dictionary size {res['dict_size']}")


@main.command()
@click.option("--truth", "truth_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--estimate", "estimate_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--route", "route_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), help="Metrics CSV (stdout if omitted).")
@click.pass_context
def evaluate(ctx, truth_path, model_path, estimate_path, route_path, out_path):
    """Compare a model checkpoint or estimate grid against the truth grid."""
    if (model_path is None) == (estimate_path is None):
        raise click.ClickException("give exactly one of --model or --estimate")
    payload = {"truth": _grid_payload(PathLossGrid.load(truth_path))}
    if model_path:
        payload["checkpoint"] = json.loads(Path(model_path).read_text())
    else:
        payload["estimate"] = _grid_payload(PathLossGrid.load(estimate_path))
    if route_path:
        payload["route"] = _read_pixels(route_path)
    _write_metrics(_client(ctx).post("/evaluate", payload), out_path)


def _parse_levels(specs):
    grid = {}
    for spec in specs:
        name, sep, levels = spec.partition("=")
        if not sep or not levels:
            raise click.ClickException(f"--param expects name=v1,v2, got {spec!r}")
        try:
            grid[name.strip()] = [float(v) for v in levels.split(",")]
        except ValueError:
            raise click.ClickException(f"non-numeric level in {spec!r}") from None
    return grid


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--learner", "kinds", multiple=True, type=click.Choice(["apsm", "multikernel"]))
@click.option("--preset", type=click.Choice(["apsm", "multikernel"]), default=None,
              help="Low/high levels of the default factorial design for one learner.")
@click.option("--param", "params", multiple=True, help="name=low,high (repeatable).")
@click.option("--runs", default=1, show_default=True)
@click.option("--checkpoint-every", default=250.0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@override_options
@click.pass_context
def sweep(ctx, config_path, kinds, preset, params, runs, checkpoint_every, out_path, **overrides):
    """Factorial design over learner/scenario parameters; one CSV row per record."""
    cfg, scenario, learner_params = _settings(config_path, overrides)
    grid = {}
    if preset == "apsm":
        grid.update({k: list(v) for k, v in FACTORIAL_APSM.items()})
        kinds = kinds or ("apsm",)
    elif preset == "multikernel":
        grid.update({k: list(v) for k, v in FACTORIAL_MK.items()})
        kinds = kinds or ("multikernel",)
        # eta_h = 1.99 needs 2 / (1 + 1/gamma) > 1.99.
        learner_params["multikernel"].setdefault("gamma", 250.0)
    grid.update(_parse_levels(params))
    kinds = kinds or tuple(cfg.get("learners", ["apsm", "multikernel"]))
    payload = {
        "scenario": scenario,
        "learners": _learner_payload(kinds, learner_params),
        "grid": grid,
        "n_runs": runs,
        "checkpoint_every": checkpoint_every,
        "value_scaling": cfg.get("value_scaling", "offset"),
    }
    res = _client(ctx).post("/sweeps", payload)
    names = list(grid)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cell"] + names + ["seed"] + METRICS_HEADER)
        for k, cell in enumerate(res["cells"]):
            levels = [cell["assignment"].get(n, "") for n in names]
            for rep in cell["reports"]:
                for r in rep["records"]:
                    route = "" if r["route_mse"] is None else repr(r["route_mse"])
                    writer.writerow([k] + levels + [rep["seed"], repr(r["t_s"]), r["learner"],
                                     repr(r["mse"]), route, r["dict_size"]])
    click.echo(f"{len(res['cells'])} cells written to {out_path}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--learner", "kinds", multiple=True, type=click.Choice(["apsm", "multikernel"]))
@click.option("--side-info", is_flag=True, help="Also run apsm with route-based weights.")
@click.option("--runs", default=None, type=int, help="Number of seeded runs (default 1).")
@click.option("--checkpoint-every", default=250.0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True,
              help="Per-run metrics CSV.")
@click.option("--summary", "summary_path", type=click.Path(dir_okay=False),
              help="Mean and two-standard-error band per checkpoint.")
@override_options
@click.pass_context
def experiment(ctx, config_path, kinds, side_info, runs, checkpoint_every, out_path, summary_path,
               **overrides):
    """Simulate and track learners over time, averaged over seeded runs."""
    cfg, scenario, learner_params = _settings(config_path, overrides)
    kinds = kinds or tuple(cfg.get("learners", ["apsm", "multikernel"]))
    payload = {
        "scenario": scenario,
        "learners": _learner_payload(kinds, learner_params, side_info),
        "n_runs": runs or int(cfg.get("runs", 1)),
        "checkpoint_every": checkpoint_every,
        "value_scaling": cfg.get("value_scaling", "offset"),
    }
    res = _client(ctx).post("/experiments", payload)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["seed"] + METRICS_HEADER)
        for rep in res["reports"]:
            for r in rep["records"]:
                route = "" if r["route_mse"] is None else repr(r["route_mse"])
                writer.writerow([rep["seed"], repr(r["t_s"]), r["learner"], repr(r["mse"]), route,
                                 r["dict_size"]])
    if summary_path:
        with open(summary_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            cols = ["t_s", "learner", "mean", "sem", "lo", "hi", "n"]
            writer.writerow(cols)
            for row in res["summary"]:
                writer.writerow([row[c] for c in cols])
    click.echo(f"{len(res['reports'])} runs written to {out_path}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("kernelmaps.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
