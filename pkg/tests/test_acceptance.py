"""
Acceptance checks for the learners, the baseline and the harness.

Every test prints one PASS/FAIL verdict line; the lines are also repeated in
the pytest terminal summary.
"""

import csv
import json
import time
from dataclasses import replace

import numpy as np
import pytest

from acceptance_log import verdict
from kernelmaps import evaluation as ev
from kernelmaps.apsm import ApsmLearner, ApsmModel, HyperslabSample, apsm_update, evaluate
from kernelmaps.kernel import gram
from kernelmaps.kriging import (
    EmpiricalSemivariogram,
    Semivariogram,
    empirical_semivariogram,
    fit_gaussian_model,
    krige,
)
from kernelmaps.multikernel import (
    MatrixHyperslab,
    grad_smooth,
    mm_reweighting,
    prox_column_sparsity,
    prox_row_sparsity,
    reweighted_objective,
    smooth_value,
)
from kernelmaps.scenario import ScenarioConfig, simulate, synth_field

DESK = ScenarioConfig()  # 30 x 30 pixels, 20 users, rate 0.1, 2000 s
LEARNERS = [ev.LearnerSpec("apsm"), ev.LearnerSpec("multikernel")]
N_RUNS = 10


def _rkhs_dist2(model, g_centers, g_coeffs):
    pts = np.vstack([model.centers, g_centers])
    v = np.concatenate([model.coeffs, -g_coeffs])
    return float(v @ gram(pts, pts, model.sigma2) @ v)


def test_c01_fejer_monotonicity():
    t0 = time.perf_counter()
    worst, steps = -np.inf, 0
    for seed in range(3):
        rng = np.random.default_rng(seed)
        gz, gc = rng.uniform(size=(15, 2)), rng.normal(size=15)
        xs = rng.uniform(size=(1000, 2))
        ys = gram(xs, gz, 0.05) @ gc  # noise-free, so g lies in every slab
        lrn = ApsmLearner()
        prev = _rkhs_dist2(lrn.model, gz, gc)
        for x, y in zip(xs, ys):
            lrn.update(x, y)
            d = _rkhs_dist2(lrn.model, gz, gc)
            worst = max(worst, (d - prev) / prev)
            prev, steps = d, steps + 1
    elapsed = (time.perf_counter() - t0) / 3
    ok = worst <= 1e-9 and elapsed < 10.0
    verdict(1, "APSM Fejer monotone over 1000 updates", ok,
            f"max relative increase {worst:.2e} over {steps} steps, {elapsed:.2f} s per run")
    assert ok


def test_c02_single_projection_contract():
    rng = np.random.default_rng(1)
    worst, checked = 0.0, 0
    for _ in range(500):
        r = rng.integers(0, 10)
        m = ApsmModel(q=1, centers=rng.uniform(size=(r, 2)), coeffs=rng.normal(size=r))
        x, y = tuple(rng.uniform(size=2)), float(rng.normal(scale=3))
        before = evaluate(m, x) - y
        apsm_update(m, [HyperslabSample(x, y, 1.0)])
        if abs(before) > m.eps:
            worst = max(worst, abs(abs(evaluate(m, x) - y) - m.eps))
            checked += 1
    lrn = ApsmLearner(q=1)
    for x in rng.uniform(size=(500, 2)):
        y = float(np.sin(5 * x[0]) + x[1])
        before = evaluate(lrn.model, x) - y
        if lrn.update(x, y) and abs(before) > lrn.model.eps:
            worst = max(worst, abs(abs(evaluate(lrn.model, x) - y) - lrn.model.eps))
            checked += 1
    ok = worst < 1e-12 and checked > 0
    verdict(2, "q=1 update leaves residual exactly eps", ok, f"max |residual - eps| {worst:.1e} on {checked} updates")
    assert ok


def test_c03_step_bound_fuzz():
    rng = np.random.default_rng(3)
    lowest, violated, total = np.inf, 0, 0
    while total < 10_000:
        lrn = ApsmLearner(q=int(rng.integers(1, 25)), eps=float(rng.uniform(0, 0.2)),
                          sigma2=float(10 ** rng.uniform(-4, 0)), alpha=float(rng.uniform(0.001, 0.9)),
                          mu_scale=float(rng.uniform(0.05, 1.95)))
        for x in rng.uniform(size=(500, 2)):
            lrn.update(x, float(rng.normal(scale=rng.choice([0.1, 1, 30]))))
            total += 1
            if lrn.model.last_M is not None:
                violated += 1
                lowest = min(lowest, lrn.model.last_M)
    ok = lowest >= 1.0 - 1e-12
    verdict(3, "M_n >= 1 whenever a slab is violated", ok,
            f"min M_n {lowest:.15f} over {violated} violating of {total} updates")
    assert ok


def _instance(rng, M=None, r=None):
    M = M or int(rng.integers(1, 11))
    r = r or int(rng.integers(1, 15))
    A = rng.normal(size=(M, r)) * rng.choice([0.01, 1.0, 10.0])
    slab = MatrixHyperslab(rng.uniform(0, 1, size=(M, r)), float(rng.normal(scale=5)), float(rng.uniform(0, 0.5)))
    return A, slab


def test_c04_mm_monotone():
    rng = np.random.default_rng(4)
    worst = -np.inf
    for _ in range(50):
        A, slab = _instance(rng)
        lam, eps2 = float(rng.uniform(0.01, 1)), float(rng.uniform(0.001, 0.1))
        vals = [reweighted_objective(X, slab, lam, eps2) for X in mm_reweighting(A, slab, lam, eps2, n_outer=20)]
        worst = max(worst, float(np.max(np.diff(vals))))
    ok = worst <= 1e-10
    verdict(4, "reweighted surrogate non-increasing over 20 MM iterations", ok,
            f"largest increase {worst:.2e} on 50 instances")
    assert ok


def test_c05_moreau_gradient_finite_differences():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        A, slab = _instance(rng)
        w = rng.uniform(0.05, 1, A.shape[1])
        w /= w.sum()
        lam, gam = float(rng.uniform(0.01, 1)), float(rng.uniform(0.1, 5))
        D = rng.normal(size=A.shape)
        h = 1e-6
        fd = (smooth_value(A + h * D, slab, w, lam, gam) - smooth_value(A - h * D, slab, w, lam, gam)) / (2 * h)
        an = float(np.sum(grad_smooth(A, slab, w, lam, gam) * D))
        worst = max(worst, abs(fd - an) / max(abs(an), 1e-12))
    ok = worst < 1e-5
    verdict(5, "smooth-part gradient matches central differences", ok, f"max relative error {worst:.2e}")
    assert ok


def test_c06_prox_firm_nonexpansive():
    rng = np.random.default_rng(6)
    worst = {"column": -np.inf, "row": -np.inf}
    for _ in range(100):
        M, r = int(rng.integers(1, 11)), int(rng.integers(1, 15))
        X, Y = rng.normal(size=(2, M, r)) * rng.choice([0.01, 1, 10])
        w, nu = rng.uniform(0.01, 1, r), rng.uniform(0.01, 1, M)
        g, lam = float(rng.uniform(0.1, 3)), float(rng.uniform(0.01, 2))
        for name, P in (("column", lambda Z: prox_column_sparsity(Z, g, lam, w)),
                        ("row", lambda Z: prox_row_sparsity(Z, g, lam, nu))):
            d = P(X) - P(Y)
            worst[name] = max(worst[name], float(np.sum(d * d) - np.sum(d * (X - Y))))
    ok = max(worst.values()) <= 1e-12
    verdict(6, "column and row prox firmly nonexpansive", ok,
            f"max slack column {worst['column']:.1e}, row {worst['row']:.1e}")
    assert ok


@pytest.fixture(scope="module")
def desk_runs():
    t0 = time.perf_counter()
    reports = ev.run_many(DESK, LEARNERS, n_runs=N_RUNS)
    return reports, time.perf_counter() - t0


def test_c07_desk_scale_mse_decay(desk_runs):
    reports, elapsed = desk_runs
    parts, ok = [], elapsed < 60.0
    for spec in LEARNERS:
        first = np.mean([r.series(spec.name)[0] for r in reports])
        last = np.mean([r.series(spec.name)[-1] for r in reports])
        route = np.mean([r.series(spec.name, "route_mse")[-1] for r in reports])
        ok &= last < 0.1 * first and route < 0.01
        parts.append(f"{spec.name} {first:.3g}->{last:.3g} (ratio {last / first:.3f}), route {route:.2e}")
    verdict(7, "desk-scale MSE decay and route MSE", ok, "; ".join(parts) + f"; {elapsed:.1f} s for {N_RUNS} runs")
    assert ok


def test_c08_multikernel_sparsity(desk_runs):
    reports, _ = desk_runs
    sizes = [(r.series("multikernel", "dict_size")[-1], r.series("apsm", "dict_size")[-1]) for r in reports]
    smaller = all(mk <= ap for mk, ap in sizes)
    sc = simulate(DESK)
    ens = ev.fit_measurements(sc.measurements, sc.truth, LEARNERS[1], sc.assignment)
    norms = np.concatenate([np.linalg.norm(l.model.A, axis=0) for l in ens.learners.values()])
    small_cols = int(np.count_nonzero((norms > 0) & (norms < 1e-2)))
    ok = smaller and small_cols == 0
    mk_mean, ap_mean = np.mean(sizes, axis=0)
    verdict(8, "multikernel dictionary no larger than APSM, no columns in (0, 1e-2)", ok,
            f"mean final sizes MK {mk_mean:.1f} vs APSM {ap_mean:.1f}; {small_cols} small columns of {norms.size}")
    assert ok


def test_c09_kriging_baseline():
    rng = np.random.default_rng(9)
    pts, y = rng.uniform(size=(50, 2)), rng.normal(size=50)
    est, _ = krige(pts, y, Semivariogram(0.0, 1.0, 0.2), pts)
    interp = float(np.max(np.abs(est - y)))

    (field,), _ = synth_field(replace(DESK, n_bs=1))
    u, values = field.unit_pixel_centers(), field.values.ravel()
    idx = rng.choice(len(values), 200, replace=False)
    model = fit_gaussian_model(empirical_semivariogram(u[idx], values[idx]))
    pred, _ = krige(u[idx], values[idx], model, u)
    mse = ev.normalized_mse(values, pred)

    truth = Semivariogram(0.1, 2.0, 0.25)
    lags = np.linspace(0.02, 1.0, 15)
    fit = fit_gaussian_model(EmpiricalSemivariogram(lags, truth(lags), np.arange(15, 0, -1) * 10))
    rel = max(abs(fit.nugget - truth.nugget) / truth.nugget, abs(fit.sill - truth.sill) / truth.sill,
              abs(fit.range - truth.range) / truth.range)
    ok = interp < 1e-6 and mse < 0.05 and rel < 0.05
    verdict(9, "kriging interpolation, accuracy and self-recovery", ok,
            f"interp err {interp:.1e}, 200-sample MSE {mse:.2e}, max rel param err {rel:.1e}")
    assert ok


def test_c10_robustness(desk_runs, artifact_dir):
    clean, _ = desk_runs
    noisy = ev.run_many(replace(DESK, loc_err_max=0.05, meas_err_max=0.1), LEARNERS, n_runs=N_RUNS)
    path = artifact_dir / "robustness.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["setting", "t_s", "learner", "mean", "sem", "lo", "hi", "n"])
        for label, reps in (("noise_free", clean), ("loc5_meas10", noisy)):
            for row in ev.summarize(reps):
                writer.writerow([label] + [row[k] for k in ("t_s", "learner", "mean", "sem", "lo", "hi", "n")])
    parts, ok = [], True
    for spec in LEARNERS:
        base = np.mean([r.series(spec.name)[-1] for r in clean])
        hurt = np.mean([r.series(spec.name)[-1] for r in noisy])
        ok &= hurt < 3 * base
        parts.append(f"{spec.name} {hurt:.2e} vs {base:.2e} ({hurt / base:.2f}x)")
    verdict(10, "noisy MSE below 3x noise-free", ok, "; ".join(parts) + f"; bands in {path.name}")
    assert ok


def test_c11_determinism():
    cfg = replace(DESK, n_users=8, duration_s=800.0, rng_seed=11, loc_err_max=0.02, meas_err_max=0.05)
    a = ev.run_experiment(cfg, LEARNERS)
    b = ev.run_experiment(cfg, LEARNERS)
    par = ev.run_many(cfg, LEARNERS, n_runs=2, workers=2)
    same = a == b and json.dumps(a.to_dict()) == json.dumps(b.to_dict()) and par[0] == a
    bits = all(np.float64(x.mse).tobytes() == np.float64(y.mse).tobytes() for x, y in zip(a.records, b.records))
    ok = same and bits
    verdict(11, "identical seeds give bit-identical reports", ok, f"{len(a.records)} records compared, parallel run included")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
