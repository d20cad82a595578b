"""End-to-end acceptance checks.  Each test prints and records one PASS/FAIL line.

The heavy criteria (4 to 9) take several minutes each on a single core.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from batch_smp.bsde import backward_sample, classical_oracle
from batch_smp.core import ControlPath, TimeGrid, hamiltonian, hamiltonian_grad_u
from batch_smp.harness.config import load_config
from batch_smp.harness.runner import (
    compare_methods,
    contraction_preset_N,
    convergence_study,
    fit_rate,
    hjb_train,
    run_experiment,
    solve,
)
from batch_smp.optim import OPTIMIZERS, ContractionConfig, run_contraction
from batch_smp.problems import example1_spec, example2_spec, gbm_spec, scalar_lq
from batch_smp.problems.hjb import RandomizedNet, nn_forward, nn_gradients
from batch_smp.sde import sample_noise, simulate, simulate_order2

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def verdict(record_property, number, ok, detail):
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    record_property("acceptance", line)
    print(line)
    assert ok, line


def test_c01_unbiased_adjoint(record_property):
    t0 = time.perf_counter()
    spec = scalar_lq(a=0.0, B=0.0, s0=1.0, G=1.0, x0=0.7)
    g = TimeGrid(1.0, 8)
    u = ControlPath.zeros(g, 1)
    adj = backward_sample(spec, simulate(spec, u, sample_noise(g, 100_000, seed=1)))
    Yref, Zref = classical_oracle(spec, u)
    Y, Z = adj.Y[..., 0], adj.Z[..., 0, 0]
    zy = np.abs(Y.mean(0) - Yref[:, 0]) / (Y.std(0, ddof=1) / np.sqrt(len(Y)))
    zz = np.abs(Z.mean(0) - Zref[:, 0]) / (Z.std(0, ddof=1) / np.sqrt(len(Z)))
    elapsed = time.perf_counter() - t0
    ok = zy.max() <= 3 and zz.max() <= 3 and elapsed < 10
    verdict(record_property, 1, ok, f"max |Y|/SE {zy.max():.2f}, max |Z|/SE {zz.max():.2f}, {elapsed:.1f} s")


def test_c02_z_variance_scaling(record_property):
    t0 = time.perf_counter()
    spec = scalar_lq(a=0.0, G=0.0, c=1.0)
    peaks = []
    for N in (10, 40):
        g = TimeGrid(1.0, N)
        adj = backward_sample(spec, simulate(spec, ControlPath.zeros(g, 1), sample_noise(g, 100_000, seed=N)))
        peaks.append(float(np.max(np.mean(adj.Z[..., 0, 0] ** 2, axis=0))))
    slope = fit_rate([10, 40], peaks).slope
    elapsed = time.perf_counter() - t0
    within = all(abs(p / N - 1) <= 0.05 for p, N in zip(peaks, (10, 40)))
    ok = within and 0.9 <= slope <= 1.1 and elapsed < 10
    verdict(record_property, 2, ok, f"max E|Z|^2 = {peaks[0]:.3f}, {peaks[1]:.3f}; slope {slope:.3f}; {elapsed:.1f} s")


def test_c03_order2_weak_rate(record_property):
    # E[X_N] - x0 e^{mu T} is estimated as the mean of X_N minus the exact
    # solution driven by the same Brownian path, whose mean is known
    t0 = time.perf_counter()
    mu, vol, paths = 1.0, 0.4, 1_000_000
    spec = gbm_spec(mu=mu, vol=vol)
    Ns = [8, 16, 32, 64]
    errors = []
    for N in Ns:
        g = TimeGrid(1.0, N)
        u = ControlPath.zeros(g, 1)
        chunk = 2_000_000 // N
        total = 0.0
        for c in range(paths // chunk):
            noise = sample_noise(g, chunk, need_dq=True, seed=7, stream=c)
            XN = simulate_order2(spec, u, noise).states[:, -1, 0]
            exact = np.exp(mu - 0.5 * vol**2 + vol * noise.dW[:, :, 0].sum(axis=1))
            total += np.sum(XN - exact)
        errors.append(abs(total / paths))
    slope = fit_rate([1 / N for N in Ns], errors).slope
    elapsed = time.perf_counter() - t0
    ok = slope >= 1.7 and elapsed < 60
    verdict(record_property, 3, ok, f"weak errors {', '.join(f'{e:.2e}' for e in errors)}; slope {slope:.3f}; {elapsed:.1f} s")


def test_c04_first_order_rate_example2(record_property, tmp_path):
    t0 = time.perf_counter()
    fit, summaries = convergence_study(load_config(CONFIGS / "example2_rate.cfg"), tmp_path)
    elapsed = time.perf_counter() - t0
    ok = 0.75 <= fit.order <= 1.25 and elapsed < 300
    errs = ", ".join(f"{s.mean_rel_err:.4f}" for s in summaries)
    verdict(record_property, 4, ok, f"errors {errs}; order {fit.order:.3f}; {elapsed:.0f} s")


def test_c05_half_and_first_order_example1(record_property, tmp_path):
    t0 = time.perf_counter()
    half, _ = convergence_study(load_config(CONFIGS / "example1_half_order.cfg"), tmp_path / "half")
    full, _ = convergence_study(load_config(CONFIGS / "example1_rate.cfg"), tmp_path / "full")
    elapsed = time.perf_counter() - t0
    ok = 0.3 <= half.order <= 0.7 and 0.75 <= full.order <= 1.25 and elapsed < 300
    verdict(record_property, 5, ok, f"K = 10 N order {half.order:.3f}; K = N^2 order {full.order:.3f}; {elapsed:.0f} s")


def test_c06_example2_error_level(record_property, tmp_path):
    s = run_experiment(load_config(CONFIGS / "example2_table.cfg"), tmp_path)
    ok = s.mean_rel_err <= 0.009 and s.mean_time_s < 30
    verdict(record_property, 6, ok, f"mean rel err {s.mean_rel_err:.5f}; {s.mean_time_s:.2f} s per run")


def test_c07_contraction_plateau(record_property):
    t0 = time.perf_counter()
    cfg = load_config(CONFIGS / "example1_contraction.cfg")
    N55, N91 = contraction_preset_N(800), contraction_preset_N(900)
    e55 = solve(cfg.with_overrides(N=N55, M="N", K="800")).mean_rel_err
    e91 = solve(cfg.with_overrides(N=N91, M="N", K="900")).mean_rel_err
    big = solve(cfg.with_overrides(N=N55, M="N^2", K="800", seeds=[0, 1, 2, 3])).mean_rel_err
    elapsed = time.perf_counter() - t0
    reduction = (e55 - e91) / e55
    ok = reduction < 0.10 and big < e55 and elapsed < 600
    verdict(record_property, 7, ok, f"M = N: {e55:.4f} (N={N55}) -> {e91:.4f} (N={N91}), reduction {100 * reduction:.1f}%; "
            f"M = N^2: {big:.4f}; {elapsed:.0f} s")


def test_c08_efficiency_ordering(record_property, tmp_path):
    t0 = time.perf_counter()
    plain, batch, contr = compare_methods(load_config(CONFIGS / "example1_compare.cfg"), out=tmp_path)
    elapsed = time.perf_counter() - t0
    ok = (batch.mean_time_s < plain.mean_time_s and batch.mean_rel_err <= 2 * plain.mean_rel_err
          and contr.mean_rel_err <= 2 * plain.mean_rel_err and elapsed < 600)
    rows = "; ".join(f"{s.method} {s.mean_rel_err:.4f} in {s.mean_time_s:.2f} s" for s in (plain, batch, contr))
    verdict(record_property, 8, ok, f"{rows}; {elapsed:.0f} s")


def test_c09_network_control_d10(record_property, tmp_path):
    t0 = time.perf_counter()
    (rep,) = hjb_train(load_config(CONFIGS / "hjb_d10.cfg"), tmp_path)
    elapsed = time.perf_counter() - t0
    ok = rep.rel_error <= 0.01 and elapsed < 600
    verdict(record_property, 9, ok, f"v = {rep.value:.5f}, v_ref = {rep.reference:.5f}, "
            f"rel err {100 * rep.rel_error:.3f}%; {elapsed:.0f} s")


def _central_difference(fn, p, eps):
    out = np.zeros_like(p)
    for j in range(p.size):
        e = np.zeros_like(p)
        e[j] = eps
        out[j] = (fn(p + e) - fn(p - e)) / (2 * eps)
    return out


def test_c10_property_suite(record_property, tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    failures = []

    for spec in (example1_spec(), example2_spec(), scalar_lq(a=0.3, B=1.2, s0=0.7, D=0.4, q=1.0)):
        zshape = (spec.d,) if spec.diagonal else (spec.d, spec.m)
        for _ in range(50):
            t, x, y = rng.uniform(), rng.normal(size=spec.d), rng.normal(size=spec.d)
            z, u = rng.normal(size=zshape), rng.normal(size=spec.k)
            exact = hamiltonian_grad_u(spec, t, x, y, z, u)
            fd = _central_difference(lambda v: hamiltonian(spec, t, x, y, z, v), u, 1e-5)
            if np.linalg.norm(exact - fd) / max(np.linalg.norm(exact), 1.0) > 1e-6:
                failures.append(f"hamiltonian gradient ({spec.name})")
                break

    d, lam = 3, 1.5
    net = RandomizedNet.init(d=d, N=2, width=5, seed=3)
    x, y = rng.normal(size=d), rng.normal(size=d)

    def H_of_outer(flat):
        A, b = flat[: d * 5].reshape(d, 5), flat[d * 5 :]
        trial = net.with_flat_params(np.concatenate([net.A[0].ravel(), A.ravel(), net.b[0], b]))
        u = nn_forward(trial, 1, x)
        return 2 * np.sqrt(lam) * u @ y + u @ u

    dA, db = nn_gradients(net, 1, x, y, lam)
    fd = _central_difference(H_of_outer, np.concatenate([net.A[1].ravel(), net.b[1]]), 1e-6)
    exact = np.concatenate([dA.ravel(), db])
    if np.linalg.norm(exact - fd) / np.linalg.norm(exact) > 1e-6:
        failures.append("network gradients")

    p = rng.normal(size=(4, 3))
    for name, step in OPTIMIZERS.items():
        q, state = p, None
        for _ in range(3):
            q, state = step(q, np.zeros_like(q), state, 0.1)
        if not np.array_equal(q, p):
            failures.append(f"{name} zero-gradient fixed point")

    g = TimeGrid(1.0, 6)
    u0 = ControlPath(g, rng.normal(size=(6, 2)))
    u, _ = run_contraction(example1_spec(), g, ContractionConfig(K=2, M=8, rho=1 - 1e-12), u0=u0)
    if not np.allclose(u.values, u0.values, atol=1e-9):
        failures.append("contraction fixed point")

    cfg = load_config(CONFIGS / "example2_table.cfg").with_overrides(N=8, seeds=[0, 1], record_every=8)
    texts = []
    for name in ("a", "b"):
        run_experiment(cfg, tmp_path / name)
        rows = (tmp_path / name / "summary.csv").read_text().splitlines()
        texts.append([",".join(r.split(",")[:-1]) for r in rows])  # drop the timing column
    if texts[0] != texts[1]:
        failures.append("summary determinism")

    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 30
    verdict(record_property, 10, ok, f"{'all checks hold' if not failures else ', '.join(failures)}; {elapsed:.1f} s")
