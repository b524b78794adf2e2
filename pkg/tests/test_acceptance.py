"""Acceptance criteria, one test each; every test records a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from dlnflow.adaptive import ControllerConfig, run_adaptive
from dlnflow.bdf2 import bdf2_step
from dlnflow.cli import main
from dlnflow.core import OdeSystem, SolutionWindow, dln_step, g_norm_sq, integrate_dln
from dlnflow.experiments import ExperimentConfig, convergence_table, energy_compare
from dlnflow.flow import (FlowProblem, FlowWindow, SpectralGrid, periodic_stirring_force,
                          run_flow, taylor_green_exact)
from dlnflow.io import csv_body
from dlnflow.solvers import SolverConfig
from dlnflow.stability import consistency_order, g_identity_fuzz, root_locus


def record(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_1_g_identity():
    start = time.perf_counter()
    data = g_identity_fuzz(100_000, seed=2024)
    elapsed = time.perf_counter() - start
    worst = float(data["rel_gap"].max())
    ok = worst <= 1e-12 and elapsed < 5 and data["dim"].max() <= 8
    record(1, ok, f"max relative gap {worst:.2e} over 1e5 samples in {elapsed:.2f}s")


def test_criterion_2_exactness_and_consistency():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    polys = [(lambda t: np.ones_like(t), lambda t, y: np.zeros(1)),
             (lambda t: t, lambda t, y: np.ones(1)),
             (lambda t: t * t, lambda t, y: np.array([2.0 * t]))]
    for _ in range(100):
        steps = rng.uniform(0.01, 1.0, 50)
        theta = rng.uniform(0, 1)
        times = np.concatenate([[0.0], np.cumsum(steps)])
        for p, dp in polys:
            exact = p(times)
            traj = integrate_dln(OdeSystem(dp), 0.0, [exact[0]], steps, theta, y1=[exact[1]])
            err = np.abs(traj.states[:, 0] - exact) / np.maximum(1.0, np.abs(exact))
            worst = max(worst, float(err.max()))
    orders = []
    for law in ("constant", "alternating"):
        for theta in (0.25, 0.5, 0.75):
            res = consistency_order(math.sin, math.cos, theta, law)
            orders += [res.order_state, res.order_derivative]
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and all(1.9 <= o <= 2.1 for o in orders) and elapsed < 5
    record(2, ok, f"polynomial error {worst:.1e}, orders in [{min(orders):.3f}, {max(orders):.3f}], "
                  f"{elapsed:.2f}s")


def test_criterion_3_root_locus():
    start = time.perf_counter()
    mins = {th: root_locus(th, 10_000).min_real() for th in (0.0, 0.25, 0.5, 0.75, 1.0)}
    z_pi = root_locus(0.5, 10_000).z[5000]
    elapsed = time.perf_counter() - start
    ok = min(mins.values()) >= -1e-12 and abs(z_pi - 4 / 3) <= 1e-12 and elapsed < 5
    record(3, ok, f"min Re z {min(mins.values()):.1e}, |z(pi) - 4/3| {abs(z_pi - 4 / 3):.1e}, "
                  f"{elapsed:.2f}s")


def test_criterion_4_temporal_convergence():
    start = time.perf_counter()
    orders = {}
    for theta in (0.2, 0.5, 0.7):
        cfg = ExperimentConfig("convergence", theta=theta, n=64, nu=0.01, T_final=1.0,
                               k=1 / 16, levels=4).resolved()
        rows = convergence_table(cfg)
        orders[theta] = [(r[3], r[5]) for r in rows[1:]]
    elapsed = time.perf_counter() - start
    flat = [o for pairs in orders.values() for pair in pairs for o in pair]
    ok = all(1.8 <= o <= 2.2 for o in flat) and elapsed < 300
    record(4, ok, f"velocity orders (sup and left-Riemann) in [{min(flat):.3f}, {max(flat):.3f}], "
                  f"{elapsed:.1f}s")


def test_criterion_5_unconditional_energy_stability():
    start = time.perf_counter()
    grid = SpectralGrid(64)
    rng = np.random.default_rng(5)
    k0 = 0.05
    ks, k = [], k0
    for _ in range(500):
        k = float(np.clip(k * math.exp(rng.uniform(math.log(1 / 3), math.log(3))), 1e-3, 0.5))
        ks.append(k)
    ratios = np.array(ks) / np.array([k0] + ks[:-1])
    problem = FlowProblem(0.01, grid)
    window = FlowWindow.from_states(taylor_green_exact(grid, 0.0), taylor_green_exact(grid, k0))
    run = run_flow(problem, window, ks, 0.5)
    holds = [r.energy_inequality_holds(1e-10) for r in run.ledger]
    elapsed = time.perf_counter() - start
    ok = (all(holds) and len(holds) == 500 and ratios.min() >= 1 / 3 - 1e-12
          and ratios.max() <= 3 + 1e-12 and elapsed < 120)
    record(5, ok, f"inequality held on {sum(holds)}/500 steps, ratios in "
                  f"[{ratios.min():.3f}, {ratios.max():.3f}], {elapsed:.1f}s")


ZERO = OdeSystem(lambda t, y: np.zeros_like(y), jacobian=lambda t, y: np.zeros((1, 1)))


def test_criterion_6a_parasitic_growth():
    k = 1e-6
    wb = wd = SolutionWindow(0.0, k, [0.0], [1.0], k)
    yb = [0.0, 1.0]
    g = [g_norm_sq(0.5, wd.y_curr, wd.y_prev)]
    for _ in range(25):
        k *= 3.0
        y, _ = bdf2_step(ZERO, wb, k)
        wb = wb.advance(y, k)
        yb.append(y[0])
        y, _ = dln_step(ZERO, wd, k, 0.5, SolverConfig())
        wd = wd.advance(y, k)
        g.append(g_norm_sq(0.5, wd.y_curr, wd.y_prev))
    d = np.diff(yb)
    rates = d[1:] / d[:-1]
    dev = float(np.abs(rates - 9 / 7).max())
    g = np.array(g)
    monotone = bool(np.all(np.diff(g) <= 1e-14 * g[:-1]))
    record("6a", dev <= 1e-10 and monotone,
           f"BDF2 rate deviation from 9/7 {dev:.1e}, DLN G-norm non-increasing: {monotone}")


def test_criterion_6b_energy_contrast():
    start = time.perf_counter()
    cfg = ExperimentConfig("energy-compare", step_law="increasing", T_final=40.0).resolved()
    _, dln, bdf2 = energy_compare(cfg)
    elapsed = time.perf_counter() - start
    bound = all(r.energy_inequality_holds(1e-10) for r in dln.ledger)
    ratios = [b.ke / d.ke for d, b in zip(dln.ledger, bdf2.ledger) if d.t < 40 and d.ke > 0]
    peak = max(ratios)
    ok = bound and peak >= 2.0 and elapsed < 180
    record("6b", ok, f"DLN bound held at every step: {bound}; peak BDF2/DLN energy ratio "
                     f"{peak:.4f} (need >= 2), {elapsed:.1f}s")


def test_criterion_7_adaptive_controller():
    start = time.perf_counter()
    grid = SpectralGrid(64)
    problem = FlowProblem(0.05, grid, periodic_stirring_force(grid, 1.0, 4))
    config = ControllerConfig(delta=0.002, k_min=0.01, k_max=1.6)
    run = run_adaptive(problem, 0.5, config, 63.7)
    acc = run.accepted
    chi_ok = all(r.chi < config.delta or config.at_floor(r.k) for r in acc)
    body = acc[:-1] if run.final_clipped else acc
    band_ok = all(config.k_min <= r.k <= config.k_max for r in body)
    end_ok = abs(acc[-1].t - 63.7) <= 1e-9
    trap = run_adaptive(problem, 1.0, config, 63.7)
    ks = trap.steps
    grow_ok = (trap.n_rejected == 0 and bool(np.all(np.diff(ks[:-1]) >= 0))
               and max(ks) == config.k_max and ks[-2] == config.k_max)
    elapsed = time.perf_counter() - start
    ok = chi_ok and band_ok and end_ok and grow_ok and elapsed < 180
    record(7, ok, f"{len(acc)} accepted / {run.n_rejected} rejected; chi rule {chi_ok}, "
                  f"step band {band_ok}, theta=1 monotone to cap {grow_ok}, {elapsed:.1f}s")


SUBCOMMANDS = [
    ["convergence", "--theta", "0.5", "--n", "16", "--levels", "2"],
    ["stability-region", "--theta", "0.25", "--samples", "2000"],
    ["energy-compare", "--schedule", "sine", "--n", "16", "--T-final", "1.5",
     "--perturbation", "0.3", "--seed", "9"],
    ["adaptive", "--n", "16", "--T-final", "4", "--perturbation", "0.3", "--seed", "9"],
    ["g-identity-fuzz", "--samples", "5000", "--seed", "9"],
]


def test_criterion_8_determinism(tmp_path):
    mismatches, files = [], 0
    for args in SUBCOMMANDS:
        outs = [tmp_path / f"{args[0]}-{i}" for i in range(2)]
        for out in outs:
            assert main(args + ["--output-dir", str(out)]) == 0
        for first in sorted(outs[0].iterdir()):
            second = outs[1] / first.name
            if first.suffix == ".csv":
                same = csv_body(first) == csv_body(second)
            else:
                same = first.read_bytes() == second.read_bytes()
            files += 1
            if not same:
                mismatches.append(first.name)
    record(8, not mismatches and files >= 5,
           f"{files} output files compared across repeated runs, mismatches: {mismatches or 'none'}")
