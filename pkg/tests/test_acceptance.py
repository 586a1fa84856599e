"""Acceptance criteria 1-11 at their stated tolerances.

Each test records a PASS/FAIL line that is printed in the terminal summary.
The desk-scale training run is shared by criteria 7, 8, 9 and 11.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

import conftest
from oracles import euler_period, smoothed_target_fraction
from shelfrl.agents import HeuristicAgent, make_agent, smoothed_target
from shelfrl.config import desk_config
from shelfrl.dynamics import (
    CapacityConfig,
    InventoryState,
    PeriodOutcome,
    is_feasible,
    per_product_rewards,
    project_actions,
    propagate_period,
    system_reward,
)
from shelfrl.env import run_episode
from shelfrl.harness import build_instance, read_metrics_csv, run_evaluation, run_training
from shelfrl.nn import DenseNet, gradient_check

from conftest import make_catalog


def record(n, ok, detail):
    conftest.ACCEPTANCE_LINES.append(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# -- 1..6: exact properties --------------------------------------------------


def test_criterion_01_dynamics_match_euler():
    rng = np.random.default_rng(101)
    n = 1000
    a = rng.uniform(0.0, 0.5, n)
    x = rng.uniform(0.0, 1.0, n)
    W = rng.uniform(0.0, 1.0, n)
    t0 = time.perf_counter()
    end, served, waste = euler_period(a, x, W, dt=1e-6)
    out = propagate_period(InventoryState(x), W, make_catalog(n, a=a))
    elapsed = time.perf_counter() - t0
    err = max(
        np.abs(out.end_levels - end).max(),
        np.abs(out.served - served).max(),
        np.abs(out.waste - waste).max(),
    )
    stockouts = int(np.count_nonzero(end <= 0))
    ok = err <= 1e-4 and elapsed < 60 and stockouts > 0
    record(1, ok, f"max abs error {err:.2e} on {n} cases ({stockouts} stockouts), {elapsed:.1f}s")


def test_criterion_02_mass_balance():
    rng = np.random.default_rng(102)
    n = 10_000
    x = rng.uniform(0, 1, n)
    out = propagate_period(InventoryState(x), rng.uniform(0, 1, n), make_catalog(n, a=rng.uniform(0, 0.5, n)))
    resid = np.abs(x - out.end_levels - out.served - out.waste).max()
    record(2, resid <= 1e-9, f"max residual {resid:.2e} over {n} periods")


def test_criterion_03_projection_feasible_and_idempotent():
    rng = np.random.default_rng(103)
    p = 50
    worst_bad = 0
    not_idem = 0
    for _ in range(10_000):
        catalog = make_catalog(p, v=rng.uniform(0.1, 3, p), c=rng.uniform(0.1, 3, p))
        cap = CapacityConfig(rng.uniform(0.5, 20), rng.uniform(0.5, 20), 0.5, 0.99)
        state = InventoryState(rng.uniform(0, 1, p))
        u = rng.uniform(0, 1.5, p) * (rng.random(p) < 0.8)
        u_con = project_actions(u, state, catalog, cap)
        if not is_feasible(u_con, state, catalog, cap, rtol=1e-12):
            worst_bad += 1
        if not np.allclose(project_actions(u_con, state, catalog, cap), u_con, rtol=1e-12, atol=0):
            not_idem += 1
    record(3, worst_bad == 0 and not_idem == 0, f"{worst_bad} infeasible, {not_idem} non-idempotent of 10000 (p={p})")


def test_criterion_04_reward_equivalence():
    rng = np.random.default_rng(104)
    worst = 0.0
    for _ in range(1000):
        p = int(rng.integers(2, 60))
        end = rng.uniform(0, 1, p) * (rng.random(p) < 0.9)
        out = PeriodOutcome(
            end.copy(), end, np.zeros(p), rng.uniform(0, 0.2, p), np.zeros(p), end <= rng.uniform(0, 0.2, p)
        )
        rho = rng.uniform(0, 1)
        r = per_product_rewards(out, rho=rho, alpha=rng.uniform(0, 5))
        worst = max(worst, abs(r.mean() - system_reward(out)))
    record(4, worst <= 1e-12, f"max |mean per-product - system| = {worst:.1e}")


def test_criterion_05_gradient_checks():
    rng = np.random.default_rng(105)
    t0 = time.perf_counter()
    worst = {"mse": 0.0, "ace": 0.0}
    for k in range(20):
        n = int(rng.integers(3, 12))
        X = rng.normal(size=(5, 8))
        if k % 2:
            net = DenseNet([8, 4, 1], ["tanh", "tanh"], rng=rng)
            T = rng.uniform(-1, 1, (5, 1))
        else:
            net = DenseNet([8, 2 * n, 2 * n, n], ["tanh", "tanh", "relu"], rng=rng)
            net.biases[-1][...] = rng.uniform(0.05, 0.2, n)
            T = rng.dirichlet(np.ones(n), 5)
        worst["mse"] = max(worst["mse"], gradient_check(net, X, T, "mse"))
        net = DenseNet([8, 2 * n, 2 * n, n], ["tanh", "tanh", "linear"], rng=rng)
        T = np.zeros((5, n))
        T[np.arange(5), rng.integers(0, n, 5)] = rng.normal(size=5)
        worst["ace"] = max(worst["ace"], gradient_check(net, X, T, "ace"))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and elapsed < 60
    record(5, ok, f"worst error mse {worst['mse']:.1e}, ace {worst['ace']:.1e} on 20 nets each, {elapsed:.1f}s")


def test_criterion_06_smoothed_target_pinned():
    got = smoothed_target(np.full(5, 0.2), 2, 0.1, q=2.0)
    exact = np.array([float(v) for v in smoothed_target_fraction([Fraction(1, 5)] * 5, 2, Fraction(1, 10), Fraction(2))])
    err = np.abs(got - exact).max()
    ok = err <= 1e-12 and abs(got.sum() - 1) <= 1e-12 and np.all(got >= 0)
    record(6, ok, f"max deviation from rational oracle {err:.1e}, sum {got.sum():.15f}")


# -- 7..11: desk-scale training --------------------------------------------


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    base = tmp_path_factory.mktemp("desk")
    cfg = desk_config(seed=7, output_dir=str(base / "a2c"))
    instance = build_instance(cfg)
    t0 = time.perf_counter()
    run = run_training(cfg, instance)
    elapsed = time.perf_counter() - t0
    heuristic = run_episode(instance.test_env(cfg), HeuristicAgent(cfg.agent.x_star))
    return dict(cfg=cfg, instance=instance, run=run, elapsed=elapsed, heuristic=heuristic, base=base)


def test_criterion_07_a2c_beats_heuristic(desk):
    test = run_evaluation(desk["run"], desk["instance"])
    margin = test.business_reward - desk["heuristic"].business_reward
    detail = (
        f"A2C_mod test {test.business_reward:.4f} vs heuristic {desk['heuristic'].business_reward:.4f}, "
        f"margin {margin:+.4f} (need >= +0.03), training {desk['elapsed']:.0f}s"
    )
    record(7, margin >= 0.03 and desk["elapsed"] < 900, detail)


def test_criterion_08_capacity_gap_shrinks(desk):
    rows = read_metrics_csv(desk["run"] / "metrics.csv")
    gap = np.array([r["business_reward"] - r["internal_reward"] for r in rows])
    first, last = gap[:20].mean(), gap[-20:].mean()
    ratio = last / first
    record(8, ratio <= 0.25, f"business-internal gap first 20 {first:.4f}, last 20 {last:.4f}, ratio {ratio:.3f} (need <= 0.25)")


def test_criterion_09_no_constraint_violations(desk):
    rows = read_metrics_csv(desk["run"] / "metrics.csv")
    count = sum(r["capacity_violations"] for r in rows)
    periods = sum(r["periods"] for r in rows)
    record(9, count == 0, f"{count} violating periods of {periods}")


def test_criterion_10_parameter_count_independent_of_p():
    counts = {}
    for p in (20, 220):
        agent = make_agent("a2c_mod", random_state=0).initialize()
        agent.predict(np.random.default_rng(p).random((p, 8)))
        counts[p] = agent.n_params_
    record(10, counts[20] == counts[220], f"parameters at p=20: {counts[20]}, p=220: {counts[220]}")


def test_criterion_11_determinism(desk):
    cfg = desk["cfg"].override("run", output_dir=str(desk["base"] / "a2c_repeat"))
    again = run_training(cfg, build_instance(cfg))
    same = (again / "metrics.csv").read_bytes() == (desk["run"] / "metrics.csv").read_bytes()
    record(11, same, "repeated desk run metrics CSV " + ("bit-identical" if same else "differs"))


def test_dqn_ordering_is_reported(desk):
    """Not binding: DQN vs A2C_mod on test reward is printed, never asserted."""
    cfg = desk["cfg"].override("run", agent="dqn", output_dir=str(desk["base"] / "dqn"))
    dqn = run_evaluation(run_training(cfg, desk["instance"]), desk["instance"])
    a2c = run_evaluation(desk["run"], desk["instance"])
    order = ">=" if dqn.business_reward >= a2c.business_reward else "<"
    conftest.ACCEPTANCE_LINES.append(
        f"qualitative check: INFO  (non-binding) DQN test {dqn.business_reward:.4f} {order} A2C_mod {a2c.business_reward:.4f}"
    )


def test_initial_inventory_invariance(desk):
    cfg = desk["cfg"].override("run", initial_level=0.2, output_dir=str(desk["base"] / "a2c_low_start"))
    low = read_metrics_csv(run_training(cfg, desk["instance"]) / "metrics.csv")
    base = read_metrics_csv(desk["run"] / "metrics.csv")
    a = np.mean([r["business_reward"] for r in base[-50:]])
    b = np.mean([r["business_reward"] for r in low[-50:]])
    line = f"final-50 business reward from x0=0.5 {a:.4f}, from x0=0.2 {b:.4f}, difference {abs(a - b):.4f}"
    conftest.ACCEPTANCE_LINES.append(f"invariant initial-state: {'PASS' if abs(a - b) <= 0.02 else 'FAIL'}  {line}")
    assert abs(a - b) <= 0.02, line
