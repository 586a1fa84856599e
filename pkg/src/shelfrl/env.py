"""Gym-style environment wrapping the dynamics, and the episode rollout loop."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dynamics import (
    CapacityConfig,
    InventoryState,
    ProductCatalog,
    apply_replenishment,
    compute_rho,
    is_feasible,
    per_product_rewards,
    percentile_spread,
    project_actions,
    propagate_period,
    system_reward,
)
from .features import build_features
from .forecasting import DEFAULT_WINDOW, OrderHistory, forecast


class InfeasibleActionError(RuntimeError):
    pass


class InventoryEnv:
    """Replays a fixed order matrix (periods x products, normalized units).

    ``warm_history`` holds order rows that precede the first period; they
    seed the forecaster so evaluation does not start cold.
    """

    def __init__(
        self,
        catalog: ProductCatalog,
        capacity: CapacityConfig,
        orders,
        initial_level=0.5,
        window: int = DEFAULT_WINDOW,
        warm_history=None,
    ):
        W = np.asarray(orders, dtype=np.float64)
        if W.ndim != 2 or W.shape[1] != catalog.p:
            raise ValueError(f"orders must have shape (periods, {catalog.p})")
        if np.any(W < 0) or not np.all(np.isfinite(W)):
            raise ValueError("orders must be finite and non-negative")
        self.catalog = catalog
        self.capacity = capacity
        self.orders = W
        self.initial_level = initial_level
        self.window = window
        self.warm_history = None if warm_history is None else np.asarray(warm_history, dtype=np.float64)
        self.history = OrderHistory(catalog.p, window)
        self.state = None

    @property
    def n_periods(self) -> int:
        return self.orders.shape[0]

    @property
    def p(self) -> int:
        return self.catalog.p

    def observe(self) -> np.ndarray:
        snap = forecast(self.history, self.catalog.unit_volume, self.catalog.unit_weight)
        return build_features(self.state.levels, snap, self.catalog, self.capacity)

    def reset(self, initial_levels=None) -> np.ndarray:
        level = self.initial_level if initial_levels is None else initial_levels
        x0 = np.broadcast_to(np.asarray(level, dtype=np.float64), (self.p,)).copy()
        self.state = InventoryState(x0, 0)
        self.history.clear()
        if self.warm_history is not None and len(self.warm_history):
            self.history.extend(self.warm_history[-self.window:])
        return self.observe()

    def step(self, desired):
        """Project, replenish and propagate one period.

        Returns ``(features, rewards, done, info)`` where ``rewards`` is the
        per-product reward vector and ``info["system_reward"]`` the business
        reward of the period.
        """
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        t = self.state.period
        if t >= self.n_periods:
            raise RuntimeError("episode already finished")
        u = np.asarray(desired, dtype=np.float64)
        rho = compute_rho(u, self.catalog, self.capacity)
        u_con = project_actions(u, self.state, self.catalog, self.capacity)
        if not is_feasible(u_con, self.state, self.catalog, self.capacity):
            raise InfeasibleActionError(f"projected action infeasible at period {t}")
        plus = apply_replenishment(self.state, u_con)
        W = self.orders[t]
        outcome = propagate_period(plus, W, self.catalog)
        rewards = per_product_rewards(outcome, rho=rho, alpha=self.capacity.alpha)
        r_sys = system_reward(outcome)
        self.history.update(W)
        self.state = InventoryState(outcome.end_levels, t + 1)
        done = self.state.period >= self.n_periods
        info = {
            "period": t,
            "outcome": outcome,
            "rho": rho,
            "u_con": u_con,
            "system_reward": r_sys,
            "spread": percentile_spread(outcome.end_levels),
        }
        return self.observe(), rewards, done, info


@dataclass
class EpisodeMetrics:
    business_reward: float
    internal_reward: float
    mean_rho: float
    stockout: float
    wastage: float
    wastage_total: float
    spread: float
    mean_inventory: float
    capacity_violations: int
    periods: int

    def as_dict(self):
        return asdict(self)


def run_episode(env: InventoryEnv, agent, learn: bool = False, explore: bool = None, initial_levels=None) -> EpisodeMetrics:
    """Roll one episode through ``env`` with ``agent``.

    ``explore`` defaults to ``learn``. Every executed action is checked
    against the capacity constraints; violations are counted, and the
    environment raises before an infeasible action is applied.
    """
    if explore is None:
        explore = learn
    s = env.reset(initial_levels)
    n = env.n_periods
    business = np.empty(n)
    internal = np.empty(n)
    rhos = np.empty(n)
    stockout = np.empty(n)
    waste = np.empty(n)
    spread = np.empty(n)
    level = np.empty(n)
    violations = 0
    p = env.p
    cap = env.capacity
    for k in range(n):
        j, u = agent.act(s, explore=explore)
        x_before = env.state
        s_next, rewards, done, info = env.step(u)
        if not is_feasible(info["u_con"], x_before, env.catalog, cap):
            violations += 1
        out = info["outcome"]
        business[k] = info["system_reward"]
        internal[k] = rewards.mean()
        rhos[k] = info["rho"]
        stockout[k] = np.count_nonzero(out.empty_flags) / p
        waste[k] = out.waste.sum() / p
        spread[k] = info["spread"]
        level[k] = out.end_levels.mean()
        if learn:
            agent.observe(s, j, rewards, s_next, done)
        s = s_next
    if learn:
        agent.end_episode()
    return EpisodeMetrics(
        business_reward=float(business.mean()),
        internal_reward=float(internal.mean()),
        mean_rho=float(rhos.mean()),
        stockout=float(stockout.mean()),
        wastage=float(waste.mean()),
        wastage_total=float(waste.sum() * p),
        spread=float(spread.mean()),
        mean_inventory=float(level.mean()),
        capacity_violations=violations,
        periods=n,
    )
