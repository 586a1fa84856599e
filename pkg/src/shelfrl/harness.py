"""Training and evaluation runs, checkpoints, metrics and plot data."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .agents import AGENTS, ActionGrid, HeuristicAgent, make_agent
from .config import RunConfig
from .data import (
    GeneratorConfig,
    OrderLog,
    SplitConfig,
    assign_metadata,
    calibrate_capacity,
    generate_metadata,
    generate_orders,
    ingest_csv,
    read_metadata_csv,
    split,
)
from .dynamics import CapacityConfig, ProductCatalog
from .env import EpisodeMetrics, InventoryEnv, run_episode
from .features import FEATURE_NAMES
from .forecasting import TrailingAverageForecaster, shelf_life_statistic
from .nn import load_weights, save_weights

log = logging.getLogger(__name__)

METRIC_COLUMNS = ["episode"] + [f.name for f in fields(EpisodeMetrics)]
COMPONENT_COLUMNS = [
    "episode",
    "business_reward",
    "internal_reward",
    "stockout",
    "wastage",
    "spread",
    "mean_rho",
]


class RunError(RuntimeError):
    pass


@dataclass
class Instance:
    """Everything an environment needs, derived from a config."""

    catalog: ProductCatalog
    capacity: CapacityConfig
    train_orders: np.ndarray
    test_orders: np.ndarray
    shelf_capacity: np.ndarray
    feature_means: np.ndarray

    def train_env(self, config: RunConfig, orders=None) -> InventoryEnv:
        return InventoryEnv(
            self.catalog,
            self.capacity,
            self.train_orders if orders is None else orders,
            initial_level=config.run.initial_level,
            window=config.forecast.window,
        )

    def test_env(self, config: RunConfig) -> InventoryEnv:
        return InventoryEnv(
            self.catalog,
            self.capacity,
            self.test_orders,
            initial_level=config.run.initial_level,
            window=config.forecast.window,
            warm_history=self.train_orders,
        )


def generator_config(config: RunConfig, seed=None) -> GeneratorConfig:
    d = config.data
    return GeneratorConfig(
        products=d.products,
        days=d.days,
        periods_per_day=d.periods_per_day,
        outlier_prob=d.outlier_prob,
        seed=config.run.seed if seed is None else seed,
    )


def load_orders(config: RunConfig):
    """Returns ``(order log, metadata rows)`` from CSVs or the generator."""
    d = config.data
    if d.orders_csv:
        order_log = ingest_csv(d.orders_csv, seed=config.run.seed, periods_per_day=d.periods_per_day)
        if not d.metadata_csv:
            raise RunError("orders_csv needs a matching metadata_csv")
        rows = read_metadata_csv(d.metadata_csv)
        return order_log, rows
    gen = generator_config(config)
    order_log = generate_orders(gen)
    if d.metadata_csv:
        rows = read_metadata_csv(d.metadata_csv)
    else:
        rows = generate_metadata(order_log.product_ids, gen.rates(), seed=config.run.seed)
    return order_log, rows


def build_instance(config: RunConfig) -> Instance:
    """Load data, split it, and freeze the training-set statistics."""
    order_log, rows = load_orders(config)
    d = config.data
    train_periods = d.train_periods
    test_periods = order_log.n_periods - train_periods if d.orders_csv else d.test_periods
    train_log, test_log = split(order_log, SplitConfig(train_periods, test_periods))
    catalog, shelf = assign_metadata(order_log.product_ids, rows)
    W_train = train_log.normalized(shelf)
    W_test = test_log.normalized(shelf)
    capacity = calibrate_capacity(
        W_train, catalog, d.tightness, config.dynamics.alpha, config.dynamics.gamma
    )
    sigma = TrailingAverageForecaster(config.forecast.window).fit(W_train).forecast_error_std_
    catalog = catalog.with_statistics(forecast_error_std=sigma)

    # calibration pass with the heuristic: observed spoilage and feature means
    env = InventoryEnv(catalog, capacity, W_train, config.run.initial_level, config.forecast.window)
    losses, feats = _observe_rollout(env, HeuristicAgent(config.agent.x_star))
    catalog = catalog.with_statistics(shelf_life=shelf_life_statistic(losses))
    feats[:, FEATURE_NAMES.index("shelf_life")] = np.tile(catalog.shelf_life, len(feats) // catalog.p)
    return Instance(catalog, capacity, W_train, W_test, shelf, feats.mean(axis=0))


def _observe_rollout(env: InventoryEnv, agent):
    s = env.reset()
    losses, feats = [], []
    done = False
    while not done:
        feats.append(s)
        _, u = agent.act(s)
        s, _, done, info = env.step(u)
        losses.append(info["outcome"].waste)
    return np.array(losses), np.vstack(feats)


# -- checkpoints -----------------------------------------------------------


def save_checkpoint(path, agent, kind: str, instance: Instance, config: RunConfig):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    params = agent.get_params()
    meta = {
        "agent": kind,
        "params": params,
        "episodes_seen": getattr(agent, "episodes_seen_", 0),
        "sweeps": getattr(agent, "sweeps_", 0),
        "grid": agent.grid_.values.tolist() if hasattr(agent, "grid_") else None,
        "networks": sorted(agent.networks()),
    }
    (path / "agent.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    for name, net in agent.networks().items():
        (path / f"{name}.bin").write_bytes(save_weights(net))
    cat = instance.catalog
    stats = {
        "product_ids": list(cat.product_ids),
        "forecast_error_std": cat.forecast_error_std.tolist(),
        "shelf_life": cat.shelf_life.tolist(),
        "feature_means": instance.feature_means.tolist(),
        "v_max": instance.capacity.v_max,
        "c_max": instance.capacity.c_max,
    }
    (path / "stats.json").write_text(json.dumps(stats, indent=2))
    (path / "config.ini").write_text(config.to_ini())


def load_checkpoint(path):
    """Returns ``(agent, kind, stats, config)``."""
    path = Path(path)
    if not (path / "agent.json").exists():
        raise RunError(f"no checkpoint at {path}")
    meta = json.loads((path / "agent.json").read_text())
    kind = meta["agent"]
    agent = AGENTS[kind](**meta["params"])
    if kind != "heuristic":
        agent.initialize()
        for name in meta["networks"]:
            loaded = load_weights((path / f"{name}.bin").read_bytes())
            getattr(agent, f"{name}_").copy_weights_from(loaded)
        agent.episodes_seen_ = meta["episodes_seen"]
        agent.sweeps_ = meta["sweeps"]
        if meta["grid"] is not None:
            agent.grid_ = ActionGrid(meta["grid"])
    stats = json.loads((path / "stats.json").read_text())
    config = RunConfig.from_ini((path / "config.ini").read_text())
    return agent, kind, stats, config


def _check_stats(stats, instance: Instance):
    cat = instance.catalog
    same = (
        stats["product_ids"] == list(cat.product_ids)
        and np.allclose(stats["forecast_error_std"], cat.forecast_error_std, rtol=0, atol=1e-12)
        and np.allclose(stats["shelf_life"], cat.shelf_life, rtol=0, atol=1e-12)
        and np.isclose(stats["v_max"], instance.capacity.v_max, rtol=1e-12)
        and np.isclose(stats["c_max"], instance.capacity.c_max, rtol=1e-12)
    )
    if not same:
        raise RunError("checkpoint was trained on a different catalog or capacity")


# -- runs ------------------------------------------------------------------


def _fmt(value):
    return repr(float(value)) if isinstance(value, float) else str(value)


def write_metrics_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_COLUMNS)
        for episode, m in rows:
            d = m.as_dict()
            w.writerow([episode] + [_fmt(d[c]) for c in METRIC_COLUMNS[1:]])


def read_metrics_csv(path):
    with open(path, newline="") as fh:
        return [
            {k: (int(v) if k in ("episode", "capacity_violations", "periods") else float(v)) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]


def run_training(config: RunConfig, instance: Instance = None) -> Path:
    """Train the configured agent and write metrics, checkpoints and a manifest.

    Any module error is re-raised as :class:`RunError` naming the episode.
    """
    config.validate()
    out = Path(config.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if instance is None:
        instance = build_instance(config)
    kind = config.run.agent
    agent = make_agent(kind, **config.agent_params())
    if hasattr(agent, "initialize"):
        agent.initialize()
    env = instance.train_env(config)
    rows = []
    base_rates = generator_config(config).rates()

    for ep in range(config.run.episodes):
        if config.run.resample_orders and not config.data.orders_csv:
            gen = generator_config(config, seed=config.run.seed * 100003 + ep + 1)
            gen.base_rate = base_rates
            fresh = generate_orders(gen).normalized(instance.shelf_capacity)
            env = instance.train_env(config, fresh[: len(instance.train_orders)])
        try:
            m = run_episode(env, agent, learn=kind != "heuristic")
        except Exception as exc:
            period = env.state.period if env.state is not None else 0
            raise RunError(f"episode {ep}, period {period}: {exc}") from exc
        rows.append((ep, m))
        log.info("episode %d business %.4f internal %.4f rho %.3f", ep, m.business_reward, m.internal_reward, m.mean_rho)
        if config.run.checkpoint_every and (ep + 1) % config.run.checkpoint_every == 0:
            save_checkpoint(out / "checkpoints" / f"ep{ep + 1:05d}", agent, kind, instance, config)

    save_checkpoint(out / "checkpoints" / "final", agent, kind, instance, config)
    write_metrics_csv(out / "metrics.csv", rows)
    (out / "config.ini").write_text(config.to_ini())
    manifest = {
        "agent": kind,
        "seed": config.run.seed,
        "episodes": config.run.episodes,
        "config_sha256": config.sha256(),
        "code_version": __version__,
        "n_params": getattr(agent, "n_params_", 0),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return out


def _resolve_checkpoint(path) -> Path:
    path = Path(path)
    if (path / "agent.json").exists():
        return path
    if (path / "checkpoints" / "final" / "agent.json").exists():
        return path / "checkpoints" / "final"
    raise RunError(f"no checkpoint found under {path}")


def run_evaluation(checkpoint, instance: Instance = None) -> EpisodeMetrics:
    """Greedy rollout over the test split without any learning."""
    agent, kind, stats, config = load_checkpoint(_resolve_checkpoint(checkpoint))
    if instance is None:
        instance = build_instance(config)
    _check_stats(stats, instance)
    return run_episode(instance.test_env(config), agent, learn=False, explore=False)


def emit_heatmaps(checkpoint, resolution: int = 11, out_dir=None):
    """Critic value and greedy replenishment over an (inventory, forecast) grid.

    The other six features are held at their training-set means. Returns the
    two output paths (the critic file is omitted for the heuristic).
    """
    ckpt = _resolve_checkpoint(checkpoint)
    agent, kind, stats, _ = load_checkpoint(ckpt)
    out_dir = Path(out_dir) if out_dir is not None else ckpt
    grid = np.linspace(0.0, 1.0, resolution)
    means = np.asarray(stats["feature_means"], dtype=np.float64)
    inv, fc = np.meshgrid(grid, grid, indexing="ij")
    F = np.tile(means, (inv.size, 1))
    F[:, 0] = inv.ravel()
    F[:, 1] = fc.ravel()
    replen = agent.predict(F)
    paths = {}
    policy_path = out_dir / "policy_heatmap.csv"
    _write_grid(policy_path, F, "replenishment", replen)
    paths["policy"] = policy_path
    if hasattr(agent, "value"):
        critic_path = out_dir / "critic_heatmap.csv"
        _write_grid(critic_path, F, "value", agent.value(F))
        paths["critic"] = critic_path
    return paths


def _write_grid(path, F, name, values):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["inventory", "forecast", name])
        for row, v in zip(F, values):
            w.writerow([_fmt(row[0]), _fmt(row[1]), _fmt(float(v))])


def emit_reward_components(run_dir) -> Path:
    """Per-episode reward components sufficient to redraw the training curves."""
    run_dir = Path(run_dir)
    src = run_dir / "metrics.csv"
    if not src.exists():
        raise RunError(f"no metrics.csv in {run_dir}")
    rows = read_metrics_csv(src)
    out = run_dir / "reward_components.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COMPONENT_COLUMNS)
        for r in rows:
            w.writerow([r["episode"]] + [_fmt(r[c]) for c in COMPONENT_COLUMNS[1:]])
    return out


def write_orders_for(order_log: OrderLog, rows, out_dir):
    """Write an order log and its metadata in the documented CSV schemas."""
    from .data import write_metadata_csv, write_orders_csv

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_orders_csv(order_log, out_dir / "orders.csv")
    write_metadata_csv(rows, out_dir / "metadata.csv")
    return out_dir / "orders.csv", out_dir / "metadata.csv"
