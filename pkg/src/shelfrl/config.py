"""Run configuration: one INI file with a section per module."""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields, replace


@dataclass
class RunSection:
    agent: str = "a2c_mod"
    episodes: int = 600
    seed: int = None
    output_dir: str = "runs/default"
    initial_level: float = 0.5
    resample_orders: bool = False
    checkpoint_every: int = 50


@dataclass
class DataSection:
    orders_csv: str = ""
    metadata_csv: str = ""
    products: int = 220
    days: int = 349
    periods_per_day: int = 4
    train_periods: int = 900
    test_periods: int = 496
    tightness: float = 0.9
    outlier_prob: float = 0.01


@dataclass
class DynamicsSection:
    alpha: float = 0.5
    gamma: float = 0.99


@dataclass
class ForecastSection:
    window: int = 28


@dataclass
class AgentSection:
    n_actions: int = 21
    action_max: float = 1.0
    q: float = 2.0
    epsilon_floor: float = 0.05
    value_scale: float = None
    output_bias: float = 0.0
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_episodes: int = 100
    target_sync: int = 4
    x_star: float = 0.5


@dataclass
class SgdSection:
    learning_rate: float = 0.025
    momentum: float = 0.8
    batch_size: int = 32
    train_every: int = 32


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    data: DataSection = field(default_factory=DataSection)
    dynamics: DynamicsSection = field(default_factory=DynamicsSection)
    forecast: ForecastSection = field(default_factory=ForecastSection)
    agent: AgentSection = field(default_factory=AgentSection)
    sgd: SgdSection = field(default_factory=SgdSection)

    def validate(self) -> "RunConfig":
        from .agents import AGENTS

        if self.run.agent not in AGENTS:
            raise ValueError(f"unknown agent type {self.run.agent!r}")
        if self.run.seed is None:
            raise ValueError("a seed is required")
        if self.run.episodes < 1:
            raise ValueError("episodes must be at least 1")
        total = self.data.days * self.data.periods_per_day
        if not self.data.orders_csv and self.data.train_periods + self.data.test_periods != total:
            raise ValueError(
                f"train_periods + test_periods must equal {total} (days x periods_per_day)"
            )
        return self

    def agent_params(self) -> dict:
        """Keyword arguments for :func:`shelfrl.agents.make_agent`."""
        params = {f.name: getattr(self.agent, f.name) for f in fields(self.agent)}
        params.update({f.name: getattr(self.sgd, f.name) for f in fields(self.sgd)})
        params["gamma"] = self.dynamics.gamma
        params["random_state"] = self.run.seed
        return params

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for f in fields(self):
            section = getattr(self, f.name)
            cp[f.name] = {
                k.name: "" if getattr(section, k.name) is None else str(getattr(section, k.name))
                for k in fields(section)
            }
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def sha256(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        cfg = cls()
        for f in fields(cls):
            if f.name not in cp:
                continue
            section = getattr(cfg, f.name)
            known = {k.name: k for k in fields(section)}
            for key, raw in cp[f.name].items():
                if key not in known:
                    raise ValueError(f"unknown option [{f.name}] {key}")
                setattr(section, key, _coerce(getattr(type(section)(), key), raw, key))
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_ini(fh.read())

    def override(self, section: str, **values) -> "RunConfig":
        current = getattr(self, section)
        return replace(self, **{section: replace(current, **values)})


def _coerce(default, raw: str, key: str):
    raw = raw.strip()
    if raw == "":
        return None if default is None else default
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float) or default is None:
        try:
            number = float(raw)
        except ValueError:
            raise ValueError(f"{key}: expected a number, got {raw!r}") from None
        if default is None and key == "seed":
            return int(number)
        return number
    return raw


def desk_config(seed: int = 7, output_dir: str = "runs/desk") -> RunConfig:
    """The bundled small synthetic instance used by the acceptance suite.

    Capacity is looser than the full-scale default and the agent is tuned for
    150 short episodes: a finer action grid capped at 0.3, a shorter horizon
    and a larger step size.
    """
    cfg = RunConfig()
    cfg.run = replace(cfg.run, episodes=150, seed=seed, output_dir=output_dir)
    cfg.data = replace(
        cfg.data, products=20, days=125, train_periods=400, test_periods=100, tightness=1.2
    )
    cfg.dynamics = replace(cfg.dynamics, gamma=0.5)
    cfg.agent = replace(cfg.agent, action_max=0.3, value_scale=3.0, output_bias=0.05)
    cfg.sgd = replace(cfg.sgd, learning_rate=0.1)
    return cfg

