"""Per-product replenishment agents sharing one set of weights across products.

Every agent maps the ``(p, 8)`` feature matrix of a period to a desired
replenishment per product. The neural agents follow the scikit-learn
estimator conventions: constructor arguments are hyperparameters only,
``fit`` learns from an :class:`~shelfrl.env.InventoryEnv`, and learned state
lives in attributes with a trailing underscore.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .env import run_episode
from .features import N_FEATURES
from .nn import DenseNet, SgdConfig, softmax


@dataclass(frozen=True)
class ActionGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("action grid must be a non-empty vector")
        if np.any(np.diff(v) <= 0):
            raise ValueError("action grid must be strictly increasing")
        if v[0] < 0 or v[-1] > 1:
            raise ValueError("action grid values must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    @classmethod
    def uniform(cls, n: int = 21, upper: float = 1.0) -> "ActionGrid":
        if n == 1:
            return cls(np.array([0.0]))
        return cls(np.linspace(0.0, upper, n))

    @property
    def n(self) -> int:
        return self.values.size


class ExperienceBuffer:
    """One record per product per period, flushed after each training sweep."""

    def __init__(self, periods: int = 32):
        self.periods = periods
        self.clear()

    def clear(self):
        self._s, self._j, self._r, self._s2, self._done = [], [], [], [], []

    def __len__(self):
        return sum(len(j) for j in self._j)

    @property
    def n_periods(self) -> int:
        return len(self._j)

    @property
    def full(self) -> bool:
        return self.n_periods >= self.periods

    def add_period(self, s, j, r, s_next, done=False):
        s = np.asarray(s, dtype=np.float64)
        p = s.shape[0]
        self._s.append(s)
        self._j.append(np.asarray(j, dtype=np.int64).reshape(p))
        self._r.append(np.broadcast_to(np.asarray(r, dtype=np.float64), (p,)).copy())
        self._s2.append(np.asarray(s_next, dtype=np.float64))
        self._done.append(np.full(p, bool(done)))

    def arrays(self):
        return (
            np.concatenate(self._s),
            np.concatenate(self._j),
            np.concatenate(self._r),
            np.concatenate(self._s2),
            np.concatenate(self._done),
        )


def normalize_activations(a, epsilon: float = 0.0) -> np.ndarray:
    """Turn non-negative activations into a distribution, row-wise.

    All-zero rows become uniform. ``epsilon`` mixes in that much of the
    uniform distribution as an exploration floor.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    n = a.shape[1]
    total = a.sum(axis=1, keepdims=True)
    probs = np.where(total > 0, a / np.where(total > 0, total, 1.0), 1.0 / n)
    if epsilon:
        probs = (1.0 - epsilon) * probs + epsilon / n
    return probs


def _sample_rows(probs, rng) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    u = rng.random((probs.shape[0], 1)) * cdf[:, -1:]
    return np.minimum((u >= cdf).sum(axis=1), probs.shape[1] - 1)


def act_from_distribution(probs, grid: ActionGrid, greedy: bool, rng=None):
    """Greedy takes the lowest index among ties; otherwise sample."""
    probs = np.atleast_2d(probs)
    if greedy:
        j = np.argmax(probs, axis=1)
    else:
        j = _sample_rows(probs, rng)
    return j, grid.values[j]


def act_a2c(actor: DenseNet, features, grid: ActionGrid, mode="greedy", rng=None, epsilon: float = 0.0):
    probs = normalize_activations(actor.forward(np.atleast_2d(features)), epsilon)
    return act_from_distribution(probs, grid, mode == "greedy", rng)


def smoothing_kernel(n: int, j, q: float = 1.0) -> np.ndarray:
    """Weights ``1 / (q (|j - k| + 1))`` for every action ``k``; row per entry of ``j``."""
    j = np.atleast_1d(np.asarray(j))
    dist = np.abs(np.arange(n)[None, :] - j[:, None])
    return 1.0 / (q * (dist + 1.0))


def smoothed_target(activations, j, delta, q: float = 2.0) -> np.ndarray:
    """Actor training target: add the distance-decayed advantage, clamp, renormalize.

    Works on a single vector or row-wise on a batch.
    """
    a = np.asarray(activations, dtype=np.float64)
    single = a.ndim == 1
    a = np.atleast_2d(a)
    if q <= 0:
        raise ValueError("q must be positive")
    delta = np.broadcast_to(np.asarray(delta, dtype=np.float64), (a.shape[0],))
    target = a + delta[:, None] * smoothing_kernel(a.shape[1], j, q)
    target = np.maximum(target, 0.0)
    target = normalize_activations(target)
    return target[0] if single else target


def td0_advantage(v_s, reward, v_next, gamma: float, terminal=False):
    """One-step temporal-difference residual ``r + gamma V(s') - V(s)``."""
    return reward + gamma * v_next * (1.0 - np.asarray(terminal, dtype=np.float64)) - v_s


def act_heuristic(x, w_hat, x_star=0.5) -> np.ndarray:
    """Proportional control toward the target level plus expected depletion."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(0.0, np.asarray(x_star, dtype=np.float64) + np.asarray(w_hat, dtype=np.float64) - x)


def _check_features(features):
    return check_array(features, dtype=np.float64, ensure_min_samples=1)


class HeuristicAgent(BaseEstimator):
    """Proportional-control baseline; has nothing to learn."""

    def __init__(self, x_star=0.5):
        self.x_star = x_star

    def fit(self, env=None, n_episodes: int = 0, callback=None):
        self.history_ = []
        if env is not None:
            for ep in range(n_episodes):
                m = run_episode(env, self, learn=False)
                self.history_.append(m)
                if callback is not None:
                    callback(ep, m, self)
        return self

    def predict(self, features):
        F = _check_features(features)
        return act_heuristic(F[:, 0], F[:, 1], self.x_star)

    def act(self, features, explore=False):
        return None, self.predict(features)

    def observe(self, *args, **kwargs):
        pass

    def end_episode(self):
        pass

    def networks(self):
        return {}


class _NeuralAgent(BaseEstimator):
    """Shared plumbing: action grid, buffering, SGD config, rng, fit loop."""

    def _value_scale(self):
        if self.value_scale is not None:
            return float(self.value_scale)
        return 1.0 / (1.0 - self.gamma)

    def _sgd(self):
        return SgdConfig(self.learning_rate, self.momentum, self.batch_size)

    def initialize(self):
        """Create fresh networks and optimizer state from ``random_state``."""
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if self.q <= 0:
            raise ValueError("q must be positive")
        self.rng_ = np.random.default_rng(self.random_state)
        self.grid_ = ActionGrid.uniform(self.n_actions, self.action_max)
        self.buffer_ = ExperienceBuffer(self.train_every)
        self.episodes_seen_ = 0
        self.sweeps_ = 0
        self.losses_ = []
        self._build_networks()
        return self

    def _ensure_initialized(self):
        if not hasattr(self, "rng_"):
            self.initialize()

    @property
    def n_params_(self) -> int:
        return sum(net.n_params for net in self.networks().values())

    def fit(self, env, n_episodes: int = 1, callback=None):
        """Train for ``n_episodes`` passes over ``env``'s order stream."""
        self._ensure_initialized()
        self.history_ = getattr(self, "history_", [])
        for _ in range(n_episodes):
            m = run_episode(env, self, learn=True)
            self.history_.append(m)
            if callback is not None:
                callback(len(self.history_) - 1, m, self)
        return self

    def predict(self, features):
        check_is_fitted(self, "grid_")
        return self.act(_check_features(features), explore=False)[1]

    def observe(self, s, j, rewards, s_next, done=False):
        self.buffer_.add_period(s, j, rewards, s_next, done)
        if self.buffer_.full:
            self.train_sweep()

    def end_episode(self):
        self.episodes_seen_ += 1

    def _minibatches(self, size):
        order = self.rng_.permutation(size)
        for start in range(0, size, self.batch_size):
            yield order[start : start + self.batch_size]

    def train_sweep(self):
        """Train on the buffered samples in shuffled minibatches, then flush."""
        if self.buffer_.n_periods == 0:
            return None
        S, J, R, S2, D = self.buffer_.arrays()
        totals = np.zeros(2)
        batches = 0
        for idx in self._minibatches(J.size):
            totals += self._train_minibatch(S[idx], J[idx], R[idx], S2[idx], D[idx])
            batches += 1
        self.buffer_.clear()
        self.sweeps_ += 1
        self._after_sweep()
        losses = tuple(totals / max(batches, 1))
        self.losses_.append(losses)
        return losses

    def _after_sweep(self):
        pass


class _ActorCritic(_NeuralAgent):
    def __init__(
        self,
        n_actions=21,
        action_max=1.0,
        q=2.0,
        gamma=0.99,
        learning_rate=0.025,
        momentum=0.8,
        batch_size=32,
        train_every=32,
        epsilon_floor=0.05,
        value_scale=None,
        output_bias=0.0,
        random_state=0,
    ):
        self.n_actions = n_actions
        self.action_max = action_max
        self.q = q
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.train_every = train_every
        self.epsilon_floor = epsilon_floor
        self.value_scale = value_scale
        self.output_bias = output_bias
        self.random_state = random_state

    _actor_output = "relu"

    def _build_networks(self):
        n = self.n_actions
        self.critic_ = DenseNet([N_FEATURES, 4, 1], ["tanh", "tanh"], rng=self.rng_)
        self.actor_ = DenseNet(
            [N_FEATURES, 2 * n, 2 * n, n], ["tanh", "tanh", self._actor_output], rng=self.rng_
        )
        if self.output_bias:
            # a positive start keeps relu outputs off the dead side of zero
            self.actor_.biases[-1][:] = self.output_bias
            self.actor_.weights[-1] *= 0.1

    def networks(self):
        return {"actor": self.actor_, "critic": self.critic_}

    def policy(self, features) -> np.ndarray:
        return normalize_activations(self.actor_.forward(np.atleast_2d(features)))

    def value(self, features) -> np.ndarray:
        """Critic estimate in reward units."""
        return self._value_scale() * self.critic_.forward(np.atleast_2d(features))[:, 0]

    def act(self, features, explore=True):
        self._ensure_initialized()
        probs = self.policy(features)
        if explore and self.epsilon_floor:
            probs = (1.0 - self.epsilon_floor) * probs + self.epsilon_floor / probs.shape[1]
        return act_from_distribution(probs, self.grid_, not explore, self.rng_)

    def _critic_step(self, S, R, S2, D):
        scale = self._value_scale()
        v_s = self.value(S)
        v_next = self.value(S2)
        delta = td0_advantage(v_s, R, v_next, self.gamma, D)
        target = np.clip((v_s + delta) / scale, -1.0, 1.0)
        loss = self.critic_.train_batch(S, target[:, None], self._sgd())
        return delta, loss


class A2CModAgent(_ActorCritic):
    """Actor-critic whose actor regresses onto a distance-smoothed target distribution."""

    def _train_minibatch(self, S, J, R, S2, D):
        delta, critic_loss = self._critic_step(S, R, S2, D)
        target = smoothed_target(self.policy(S), J, delta, self.q)
        actor_loss = self.actor_.train_batch(S, target, self._sgd())
        return actor_loss, critic_loss


class A2CCatAgent(_ActorCritic):
    """Vanilla actor-critic: softmax policy, advantage-weighted cross-entropy."""

    _actor_output = "linear"

    def policy(self, features) -> np.ndarray:
        return softmax(self.actor_.forward(np.atleast_2d(features)))

    def _train_minibatch(self, S, J, R, S2, D):
        delta, critic_loss = self._critic_step(S, R, S2, D)
        T = np.zeros((J.size, self.n_actions))
        T[np.arange(J.size), J] = delta
        actor_loss = self.actor_.train_batch(S, T, self._sgd(), loss="ace")
        return actor_loss, critic_loss


class DQNAgent(_NeuralAgent):
    """Q-network over the action grid with a periodically synced target copy.

    The regression target keeps the online estimate for every action and
    adds the TD error spread over neighbouring actions with weight
    ``1 / (|j - k| + 1)``, so the chosen action receives the full correction.
    """

    def __init__(
        self,
        n_actions=21,
        action_max=1.0,
        q=2.0,
        gamma=0.99,
        learning_rate=0.025,
        momentum=0.8,
        batch_size=32,
        train_every=32,
        epsilon_start=1.0,
        epsilon_end=0.05,
        epsilon_episodes=100,
        target_sync=4,
        value_scale=None,
        random_state=0,
    ):
        self.n_actions = n_actions
        self.action_max = action_max
        self.q = q
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.train_every = train_every
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.epsilon_episodes = epsilon_episodes
        self.target_sync = target_sync
        self.value_scale = value_scale
        self.random_state = random_state

    def _build_networks(self):
        n = self.n_actions
        self.online_ = DenseNet([N_FEATURES, 2 * n, 2 * n, n], ["tanh", "tanh", "linear"], rng=self.rng_)
        self.target_ = self.online_.copy()

    def networks(self):
        return {"online": self.online_, "target": self.target_}

    @property
    def epsilon_(self) -> float:
        if self.epsilon_episodes <= 0:
            return self.epsilon_end
        frac = min(1.0, self.episodes_seen_ / self.epsilon_episodes)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def q_values(self, features, target=False) -> np.ndarray:
        net = self.target_ if target else self.online_
        return self._value_scale() * net.forward(np.atleast_2d(features))

    def value(self, features) -> np.ndarray:
        return self.q_values(features).max(axis=1)

    def act(self, features, explore=True, epsilon=None):
        self._ensure_initialized()
        Q = self.q_values(features)
        j = np.argmax(Q, axis=1)
        if explore:
            eps = self.epsilon_ if epsilon is None else epsilon
            p = Q.shape[0]
            flip = self.rng_.random(p) < eps
            rand = self.rng_.integers(0, self.n_actions, size=p)
            j = np.where(flip, rand, j)
        return j, self.grid_.values[j]

    def td_targets(self, S, J, R, S2, D):
        """Returns the full regression target (reward units) and the TD error."""
        Q = self.q_values(S)
        boot = self.q_values(S2, target=True).max(axis=1)
        y = R + self.gamma * boot * (1.0 - D)
        delta = y - Q[np.arange(J.size), J]
        return Q + delta[:, None] * smoothing_kernel(self.n_actions, J, 1.0), delta

    def _train_minibatch(self, S, J, R, S2, D):
        target, _ = self.td_targets(S, J, R, S2, D)
        loss = self.online_.train_batch(S, target / self._value_scale(), self._sgd())
        return loss, 0.0

    def _after_sweep(self):
        if self.target_sync and self.sweeps_ % self.target_sync == 0:
            self.sync_target()

    def sync_target(self):
        self.target_.copy_weights_from(self.online_)


AGENTS = {
    "a2c_mod": A2CModAgent,
    "a2c_cat": A2CCatAgent,
    "dqn": DQNAgent,
    "heuristic": HeuristicAgent,
}


def make_agent(kind: str, **params):
    try:
        cls = AGENTS[kind]
    except KeyError:
        raise ValueError(f"unknown agent type {kind!r}; choose from {sorted(AGENTS)}") from None
    valid = cls().get_params()
    return cls(**{k: v for k, v in params.items() if k in valid})
