"""Learning agents sharing the ``choose`` / ``observe`` / ``reset`` protocol."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from ..action_space import ActionSet
from .bounds import BoundsConfig, dlinucb_beta, exploration_beta, linucb_beta
from .ridge import DiscountedRidge, RidgeState
from .schedule import build_schedule, persistence


class Policy:
    """Base class.  Rounds are 1-based; ``observe`` is called after every ``choose``."""

    name = "policy"

    def choose(self, t: int) -> np.ndarray:
        raise NotImplementedError

    def observe(self, t: int, action, reward: float) -> None:
        pass

    def reset(self, seed=None) -> None:
        pass


class DynLinUCB(Policy):
    """Epoch-based optimistic agent.

    Epoch ``m`` starts with an optimistic choice and holds it for ``H_m``
    more rounds; only the reward of the last round of the epoch enters the
    ridge estimate.

    ``beta`` overrides the exploration schedule with a callable ``t -> beta_t``.
    """

    name = "dynlin_ucb"

    def __init__(self, actions: ActionSet, bounds: BoundsConfig, T: int,
                 rho_bar: float | None = None, beta: Callable[[int], float] | None = None):
        self.actions = actions
        self.bounds = bounds
        self.T = int(T)
        self.rho_bar = bounds.rho_bar if rho_bar is None else float(rho_bar)
        self.schedule = build_schedule(self.T, self.rho_bar)
        d = actions.d
        self._beta = beta if beta is not None else (lambda t: exploration_beta(bounds, d, t))
        self.reset()

    def reset(self, seed=None) -> None:
        self.ridge = RidgeState(self.actions.d, self.bounds.lam)
        self.epoch = 0
        self.epoch_end = 0
        self.current = None
        self.current_index = -1

    def beta(self, t: int) -> float:
        return self._beta(t)

    def ucb(self, t: int) -> np.ndarray:
        U = self.actions.vectors
        return U @ self.ridge.h_hat + self.beta(t - 1) * self.ridge.widths(U)

    def choose(self, t: int) -> np.ndarray:
        if t > self.T:
            raise RuntimeError(f"round {t} is past the horizon {self.T}")
        if t > self.epoch_end:
            self.epoch += 1
            self.epoch_end = t + persistence(self.epoch, self.rho_bar)
            self.current_index = int(np.argmax(self.ucb(t)))
            self.current = self.actions.vectors[self.current_index]
        return self.current

    def observe(self, t: int, action, reward: float) -> None:
        if t == self.epoch_end:
            self.ridge.absorb(action, reward)

    @property
    def h_hat(self) -> np.ndarray:
        return self.ridge.h_hat


class LinUCB(DynLinUCB):
    """Optimistic linear bandit: updates every round, ignores the dynamics."""

    name = "linucb"

    def __init__(self, actions: ActionSet, bounds: BoundsConfig, T: int,
                 beta: Callable[[int], float] | None = None):
        d = actions.d
        if beta is None:
            beta = lambda t: linucb_beta(bounds, d, t)  # noqa: E731
        super().__init__(actions, bounds, T, rho_bar=0.0, beta=beta)


class DLinUCB(Policy):
    """Discounted linear UCB for drifting parameters."""

    name = "dlinucb"

    def __init__(self, actions: ActionSet, bounds: BoundsConfig, T: int, gamma: float,
                 beta: Callable[[int], float] | None = None):
        if not 0 < gamma <= 1:
            raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
        self.actions = actions
        self.bounds = bounds
        self.T = int(T)
        self.gamma = float(gamma)
        d = actions.d
        self._beta = beta if beta is not None else (lambda t: dlinucb_beta(bounds, d, t, self.gamma))
        self.reset()

    def reset(self, seed=None) -> None:
        self.ridge = DiscountedRidge(self.actions.d, self.bounds.lam, self.gamma)
        self.current_index = -1

    def choose(self, t: int) -> np.ndarray:
        if t > self.T:
            raise RuntimeError(f"round {t} is past the horizon {self.T}")
        U = self.actions.vectors
        values = U @ self.ridge.h_hat + self._beta(t - 1) * self.ridge.widths(U)
        self.current_index = int(np.argmax(values))
        return U[self.current_index]

    def observe(self, t: int, action, reward: float) -> None:
        self.ridge.absorb(action, reward)

    @property
    def h_hat(self) -> np.ndarray:
        return self.ridge.h_hat


def exp3_rate(n_arms: int, horizon: int) -> float:
    """Mixing rate of Exp3 tuned for a known horizon (gain bound g = horizon)."""
    if n_arms == 1:
        return 1.0
    return min(1.0, math.sqrt(n_arms * math.log(n_arms) / ((math.e - 1) * horizon)))


class Exp3(Policy):
    """Exponential weights over the vertices of the action set.

    Rewards are mapped to ``(r + 2 xi) / (4 xi)`` and clipped to [0, 1];
    ``clip_count`` records how many needed clipping.
    """

    name = "exp3"

    def __init__(self, actions: ActionSet, xi: float, horizon: int, rate: float | None = None):
        if not xi > 0:
            raise ValueError("xi must be positive")
        self.actions = actions
        self.xi = float(xi)
        self.horizon = int(horizon)
        self.K = actions.size
        self.rate = exp3_rate(self.K, self.horizon) if rate is None else float(rate)
        self.reset()

    def reset(self, seed=None) -> None:
        self.rng = np.random.default_rng(seed)
        self.log_weights = np.zeros(self.K)
        self.clip_count = 0
        self.current_index = -1
        self.probs = self.probabilities()

    def rescale(self, reward: float) -> float:
        r = (reward + 2 * self.xi) / (4 * self.xi)
        if r < 0.0 or r > 1.0:
            self.clip_count += 1
            r = min(max(r, 0.0), 1.0)
        return r

    def probabilities(self) -> np.ndarray:
        w = np.exp(self.log_weights - self.log_weights.max())
        p = (1 - self.rate) * w / w.sum() + self.rate / self.K
        return p / p.sum()

    def draw(self) -> int:
        self.probs = self.probabilities()
        self.current_index = int(self.rng.choice(self.K, p=self.probs))
        return self.current_index

    def update(self, arm: int, reward: float) -> None:
        r = self.rescale(reward)
        self.log_weights[arm] += self.rate * (r / self.probs[arm]) / self.K
        # keep log-weights bounded; the distribution is shift invariant
        self.log_weights -= self.log_weights.max()

    def choose(self, t: int) -> np.ndarray:
        return self.actions.vectors[self.draw()]

    def observe(self, t: int, action, reward: float) -> None:
        self.update(self.current_index, reward)


def batch_size(M: int, rho_bar: float) -> int:
    """``ceil(log M / log(1/rho_bar))``, at least 1."""
    if not 0 < rho_bar < 1:
        raise ValueError(f"rho_bar must lie in (0, 1), got {rho_bar}")
    if M <= 1:
        return 1
    return max(1, math.ceil(math.log(M) / math.log(1 / rho_bar) - 1e-12))


class BatchExp3(Policy):
    """Exp3 on batches of ``k`` rounds, fed with the batch-average reward."""

    name = "batch_exp3"

    def __init__(self, actions: ActionSet, xi: float, T: int, k: int):
        if k < 1:
            raise ValueError("batch size must be >= 1")
        self.T = int(T)
        self.k = int(k)
        self.inner = Exp3(actions, xi, horizon=math.ceil(self.T / self.k))
        self.actions = actions
        self.reset()

    @classmethod
    def from_rho(cls, actions: ActionSet, xi: float, T: int, rho_bar: float) -> "BatchExp3":
        M = build_schedule(T, rho_bar).M
        return cls(actions, xi, T, batch_size(M, rho_bar))

    def reset(self, seed=None) -> None:
        self.inner.reset(seed)
        self.batch_end = 0
        self.total = 0.0
        self.count = 0

    @property
    def clip_count(self) -> int:
        return self.inner.clip_count

    @property
    def current_index(self) -> int:
        return self.inner.current_index

    def choose(self, t: int) -> np.ndarray:
        if t > self.batch_end:
            self.inner.draw()
            self.batch_end = min(t + self.k - 1, self.T)
            self.total, self.count = 0.0, 0
        return self.actions.vectors[self.inner.current_index]

    def observe(self, t: int, action, reward: float) -> None:
        self.total += reward
        self.count += 1
        if t >= self.batch_end:
            self.inner.update(self.inner.current_index, self.total / self.count)


class ConstantPolicy(Policy):
    """Always plays one vector, projected into the action set if needed."""

    name = "constant"

    def __init__(self, action, actions: ActionSet | None = None):
        u = np.asarray(action, dtype=float)
        if actions is not None:
            if u.shape != (actions.d,):
                raise ValueError(f"action must have length {actions.d}")
            if actions.kind == "budget_box":
                inside = np.all(u >= 0) and np.all(u <= 1) and u.sum() <= actions.budget + 1e-12
                if not inside:
                    u = actions.project(u)
        self.action = u
        self.action.setflags(write=False)

    def choose(self, t: int) -> np.ndarray:
        return self.action
