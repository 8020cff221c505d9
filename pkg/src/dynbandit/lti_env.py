"""Hidden-state linear environment: simulation, Markov parameters, special instances.

The environment evolves as::

    y_t     = <omega, x_t> + <theta, u_t> + eta_t
    x_{t+1} = A x_t + B u_t + eps_t

with Gaussian noises of a shared scale ``sigma``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a matrix, got shape {arr.shape}")
    return arr


def _as_vector(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {arr.shape}")
    return arr


def spectral_radius(A: np.ndarray) -> float:
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


@dataclass(frozen=True)
class DlbSystem:
    """Parameters of a dynamical linear bandit.

    ``x1`` defaults to the zero state.  Arrays are copied and made read-only
    so an instance can be shared between runs.
    """

    A: np.ndarray
    B: np.ndarray
    omega: np.ndarray
    theta: np.ndarray
    sigma: float = 0.0
    x1: np.ndarray | None = None

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        omega = _as_vector(self.omega, "omega")
        theta = _as_vector(self.theta, "theta")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got shape {A.shape}")
        if B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got shape {B.shape}")
        if omega.shape != (n,):
            raise ValueError(f"omega must have length {n}, got {omega.shape[0]}")
        if theta.shape != (B.shape[1],):
            raise ValueError(f"theta must have length {B.shape[1]}, got {theta.shape[0]}")
        x1 = np.zeros(n) if self.x1 is None else _as_vector(self.x1, "x1")
        if x1.shape != (n,):
            raise ValueError(f"x1 must have length {n}, got {x1.shape[0]}")
        sigma = float(self.sigma)
        if not sigma >= 0:
            raise ValueError(f"sigma must be nonnegative, got {sigma}")
        rho = spectral_radius(A)
        if not rho < 1:
            raise ValueError(f"spectral radius of A must be < 1, got {rho:.6g}")
        for name, arr in (("A", A), ("B", B), ("omega", omega), ("theta", theta), ("x1", x1)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "sigma", sigma)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.B.shape[1]

    def with_sigma(self, sigma: float) -> "DlbSystem":
        return DlbSystem(self.A, self.B, self.omega, self.theta, sigma, self.x1)

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "omega": self.omega.tolist(),
            "theta": self.theta.tolist(),
            "sigma": self.sigma,
            "x1": self.x1.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DlbSystem":
        missing = [k for k in ("A", "B", "omega", "theta") if k not in data]
        if missing:
            raise ValueError(f"system is missing field(s): {', '.join(missing)}")
        return cls(
            data["A"], data["B"], data["omega"], data["theta"],
            data.get("sigma", 0.0), data.get("x1"),
        )


@dataclass(frozen=True)
class SpectralStats:
    rho: float
    phi: float


@dataclass
class SimState:
    t: int
    x: np.ndarray
    rng: np.random.Generator = field(default_factory=np.random.default_rng, repr=False)

    @classmethod
    def initial(cls, system: DlbSystem, seed=None) -> "SimState":
        return cls(1, system.x1.copy(), np.random.default_rng(seed))


@dataclass(frozen=True)
class HardInstanceParams:
    d: int
    rho: float
    eps: float
    a: tuple

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be positive")
        if not (0 <= self.eps <= self.rho < 1):
            raise ValueError(f"need 0 <= eps <= rho < 1, got eps={self.eps}, rho={self.rho}")
        a = tuple(float(v) for v in self.a)
        if len(a) != self.d:
            raise ValueError(f"a must have length {self.d}")
        for v in a:
            if not (np.isclose(v, self.rho) or np.isclose(v, self.rho - self.eps)):
                raise ValueError(f"entries of a must be rho or rho - eps, got {v}")
        object.__setattr__(self, "a", a)


# ---------------------------------------------------------------------------
# dynamics


def step(system: DlbSystem, state: SimState, action) -> tuple[SimState, float]:
    """Advance one round.  The reward is read off the current state."""
    u = np.asarray(action, dtype=float)
    if u.shape != (system.d,):
        raise ValueError(f"action must have length {system.d}, got shape {u.shape}")
    if state.t < 1:
        raise ValueError("round must be >= 1")
    if state.x.shape != (system.n,):
        raise ValueError(f"state must have length {system.n}")
    x = state.x
    y = float(system.omega @ x + system.theta @ u)
    x_next = system.A @ x + system.B @ u
    if system.sigma > 0:
        y += system.sigma * state.rng.standard_normal()
        x_next = x_next + system.sigma * state.rng.standard_normal(system.n)
    return SimState(state.t + 1, x_next, state.rng), y


def simulate(system: DlbSystem, actions, rng: np.random.Generator | None = None,
             x1=None) -> tuple[np.ndarray, np.ndarray]:
    """Roll the system forward on a fixed action sequence.

    Returns ``(rewards, states)`` where ``states[t]`` is the state at which
    ``rewards[t]`` was emitted.  Noise is drawn only when ``sigma > 0``.
    """
    U = np.atleast_2d(np.asarray(actions, dtype=float))
    if U.shape[1] != system.d:
        raise ValueError(f"actions must have {system.d} columns, got {U.shape[1]}")
    T = U.shape[0]
    noisy = system.sigma > 0
    if noisy and rng is None:
        raise ValueError("an rng is required when sigma > 0")
    x = system.x1.copy() if x1 is None else _as_vector(x1, "x1").copy()
    ys = np.empty(T)
    xs = np.empty((T, system.n))
    A, B, omega, theta = system.A, system.B, system.omega, system.theta
    for t in range(T):
        xs[t] = x
        ys[t] = omega @ x + theta @ U[t]
        x = A @ x + B @ U[t]
        if noisy:
            ys[t] += system.sigma * rng.standard_normal()
            x = x + system.sigma * rng.standard_normal(system.n)
    return ys, xs


# ---------------------------------------------------------------------------
# Markov parameters and steady state


def markov_parameter(system: DlbSystem, s: int) -> np.ndarray:
    """Impulse response of the reward to an action played ``s`` rounds ago."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    if s == 0:
        return system.theta.copy()
    return system.B.T @ np.linalg.matrix_power(system.A, s - 1).T @ system.omega


def markov_sequence(system: DlbSystem, count: int) -> np.ndarray:
    """Rows 0..count-1 of the Markov parameter sequence."""
    out = np.empty((count, system.d))
    if count == 0:
        return out
    out[0] = system.theta
    z = system.omega.copy()
    for s in range(1, count):
        out[s] = system.B.T @ z
        z = system.A.T @ z
    return out


def cumulative_markov(system: DlbSystem) -> np.ndarray:
    """Steady-state reward weights ``h = theta + B^T (I - A)^{-T} omega``."""
    M = (np.eye(system.n) - system.A).T
    if np.linalg.cond(M) > 1e14:
        raise np.linalg.LinAlgError("I - A is numerically singular")
    z = np.linalg.solve(M, system.omega)
    return system.theta + system.B.T @ z


def truncated_cumulative_markov(system: DlbSystem, k: int) -> np.ndarray:
    """Partial sum of Markov parameters with lags 0..k."""
    return markov_sequence(system, k + 1).sum(axis=0)


def steady_state_reward(h, action) -> float:
    h = np.asarray(h, dtype=float)
    u = np.asarray(action, dtype=float)
    if h.shape != u.shape:
        raise ValueError(f"dimension mismatch: h {h.shape} vs action {u.shape}")
    return float(h @ u)


def steady_state(system: DlbSystem, action) -> np.ndarray:
    u = np.asarray(action, dtype=float)
    return np.linalg.solve(np.eye(system.n) - system.A, system.B @ u)


def spectral_stats(system_or_A, power_cutoff: int = 200) -> SpectralStats:
    """Spectral radius and the max of ``||A^k||_2 / rho^k`` for k <= cutoff."""
    if power_cutoff < 1:
        raise ValueError("power_cutoff must be >= 1")
    A = system_or_A.A if isinstance(system_or_A, DlbSystem) else _as_matrix(system_or_A, "A")
    rho = spectral_radius(A)
    if rho == 0.0:
        return SpectralStats(0.0, 1.0)
    phi = 1.0
    P = np.eye(A.shape[0])
    scaled = A / rho
    for _ in range(power_cutoff):
        P = P @ scaled
        phi = max(phi, float(np.linalg.norm(P, 2)))
    return SpectralStats(rho, phi)


# ---------------------------------------------------------------------------
# special instances


def hard_instance(params: HardInstanceParams) -> tuple[DlbSystem, np.ndarray, float]:
    """Lower-bound family member; returns ``(system, u_star, J_star)``.

    Components with ``a_i = rho`` carry positive steady-state weight, those
    with ``a_i = rho - eps`` negative weight; actions live in {-1, 1}^d.
    """
    d, rho, eps = params.d, params.rho, params.eps
    a = np.array(params.a)
    denom = 2.0 * (1.0 - (rho - eps))
    theta = -(2.0 * (1.0 - rho) + eps) / denom * np.ones(d)
    system = DlbSystem(np.diag(a), (1.0 - rho) * np.eye(d), np.ones(d), theta)
    signs = np.where(np.isclose(a, rho), 1.0, -1.0) if eps > 0 else np.ones(d)
    return system, signs, eps * d / denom


def hard_instance_h(params: HardInstanceParams) -> np.ndarray:
    a = np.array(params.a)
    signs = np.where(np.isclose(a, params.rho), 1.0, -1.0)
    return signs * params.eps / (2.0 * (1.0 - (params.rho - params.eps)))


def make_composite_instance(mean_rewards, weights) -> DlbSystem:
    """Reward of a pull at t spread over t+1..t+tau with the given weights."""
    mu = _as_vector(mean_rewards, "mean_rewards")
    w = _as_vector(weights, "weights")
    tau = w.shape[0]
    if tau < 1:
        raise ValueError("need at least one weight")
    A = np.eye(tau, k=-1)
    B = np.zeros((tau, mu.shape[0]))
    B[0] = mu
    return DlbSystem(A, B, w, np.zeros(mu.shape[0]))


def make_delayed_instance(mean_rewards, delay: int) -> DlbSystem:
    """Reward of a pull at t observed in full at t+delay."""
    if delay < 1:
        raise ValueError("delay must be >= 1")
    w = np.zeros(delay)
    w[-1] = 1.0
    return make_composite_instance(mean_rewards, w)


def make_ar1_instance(mean_rewards, gamma: float) -> DlbSystem:
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    mu = _as_vector(mean_rewards, "mean_rewards")
    return DlbSystem([[gamma]], mu.reshape(1, -1), [1.0], np.zeros(mu.shape[0]))


def finite_horizon_optimal(system: DlbSystem, H: int, actions, t: int) -> np.ndarray:
    """Optimal action at round ``t`` of an ``H``-round problem.

    ``actions`` is an ActionSet or a sequence of vectors; ties go to the
    lowest index.
    """
    if not 1 <= t <= H:
        raise ValueError(f"need 1 <= t <= H, got t={t}, H={H}")
    vectors = getattr(actions, "vectors", actions)
    U = np.asarray(vectors, dtype=float)
    if U.size == 0:
        raise ValueError("action set is empty")
    weights = truncated_cumulative_markov(system, H - t)
    return U[int(np.argmax(U @ weights))].copy()


# ---------------------------------------------------------------------------
# fixtures


def default_fixture_dir() -> Path:
    import os

    env = os.environ.get("DYNBANDIT_FIXTURES")
    if env:
        return Path(env)
    return Path(__file__).resolve().parent / "fixtures"


def resolve_fixture(name_or_path: str | Path) -> Path:
    """A bare name (``"synthetic"``) is looked up in the fixture directory."""
    path = Path(name_or_path)
    if path.exists() or path.is_absolute() or len(path.parts) > 1:
        return path
    return default_fixture_dir() / (path.name if path.suffix else f"{path.name}.json")


def load_fixture(name_or_path: str | Path) -> tuple[DlbSystem, dict]:
    """Load a system fixture; extra fields (``paper_h``, ``name``...) are returned as a dict."""
    path = resolve_fixture(name_or_path)
    if not path.exists():
        raise FileNotFoundError(f"fixture not found: {path}")
    with open(path) as fh:
        data = json.load(fh)
    system = DlbSystem.from_dict(data)
    extras = {k: v for k, v in data.items() if k not in ("A", "B", "omega", "theta", "sigma", "x1")}
    return system, extras


def load_system(name_or_path: str | Path) -> DlbSystem:
    return load_fixture(name_or_path)[0]


def save_system(system: DlbSystem, path: str | Path, **extras) -> None:
    data = system.to_dict()
    data.update(extras)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


def random_stable_system(rng: np.random.Generator, n: int, d: int, rho: float,
                         sigma: float = 0.0) -> DlbSystem:
    """Gaussian random system with ``A`` rescaled to spectral radius ``rho``."""
    A = rng.standard_normal((n, n))
    r = spectral_radius(A)
    A = A * (rho / r) if r > 0 else A
    return DlbSystem(A, rng.standard_normal((n, d)), rng.standard_normal(n),
                     rng.standard_normal(d), sigma, rng.standard_normal(n))


__all__: Sequence[str] = [
    "DlbSystem", "SpectralStats", "SimState", "HardInstanceParams",
    "step", "simulate", "markov_parameter", "markov_sequence", "cumulative_markov",
    "truncated_cumulative_markov", "steady_state_reward", "steady_state",
    "spectral_radius", "spectral_stats", "hard_instance", "hard_instance_h",
    "make_delayed_instance", "make_composite_instance", "make_ar1_instance",
    "finite_horizon_optimal", "load_fixture", "load_system", "save_system",
    "resolve_fixture", "default_fixture_dir", "random_stable_system",
]
