"""Known problem bounds and the exploration / confidence radii built from them."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class BoundsConfig:
    """Upper bounds available to the learner.

    Field names follow the roles of the bounded quantities: ``theta_bound``
    bounds ``||theta||``, ``omega_bound`` bounds ``||omega||``,
    ``input_matrix_bound`` bounds ``||B||_2``, ``action_bound`` bounds
    ``||u||`` and ``state_bound`` bounds ``||x||``.
    """

    rho_bar: float
    phi_bar: float = 1.0
    theta_bound: float = 1.0
    omega_bound: float = 1.0
    input_matrix_bound: float = 1.0
    action_bound: float = 1.0
    state_bound: float = 1.0
    sigma: float = 0.0
    lam: float = 1.0
    delta: float = 0.05

    def __post_init__(self):
        if not 0 <= self.rho_bar < 1:
            raise ValueError(f"rho_bar must lie in [0, 1), got {self.rho_bar}")
        if self.phi_bar < 1:
            raise ValueError(f"phi_bar must be >= 1, got {self.phi_bar}")
        for name in ("theta_bound", "omega_bound", "input_matrix_bound",
                     "action_bound", "state_bound", "sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")

    def replace(self, **changes) -> "BoundsConfig":
        return replace(self, **changes)

    @property
    def c1(self) -> float:
        U, B = self.action_bound, self.input_matrix_bound
        return U * self.omega_bound * self.phi_bar * (U * B / (1 - self.rho_bar) + self.state_bound)

    @property
    def c2(self) -> float:
        return self.theta_bound + self.omega_bound * self.input_matrix_bound * self.phi_bar / (1 - self.rho_bar)

    @property
    def sigma2(self) -> float:
        ratio = self.omega_bound**2 * self.phi_bar**2 / (1 - self.rho_bar**2)
        return self.sigma**2 * (1 + ratio)

    @property
    def xi(self) -> float:
        """Reward half-range used to rescale rewards for exponential weights."""
        return (self.theta_bound + self.omega_bound * self.input_matrix_bound / (1 - self.rho_bar)) * self.action_bound


def _noise_term(sigma2: float, delta: float, log_det: float) -> float:
    return math.sqrt(2.0 * sigma2 * (math.log(1.0 / delta) + log_det))


def exploration_beta(bounds: BoundsConfig, d: int, t: int) -> float:
    """Exploration coefficient of the epoch-based optimistic agent at round ``t``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    lam, U = bounds.lam, bounds.action_bound
    bias = bounds.c1 / math.sqrt(lam) * math.log(math.e * (t + 1))
    log_det = 0.5 * d * math.log1p(t * U**2 / (d * lam))
    return bias + bounds.c2 * math.sqrt(lam) + _noise_term(bounds.sigma2, bounds.delta, log_det)


def linucb_beta(bounds: BoundsConfig, d: int, t: int) -> float:
    if t < 0:
        raise ValueError("t must be >= 0")
    lam, U = bounds.lam, bounds.action_bound
    log_det = 0.5 * d * math.log1p(t * U**2 / (d * lam))
    return bounds.c2 * math.sqrt(lam) + _noise_term(bounds.sigma2, bounds.delta, log_det)


def dlinucb_beta(bounds: BoundsConfig, d: int, t: int, gamma: float) -> float:
    if t < 0:
        raise ValueError("t must be >= 0")
    lam, U = bounds.lam, bounds.action_bound
    # (1 - gamma^{2t}) / (1 - gamma^2), with its gamma -> 1 limit t
    ratio = float(t) if gamma == 1.0 else -math.expm1(2 * t * math.log(gamma)) / (1 - gamma**2)
    log_det = 0.5 * d * math.log1p(t * U**2 / (d * lam) * ratio)
    return bounds.c2 * math.sqrt(lam) + _noise_term(bounds.sigma2, bounds.delta, log_det)


def concentration_radius(c1: float, c2: float, sigma2: float, lam: float, delta: float,
                         t: int, det_ratio: float) -> float:
    """High-probability radius of ``||h_hat_t - h||_{V_t}``.

    ``det_ratio`` is ``det(V_t) / lam^d``.  Constants are the true-system ones.
    """
    if det_ratio < 1 - 1e-12:
        raise ValueError(f"det_ratio must be >= 1, got {det_ratio}")
    bias = c1 / math.sqrt(lam) * math.log(math.e * (t + 1))
    log_det = 0.5 * math.log(max(det_ratio, 1.0))
    return bias + c2 * math.sqrt(lam) + _noise_term(sigma2, delta, log_det)


def true_constants(bounds: BoundsConfig) -> tuple[float, float, float]:
    """``(c1, c2, sigma2)`` when ``bounds`` carries the true rho(A) and Phi(A)."""
    return bounds.c1, bounds.c2, bounds.sigma2
