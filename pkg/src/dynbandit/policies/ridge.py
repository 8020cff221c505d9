"""Ridge estimators of the steady-state weights."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, solve_triangular


class RidgeState:
    """``V = lam I + sum u u^T``, ``b = sum y u``, ``h_hat = V^{-1} b``.

    V is kept explicitly and refactorized after every absorb (d is small),
    so the residual ``||V h_hat - b||`` stays at machine precision.
    """

    def __init__(self, d: int, lam: float):
        if not lam > 0:
            raise ValueError("lam must be positive")
        self.d = d
        self.lam = float(lam)
        self.V = self.lam * np.eye(d)
        self.b = np.zeros(d)
        self.h_hat = np.zeros(d)
        self.sample_count = 0
        self.factor = np.sqrt(self.lam) * np.eye(d)

    def absorb(self, u, y: float) -> None:
        u = np.asarray(u, dtype=float)
        self.V += np.outer(u, u)
        self.b += y * u
        self.sample_count += 1
        self._refresh()

    def _refresh(self) -> None:
        self.factor = np.linalg.cholesky(self.V)
        self.h_hat = cho_solve((self.factor, True), self.b, check_finite=False)

    def widths(self, U: np.ndarray) -> np.ndarray:
        """``||u||_{V^{-1}}`` for each row of ``U``."""
        W = solve_triangular(self.factor, U.T, lower=True, check_finite=False)
        return np.sqrt(np.einsum("ij,ij->j", W, W))

    def residual(self) -> float:
        return float(np.linalg.norm(self.V @ self.h_hat - self.b))

    def log_det_ratio(self) -> float:
        """``log(det(V) / lam^d)``."""
        return float(2.0 * np.sum(np.log(np.diag(self.factor))) - self.d * np.log(self.lam))

    def error_norm(self, h) -> float:
        """``||h_hat - h||_V``."""
        e = self.h_hat - np.asarray(h, dtype=float)
        return float(np.sqrt(e @ self.V @ e))


class DiscountedRidge(RidgeState):
    """Exponentially discounted ridge regression.

    Past samples are down-weighted by ``gamma`` per absorb; the regularizer
    stays at ``lam I``.  A second Gram matrix with squared discounts drives
    the confidence width ``||u||_{V^{-1} V2 V^{-1}}``.
    """

    def __init__(self, d: int, lam: float, gamma: float):
        if not 0 < gamma <= 1:
            raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
        super().__init__(d, lam)
        self.gamma = float(gamma)
        self.V2 = self.lam * np.eye(d)

    def absorb(self, u, y: float) -> None:
        u = np.asarray(u, dtype=float)
        g, reg = self.gamma, self.lam * np.eye(self.d)
        outer = np.outer(u, u)
        self.V = g * (self.V - reg) + reg + outer
        self.V2 = g * g * (self.V2 - reg) + reg + outer
        self.b = g * self.b + y * u
        self.sample_count += 1
        self._refresh()

    def widths(self, U: np.ndarray) -> np.ndarray:
        W = cho_solve((self.factor, True), U.T, check_finite=False)
        return np.sqrt(np.maximum(np.einsum("ij,ij->j", W, self.V2 @ W), 0.0))
