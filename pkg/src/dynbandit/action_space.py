"""Finite action sets, budget polytopes and the linear / optimistic argmax."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

_SUM_TOL = 1e-12


def enumerate_vertices(d: int, budget: float) -> list[np.ndarray]:
    """Vertices of ``{u in [0, 1]^d : sum(u) <= budget}`` in lexicographic order.

    A vertex has at most one fractional coordinate: either a 0/1 point inside
    the budget, or a point where the budget hyperplane cuts a box edge.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if not 0 < budget <= d:
        raise ValueError(f"budget must lie in (0, d], got {budget}")
    found = set()
    for bits in itertools.product((0.0, 1.0), repeat=d):
        k = sum(bits)
        if k <= budget + _SUM_TOL:
            found.add(bits)
    for i in range(d):
        for rest in itertools.product((0.0, 1.0), repeat=d - 1):
            frac = budget - sum(rest)
            if _SUM_TOL < frac < 1.0 - _SUM_TOL:
                found.add(rest[:i] + (frac,) + rest[i:])
    return [np.array(v) for v in sorted(found)]


def project_budget_box(u, budget: float) -> np.ndarray:
    """Euclidean projection onto ``[0, 1]^d`` intersected with ``sum(u) <= budget``."""
    u = np.asarray(u, dtype=float)
    clipped = np.clip(u, 0.0, 1.0)
    if clipped.sum() <= budget:
        return clipped
    # KKT: the projection is clip(u - tau, 0, 1) for the tau saturating the budget
    lo, hi = 0.0, float(np.max(u))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.clip(u - mid, 0.0, 1.0).sum() > budget:
            lo = mid
        else:
            hi = mid
    return np.clip(u - hi, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class ActionSet:
    """A finite set of action vectors.

    ``kind`` is ``"explicit"`` or ``"budget_box"``; for the latter the vectors
    are the cached polytope vertices, so any objective convex in ``u`` is
    maximized exactly over them.
    """

    vectors: np.ndarray
    kind: str = "explicit"
    budget: float | None = None

    def __post_init__(self):
        V = np.array(self.vectors, dtype=float)
        if V.ndim != 2 or V.shape[0] == 0:
            raise ValueError("action set must be a nonempty list of equal-length vectors")
        if self.kind == "budget_box":
            if np.any(V < -_SUM_TOL) or np.any(V > 1 + _SUM_TOL):
                raise ValueError("budget-box vertex outside [0, 1]^d")
            if np.any(V.sum(axis=1) > self.budget + _SUM_TOL):
                raise ValueError("budget-box vertex violates the budget")
        V.setflags(write=False)
        object.__setattr__(self, "vectors", V)

    @classmethod
    def explicit(cls, vectors) -> "ActionSet":
        return cls(np.asarray(vectors, dtype=float), "explicit")

    @classmethod
    def budget_box(cls, d: int, budget: float) -> "ActionSet":
        return cls(np.array(enumerate_vertices(d, budget)), "budget_box", float(budget))

    @classmethod
    def signs(cls, d: int) -> "ActionSet":
        return cls(np.array(list(itertools.product((-1.0, 1.0), repeat=d))), "explicit")

    @classmethod
    def from_json(cls, path: str | Path) -> "ActionSet":
        with open(path) as fh:
            return cls.explicit(json.load(fh))

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def U(self) -> float:
        return float(np.max(np.linalg.norm(self.vectors, axis=1)))

    def __len__(self) -> int:
        return self.size

    def __getitem__(self, i: int) -> np.ndarray:
        return self.vectors[i]

    def index_of(self, u) -> int:
        hits = np.flatnonzero(np.all(np.isclose(self.vectors, np.asarray(u)), axis=1))
        if hits.size == 0:
            raise KeyError(f"{u} is not in the action set")
        return int(hits[0])

    def project(self, u) -> np.ndarray:
        if self.kind == "budget_box":
            return project_budget_box(u, self.budget)
        u = np.asarray(u, dtype=float)
        return self.vectors[int(np.argmin(np.linalg.norm(self.vectors - u, axis=1)))].copy()


def _vectors(actions) -> np.ndarray:
    V = actions.vectors if isinstance(actions, ActionSet) else np.asarray(actions, dtype=float)
    if V.size == 0:
        raise ValueError("action set is empty")
    return V


def argmax_linear(h, actions) -> tuple[np.ndarray, float]:
    """Maximizer of ``<h, u>``; the first one in set order wins ties."""
    V = _vectors(actions)
    values = V @ np.asarray(h, dtype=float)
    i = int(np.argmax(values))
    return V[i], float(values[i])


def gram_factor(V) -> np.ndarray:
    """Lower Cholesky factor of a positive-definite Gram matrix."""
    try:
        return np.linalg.cholesky(np.asarray(V, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise ValueError("Gram matrix is not positive definite") from exc


def inverse_norms(L: np.ndarray, U: np.ndarray) -> np.ndarray:
    """``||u||_{V^{-1}}`` for each row of ``U``, given ``V = L L^T``."""
    W = solve_triangular(L, U.T, lower=True, check_finite=False)
    return np.sqrt(np.einsum("ij,ij->j", W, W))


def ucb_values(h_hat, V, beta: float, actions, factor: np.ndarray | None = None) -> np.ndarray:
    U = _vectors(actions)
    L = gram_factor(V) if factor is None else factor
    return U @ np.asarray(h_hat, dtype=float) + beta * inverse_norms(L, U)


def argmax_ucb(h_hat, V, beta: float, actions, factor: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Optimistic choice ``argmax <h_hat, u> + beta * ||u||_{V^{-1}}``.

    ``factor`` may carry a precomputed Cholesky factor of ``V``.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    values = ucb_values(h_hat, V, beta, actions, factor)
    i = int(np.argmax(values))
    return _vectors(actions)[i], float(values[i])
