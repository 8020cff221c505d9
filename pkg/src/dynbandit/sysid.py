"""Single-trajectory identification: ARX-style least squares, then a Ho-Kalman realization.

The regression targets the predictive-form block row::

    [C F, C Abar F, ..., C Abar^{H-1} F, D, C B, C Abar B, ..., C Abar^{H-1} B]

with ``Abar = A - F C``.  The realization step recovers ``(Abar, [F, B - F D], C)`` from a block
Hankel matrix and maps back to ``A = Abar + F C`` and ``B``.  (With a
feed-through term the predictor's input matrix is ``B - F D``, so the
estimated input blocks are really ``C Abar^i (B - F D)``.)
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lti_env import DlbSystem, spectral_radius


class DegenerateRealizationError(ValueError):
    """The Hankel matrix has lower numerical rank than the requested order."""

    def __init__(self, message: str, singular_values: np.ndarray):
        super().__init__(f"{message}; singular values: {np.array2string(singular_values, precision=3)}")
        self.singular_values = singular_values


class UnstableSystemError(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.inputs, dtype=float)
        Y = np.asarray(self.outputs, dtype=float)
        if U.ndim == 1:
            U = U[:, None]
        if Y.ndim == 1:
            Y = Y[:, None]
        if U.shape[0] != Y.shape[0]:
            raise ValueError(f"inputs and outputs differ in length: {U.shape[0]} != {Y.shape[0]}")
        object.__setattr__(self, "inputs", U)
        object.__setattr__(self, "outputs", Y)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def p(self) -> int:
        return self.inputs.shape[1]

    @property
    def m(self) -> int:
        return self.outputs.shape[1]


@dataclass(frozen=True)
class MarkovEstimate:
    G: np.ndarray
    H: int
    lam: float
    m: int
    p: int

    @property
    def f_blocks(self) -> np.ndarray:
        """``C Abar^i F`` for i < H, shape (H, m, m)."""
        m, H = self.m, self.H
        return self.G[:, : m * H].reshape(m, H, m).transpose(1, 0, 2)

    @property
    def b_blocks(self) -> np.ndarray:
        """``C Abar^i B`` for i < H, shape (H, m, p)."""
        m, p, H = self.m, self.p, self.H
        start = m * H + p
        return self.G[:, start:].reshape(m, H, p).transpose(1, 0, 2)


@dataclass(frozen=True)
class Realization:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    order: int
    singular_values: np.ndarray
    F: np.ndarray | None = None

    def markov_sequence(self, count: int) -> np.ndarray:
        """``[D, CB, CAB, ...]``, shape (count, m, p)."""
        out = np.empty((count, self.C.shape[0], self.B.shape[1]))
        if count == 0:
            return out
        out[0] = self.D
        M = self.B.copy()
        for s in range(1, count):
            out[s] = self.C @ M
            M = self.A @ M
        return out

    def to_system(self, sigma: float = 0.0) -> DlbSystem:
        """MISO realization as a bandit environment (``omega = C^T``, ``theta = D^T``)."""
        if self.C.shape[0] != 1:
            raise ValueError("only single-output realizations map to a bandit environment")
        return DlbSystem(self.A, self.B, self.C[0], self.D[0], sigma)


def build_regressors(traj: Trajectory, H: int) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``[y_{t-1} .. y_{t-H}, u_t, u_{t-1} .. u_{t-H}]`` for t = H+1 .. T (1-based)."""
    T = len(traj)
    if H < 1:
        raise ValueError("H must be >= 1")
    if H >= T:
        raise ValueError(f"history H={H} must be smaller than the trajectory length {T}")
    U, Y = traj.inputs, traj.outputs
    rows = T - H
    past_y = [Y[H - k: T - k] for k in range(1, H + 1)]
    inputs = [U[H - k: T - k] for k in range(0, H + 1)]
    design = np.hstack(past_y + inputs)
    assert design.shape == (rows, (traj.m + traj.p) * H + traj.p)
    return design, Y[H:]


def estimate_markov(design: np.ndarray, targets: np.ndarray, lam: float, H: int | None = None,
                    m: int | None = None, p: int | None = None) -> MarkovEstimate:
    """Ridge solution of ``min lam ||X||_F^2 + sum ||y - X phi||^2``.

    ``H``, ``m`` and ``p`` are inferred from the shapes when omitted
    (``p`` must then be given, since the row width does not determine it).
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    targets = np.atleast_2d(targets.T).T if targets.ndim == 1 else targets
    m = targets.shape[1] if m is None else m
    width = design.shape[1]
    if H is None:
        if p is None:
            raise ValueError("give p (or H) to split the regressor blocks")
        H = (width - p) // (m + p)
    if p is None:
        p = (width - m * H) // (H + 1)
    if (m + p) * H + p != width:
        raise ValueError(f"row width {width} does not match (m+p)H+p with m={m}, p={p}, H={H}")
    normal = design.T @ design
    if lam > 0:
        normal = normal + lam * np.eye(width)
    elif np.linalg.matrix_rank(normal) < width:
        raise np.linalg.LinAlgError("normal matrix is singular; use lam > 0")
    rhs = design.T @ targets
    G = np.linalg.solve(normal, rhs).T
    return MarkovEstimate(G, H, float(lam), m, p)


def extract_d(estimate: MarkovEstimate) -> np.ndarray:
    """The feed-through block, found at column offset ``m H``."""
    start = estimate.m * estimate.H
    return estimate.G[:, start: start + estimate.p].copy()


def select_order(singular_values: np.ndarray, ratio: float = 1e-3) -> int:
    if singular_values.size == 0 or singular_values[0] == 0:
        return 0
    return int(np.sum(singular_values > ratio * singular_values[0]))


def ho_kalman(f_blocks, b_blocks, order: int | None = None, D=None, rank_tol: float = 1e-6) -> Realization:
    """Realize ``(A, B, C, D)`` from predictive-form Markov blocks.

    ``f_blocks[i] = C Abar^i F`` and ``b_blocks[i] = C Abar^i (B - F D)`` (i < H);
    the two coincide with the plain input blocks when F or D vanishes.
    With ``order=None`` the order counts singular values above 1e-3 of the
    largest.  All-zero blocks give the zero realization.
    """
    Fb = np.asarray(f_blocks, dtype=float)
    Bb = np.asarray(b_blocks, dtype=float)
    if Fb.ndim == 2:
        Fb = Fb[:, None, :]
    if Bb.ndim == 2:
        Bb = Bb[:, None, :]
    H, m, p = Bb.shape
    if Fb.shape != (H, m, m):
        raise ValueError(f"f_blocks must have shape {(H, m, m)}, got {Fb.shape}")
    D = np.zeros((m, p)) if D is None else np.atleast_2d(np.asarray(D, dtype=float))
    blocks = np.concatenate([Fb, Bb], axis=2)  # (H, m, m+p)
    rows = H // 2
    cols = H - rows
    if rows < 1 or cols < 1:
        raise ValueError("need at least two Markov blocks")
    q = m + p
    hankel_minus = np.empty((rows * m, cols * q))
    hankel_plus = np.zeros((rows * m, cols * q))
    for i in range(rows):
        for j in range(cols):
            hankel_minus[i * m:(i + 1) * m, j * q:(j + 1) * q] = blocks[i + j]
            if i + j + 1 < H:
                hankel_plus[i * m:(i + 1) * m, j * q:(j + 1) * q] = blocks[i + j + 1]
    Uh, s, Vt = np.linalg.svd(hankel_minus, full_matrices=False)
    if order is None:
        order = select_order(s)
    if s.size == 0 or s[0] == 0.0:
        n = max(order, 1)
        return Realization(np.zeros((n, n)), np.zeros((n, p)), np.zeros((m, n)), D, n, s, np.zeros((n, m)))
    if order < 1 or order > min(rows * m, cols * q):
        raise DegenerateRealizationError(f"order {order} not realizable from a {hankel_minus.shape} Hankel", s)
    if 2 * order > H:
        raise ValueError(f"history H={H} must be at least twice the order {order}")
    if s[order - 1] <= rank_tol * s[0]:
        raise DegenerateRealizationError(f"Hankel rank is below the requested order {order}", s)
    root = np.sqrt(s[:order])
    O = Uh[:, :order] * root
    Ctrl = root[:, None] * Vt[:order]
    C = O[:m]
    F = Ctrl[:, :m]
    # with feed-through the predictor is driven by B - F D, not B
    B = Ctrl[:, m:q] + F @ D
    Abar = np.linalg.pinv(O) @ hankel_plus @ np.linalg.pinv(Ctrl)
    A = Abar + F @ C
    return Realization(A, B, C, D, order, s, F)


def identified_h(realization: Realization) -> np.ndarray:
    """Steady-state weights ``D^T + B^T (I - A)^{-T} C^T`` of a single-output realization."""
    A = realization.A
    rho = spectral_radius(A)
    if not rho < 1:
        raise UnstableSystemError(f"identified A has spectral radius {rho:.4g} >= 1")
    z = np.linalg.solve((np.eye(A.shape[0]) - A).T, realization.C.T)
    h = realization.D.T + realization.B.T @ z
    return h[:, 0] if h.shape[1] == 1 else h


def identify(traj: Trajectory, H: int, order: int | None = None, lam: float = 1e-4) -> tuple[Realization, MarkovEstimate]:
    """Regression plus realization in one call."""
    design, targets = build_regressors(traj, H)
    est = estimate_markov(design, targets, lam, H=H, m=traj.m, p=traj.p)
    real = ho_kalman(est.f_blocks, est.b_blocks, order, extract_d(est))
    return real, est


def default_history(rho_bar: float, T_id: int, tol: float = 1e-3) -> int:
    """Smallest H with ``rho_bar^H <= tol``, capped at ``T_id / 10``."""
    cap = max(1, T_id // 10)
    if rho_bar <= 0:
        return min(2, cap)
    H = math.ceil(math.log(tol) / math.log(rho_bar))
    return max(1, min(H, cap))


def read_trajectory_csv(path: str | Path) -> Trajectory:
    """Columns ``t, u_1..u_p, y_1..y_m``."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty trajectory file") from None
        header = [h.strip() for h in header]
        if not header or header[0] != "t":
            raise ValueError(f"{path}: first column must be 't'")
        u_cols = [i for i, h in enumerate(header) if h.startswith("u_")]
        y_cols = [i for i, h in enumerate(header) if h.startswith("y_")]
        if not u_cols or not y_cols or len(u_cols) + len(y_cols) + 1 != len(header):
            raise ValueError(f"{path}: header must be t, u_1..u_p, y_1..y_m; got {header}")
        U, Y = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: line {lineno} has {len(row)} columns, expected {len(header)}")
            try:
                U.append([float(row[i]) for i in u_cols])
                Y.append([float(row[i]) for i in y_cols])
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    if not U:
        raise ValueError(f"{path}: trajectory has no data rows")
    return Trajectory(np.array(U), np.array(Y))


def write_trajectory_csv(path: str | Path, traj: Trajectory) -> None:
    header = ["t"] + [f"u_{i + 1}" for i in range(traj.p)] + [f"y_{i + 1}" for i in range(traj.m)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t in range(len(traj)):
            w.writerow([t + 1, *map(repr, traj.inputs[t].tolist()), *map(repr, traj.outputs[t].tolist())])


def excitation_trajectory(system: DlbSystem, actions, T_id: int, rng: np.random.Generator) -> Trajectory:
    """Simulate with inputs drawn uniformly from the action set's vectors."""
    from .lti_env import simulate

    V = np.asarray(getattr(actions, "vectors", actions), dtype=float)
    U = V[rng.integers(V.shape[0], size=T_id)]
    ys, _ = simulate(system, U, rng)
    return Trajectory(U, ys)
