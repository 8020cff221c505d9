"""Epoch schedule: epoch ``m`` lasts ``1 + H_m`` rounds, ``H_m = floor(log m / log(1/rho_bar))``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


def persistence(m: int, rho_bar: float) -> int:
    """``H_m``: the largest k with ``(1/rho_bar)^k <= m`` (0 when rho_bar is 0)."""
    if m < 1:
        raise ValueError("epoch index starts at 1")
    if rho_bar == 0.0 or m == 1:
        return 0
    r = 1.0 / rho_bar
    k = int(math.floor(math.log(m) / math.log(r)))
    # guard the floor against rounding in the log ratio
    while r ** (k + 1) <= m:
        k += 1
    while k > 0 and r**k > m:
        k -= 1
    return k


def _first_epoch_with(k: int, rho_bar: float, cap: int) -> int:
    """Smallest m with ``H_m >= k``, or ``cap`` if that exceeds it."""
    r = 1.0 / rho_bar
    if k * math.log(r) > math.log(cap):
        return cap
    m = max(1, int(math.ceil(r**k)))
    while m > 1 and persistence(m - 1, rho_bar) >= k:
        m -= 1
    while persistence(m, rho_bar) < k:
        m += 1
    return m


@dataclass(frozen=True)
class EpochSchedule:
    T: int
    rho_bar: float
    M: int
    used_rounds: int = field(repr=False)

    def H(self, m: int) -> int:
        return persistence(m, self.rho_bar)

    def length(self, m: int) -> int:
        return 1 + persistence(m, self.rho_bar)

    @cached_property
    def epoch_lengths(self) -> np.ndarray:
        return np.array([self.length(m) for m in range(1, self.M + 1)], dtype=np.int64)

    @cached_property
    def epoch_end_rounds(self) -> np.ndarray:
        """``t_m`` for m = 1..M."""
        return np.cumsum(self.epoch_lengths)


def build_schedule(T: int, rho_bar: float) -> EpochSchedule:
    """Largest M whose first M epochs fit in T rounds.

    Works block-wise over runs of equal ``H_m`` so the cost is logarithmic in T.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0 <= rho_bar < 1:
        raise ValueError(f"rho_bar must lie in [0, 1), got {rho_bar}")
    if rho_bar == 0.0:
        return EpochSchedule(T, rho_bar, T, T)
    cap = T + 2
    total, m_start, k = 0, 1, 0
    while True:
        m_next = _first_epoch_with(k + 1, rho_bar, cap)
        block = m_next - m_start
        fit = (T - total) // (k + 1)
        if fit < block:
            return EpochSchedule(T, rho_bar, m_start - 1 + fit, total + fit * (k + 1))
        total += block * (k + 1)
        m_start, k = m_next, k + 1
