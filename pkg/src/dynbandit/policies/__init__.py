from .agents import (
    BatchExp3,
    ConstantPolicy,
    DLinUCB,
    DynLinUCB,
    Exp3,
    LinUCB,
    Policy,
    batch_size,
    exp3_rate,
)
from .bounds import (
    BoundsConfig,
    concentration_radius,
    dlinucb_beta,
    exploration_beta,
    linucb_beta,
)
from .ridge import DiscountedRidge, RidgeState
from .schedule import EpochSchedule, build_schedule, persistence

__all__ = [
    "BatchExp3", "ConstantPolicy", "DLinUCB", "DynLinUCB", "Exp3", "LinUCB", "Policy",
    "batch_size", "exp3_rate", "BoundsConfig", "concentration_radius", "dlinucb_beta",
    "exploration_beta", "linucb_beta", "DiscountedRidge", "RidgeState", "EpochSchedule",
    "build_schedule", "persistence",
]
