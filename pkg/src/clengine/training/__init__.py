from .plugins import CumulativePlugin, EWCPlugin, LwFPlugin, ReplayPlugin, ewc_penalty, lwf_penalty
from .strategies import STRATEGIES, make_cumulative, make_ewc, make_lwf, make_naive, make_replay
from .template import (
    CALLBACKS,
    EVAL_CALLBACKS,
    TRAIN_CALLBACKS,
    Clock,
    Plugin,
    Strategy,
    StrategyState,
    TrainHParams,
)

__all__ = [
    "CALLBACKS",
    "EVAL_CALLBACKS",
    "TRAIN_CALLBACKS",
    "Clock",
    "CumulativePlugin",
    "EWCPlugin",
    "LwFPlugin",
    "Plugin",
    "ReplayPlugin",
    "STRATEGIES",
    "Strategy",
    "StrategyState",
    "TrainHParams",
    "ewc_penalty",
    "lwf_penalty",
    "make_cumulative",
    "make_ewc",
    "make_lwf",
    "make_naive",
    "make_replay",
]
