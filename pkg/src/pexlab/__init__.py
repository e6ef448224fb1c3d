"""Offline-to-online reinforcement learning lab.

Implicit Q-learning for offline pre-training, policy-expansion / SAC / IQL
online fine-tuning, exploration baselines, desk-scale environments, and a
reproducible experiment harness with CSV and figure output.
"""

from .bridge import BridgeStrategy, PolicyMember, PolicySet, StrategyKind
from .envs import BehaviorGrade, make_env, make_spec, normalized_score
from .harness import RunConfig, RunLog, evaluate, run_offline_phase, run_online_phase
from .replay import OfflineDataset, ReplayBuffer, load_dataset, save_dataset

__version__ = "0.1.0"

__all__ = [
    "BehaviorGrade",
    "BridgeStrategy",
    "OfflineDataset",
    "PolicyMember",
    "PolicySet",
    "ReplayBuffer",
    "RunConfig",
    "RunLog",
    "StrategyKind",
    "evaluate",
    "load_dataset",
    "make_env",
    "make_spec",
    "normalized_score",
    "run_offline_phase",
    "run_online_phase",
    "save_dataset",
]
