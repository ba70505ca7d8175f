"""Multi-reward decision transformer for sequential recommendation.

Trajectories of (return-to-go, state, action) sessions with two reward
channels (click-through and retention) are fed to a causal transformer whose
predicted action embeddings are decoded into item lists by a GRU.
"""

from .balancer import RtgBalancer, balanced_reward_loss, rebalance_rtg
from .config import ModelConfig, WorldConfig
from .decision import Batch, DecisionRecommender, collate, predict_actions, prompt_rtg, rollout_many
from .evaluation import evaluate, rtg_sweep
from .metrics import bleu, evaluate_lists, hr_at_k, ndcg_at_k, rouge, sb_urs
from .objectives import contrastive_loss, cross_entropy_loss, select_negatives, total_loss
from .trajectory import (
    PAD_ID, RewardPair, RtgPair, SessionRecord, Trajectory, build_state, build_trajectories, compute_ctr,
    compute_retention_reward, compute_rtg, ingest_log,
)
from .training import Checkpoint, train
from .world import SyntheticWorld

__version__ = "0.1.0"

__all__ = [
    "Batch", "Checkpoint", "DecisionRecommender", "ModelConfig", "PAD_ID", "RewardPair", "RtgBalancer",
    "RtgPair", "SessionRecord", "SyntheticWorld", "Trajectory", "WorldConfig", "balanced_reward_loss",
    "bleu", "build_state", "build_trajectories", "collate", "compute_ctr", "compute_retention_reward",
    "compute_rtg", "contrastive_loss", "cross_entropy_loss", "evaluate", "evaluate_lists", "hr_at_k",
    "ingest_log", "ndcg_at_k", "predict_actions", "prompt_rtg", "rebalance_rtg", "rollout_many", "rouge",
    "rtg_sweep", "sb_urs", "select_negatives", "total_loss", "train",
]
