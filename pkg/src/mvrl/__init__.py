"""Multi-view actor-critic RL with critic-gated attention fusion."""

from .attention import (AttentionEncoder, AttentionGate, attention_weights,
                        fuse, gate_values)
from .combiners import combine_avg, combine_cnt, combine_mjv, concat_features
from .coordinator import (AdrlTrainer, ExplorationSchedule, TrainingSchedule,
                          deviation, shape_reward)
from .ddpg import AgentHyper, DDPGAgent, ReplayBuffer, Transition
from .env import Track, TrackEnv, apply_view_noise
from .harness import ExperimentConfig, attention_report, compare, run, run_single
from .nn import Adam, DenseNet, TargetPair, soft_update
from .workers import WorkerAgent

__version__ = "0.1.0"
