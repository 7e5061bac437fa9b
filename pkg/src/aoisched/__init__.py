"""Semantic-aware transmission scheduling lab.

Modules: estimation (staleness costs from Riccati recursions), channel
(quantized block fading with per-level drops), env (the scheduling MDP),
exact (value-iteration oracle and Q-structure checks), neural (manual
MLPs, Adam, sign-constrained monotone critic), ddpg (the four critic
training variants), harness (configs, seeded runs, CSV reporting), cli.
"""

from .channel import ChannelModel, drop_probability, quantize_rayleigh, sample_channel_matrix
from .ddpg import Agent, ReplayBuffer, TrainConfig, Transition, train
from .env import SchedulingEnv, SystemState, encode_state, validate_action
from .estimation import CostModel, LtiProcess, aoi_cost, sample_process, steady_state_error_cov
from .exact import (
    TabularMdp,
    check_aoi_monotonicity,
    check_channel_monotonicity,
    enumerate_actions,
    enumerate_states,
    evaluate_policy,
    value_iteration,
)
from .harness import ExperimentConfig, compare_report, load_config, preset, run_experiment
from .neural import MlpCritic, MonotoneCritic, Mlp, adam_step, monotone_project, soft_update

__version__ = "0.1.0"
