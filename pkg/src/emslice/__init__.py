"""Emergent-communication intent profiling and translation for network slicing.

Device agents learn to express QoE intents as discrete messages; a network
agent learns to translate those messages into network-slice allocations.
Training is cooperative MAPPO on a hand-rolled numpy engine.
"""
from .env import (AppClass, EnvConfig, IntentInstance, IntentRanges, SliceCatalog,
                  SliceSpec, SlicingEnv, StepOutcome, compute_time,
                  evaluate_allocation, feasible_mask, is_satisfied, sample_intent,
                  uplink_time)
from .errors import ConfigError, ContractViolation, NumericsError
from .mappo import EpisodeMetrics, MappoTrainer, RolloutBuffer, TrainConfig, train
from .baselines import (BaselineKind, SelfLearningTrainer,
                        perfect_knowledge_allocate, random_allocate,
                        self_learning_train)
from .protocol import (HistoryBuffer, ObservationLayout, Vocabulary,
                       build_joint_observation, build_md_observation,
                       build_net_observation, encode_intent_features,
                       exchange_round)

__version__ = "0.1.0"
