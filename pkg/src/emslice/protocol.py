"""Discrete message vocabulary, observation encoding, and history tracking.

Message symbols are opaque indices with no predefined meaning; the agents
assign meaning through training.  Observations are flat float vectors with
fixed block layouts (documented in docs/observation-layout.md):

MD observation, dimension 6 + l*|U| + l + 6l:
    [ current intent features (6)
    | own uplink messages, one-hot, newest first (l blocks of |U|)
    | downlink success bits, newest first (l)
    | past intent features, newest first (l blocks of 6) ]

Network observation, one channel per device, dimension |U| + l*|U| + l + l*M:
    [ current uplink message, one-hot (|U|)
    | past uplink messages, one-hot, newest first (l blocks of |U|)
    | downlink success bits, newest first (l)
    | past slice allocations, one-hot, newest first (l blocks of M) ]

The centralized critic consumes all network channels followed by all MD
observations.  History slots before the first step of an episode are
zero-filled (a cleared slot is all zeros, not the one-hot of symbol 0).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .env import AppClass, IntentInstance, IntentRanges, StepOutcome
from .errors import ConfigError, ContractViolation

logger = logging.getLogger(__name__)

INTENT_FEATURE_DIM = 6  # 4 normalized fields + 2-dim app-class one-hot

EMPTY = -1  # sentinel for a history slot that has not been written yet


@dataclass(frozen=True)
class Vocabulary:
    """Uplink symbol set; downlink is the fixed binary success alphabet."""

    uplink_size: int
    downlink_size: int = 2

    def __post_init__(self) -> None:
        if self.uplink_size < 2:
            raise ConfigError("uplink vocabulary needs at least two symbols")
        if self.downlink_size != 2:
            raise ConfigError("downlink alphabet is fixed to {0, 1}")


@dataclass(frozen=True)
class ObservationLayout:
    """Dimensions of every observation surface for fixed (l, |U|, M, N)."""

    history_len: int
    vocab_size: int
    n_slices: int
    n_devices: int

    def __post_init__(self) -> None:
        if self.history_len < 1:
            raise ConfigError("history length must be at least 1")

    @property
    def md_dim(self) -> int:
        l = self.history_len
        return INTENT_FEATURE_DIM + l * self.vocab_size + l + l * INTENT_FEATURE_DIM

    @property
    def net_channel_dim(self) -> int:
        l = self.history_len
        return self.vocab_size + l * self.vocab_size + l + l * self.n_slices

    @property
    def joint_dim(self) -> int:
        return self.n_devices * (self.net_channel_dim + self.md_dim)


def encode_intent_features(intent: IntentInstance, ranges: IntentRanges) -> np.ndarray:
    """Min-max normalize the scored intent fields; append app-class one-hot.

    Values outside the configured ranges are clamped (with a warning) so
    custom catalogs with wider demand spreads stay usable.
    """
    raw = np.array([intent.task_size_bits, intent.cycles_per_bit,
                    intent.uplink_deadline_s, intent.compute_deadline_s])
    lo = np.array([ranges.task_size_bits[0], ranges.cycles_per_bit[0],
                   ranges.uplink_deadline_s[0], ranges.compute_deadline_s[0]])
    hi = np.array([ranges.task_size_bits[1], ranges.cycles_per_bit[1],
                   ranges.uplink_deadline_s[1], ranges.compute_deadline_s[1]])
    span = np.where(hi > lo, hi - lo, 1.0)
    scaled = (raw - lo) / span
    if scaled.min() < 0.0 or scaled.max() > 1.0:
        logger.warning("intent outside configured ranges; clamping features")
        scaled = np.clip(scaled, 0.0, 1.0)
    out = np.zeros(INTENT_FEATURE_DIM)
    out[:4] = scaled
    out[4 + int(intent.app_class)] = 1.0
    return out


def encode_intent_batch(intents: list[IntentInstance], ranges: IntentRanges
                        ) -> np.ndarray:
    """Feature rows for all devices at once, (N, 6); same math as the scalar op."""
    raw = np.array([[i.task_size_bits, i.cycles_per_bit,
                     i.uplink_deadline_s, i.compute_deadline_s] for i in intents])
    lo = np.array([ranges.task_size_bits[0], ranges.cycles_per_bit[0],
                   ranges.uplink_deadline_s[0], ranges.compute_deadline_s[0]])
    hi = np.array([ranges.task_size_bits[1], ranges.cycles_per_bit[1],
                   ranges.uplink_deadline_s[1], ranges.compute_deadline_s[1]])
    span = np.where(hi > lo, hi - lo, 1.0)
    scaled = (raw - lo) / span
    if scaled.min() < 0.0 or scaled.max() > 1.0:
        logger.warning("intent outside configured ranges; clamping features")
        scaled = np.clip(scaled, 0.0, 1.0)
    out = np.zeros((len(intents), INTENT_FEATURE_DIM))
    out[:, :4] = scaled
    out[np.arange(len(intents)), 4 + np.array([int(i.app_class) for i in intents])] = 1.0
    return out


class HistoryBuffer:
    """Per-device ring buffers of depth l, newest entry at index 0.

    Tracks the last l uplink messages, downlink bits, slice allocations,
    and intent feature blocks.  Unwritten slots read back as zeros in the
    one-hot encodings (message/action slots hold the EMPTY sentinel).
    """

    def __init__(self, history_len: int):
        if history_len < 1:
            raise ConfigError("history length must be at least 1")
        self.history_len = history_len
        self.msgs = np.full(history_len, EMPTY, dtype=np.int64)
        self.downlink = np.zeros(history_len)
        self.actions = np.full(history_len, EMPTY, dtype=np.int64)
        self.intents = np.zeros((history_len, INTENT_FEATURE_DIM))

    def reset(self) -> None:
        self.msgs.fill(EMPTY)
        self.downlink.fill(0.0)
        self.actions.fill(EMPTY)
        self.intents.fill(0.0)

    def push(self, msg: int, downlink_bit: int, action: int,
             intent_features: np.ndarray) -> None:
        """Insert one exchange; the oldest entry falls off."""
        self.msgs[1:] = self.msgs[:-1]
        self.msgs[0] = msg
        self.downlink[1:] = self.downlink[:-1]
        self.downlink[0] = float(downlink_bit)
        self.actions[1:] = self.actions[:-1]
        self.actions[0] = action
        self.intents[1:] = self.intents[:-1]
        self.intents[0] = intent_features


_ONE_HOT_TABLES: dict[int, np.ndarray] = {}


def _one_hot_rows(indices: np.ndarray, width: int) -> np.ndarray:
    """(l,) int indices -> (l, width) one-hots; EMPTY (-1) rows stay zero."""
    table = _ONE_HOT_TABLES.get(width)
    if table is None:
        table = np.vstack([np.eye(width), np.zeros((1, width))])
        _ONE_HOT_TABLES[width] = table
    return table[indices]  # EMPTY == -1 hits the zero row


def build_md_observation(history: HistoryBuffer, intent_features: np.ndarray,
                         layout: ObservationLayout) -> np.ndarray:
    """Device-side observation: current intent plus own message history."""
    parts = [
        intent_features,
        _one_hot_rows(history.msgs, layout.vocab_size).ravel(),
        history.downlink,
        history.intents.ravel(),
    ]
    obs = np.concatenate(parts)
    if obs.shape != (layout.md_dim,):
        raise ContractViolation(
            f"md observation dim {obs.shape[0]} != layout dim {layout.md_dim}")
    return obs


def build_net_observation(histories: list[HistoryBuffer], current_msgs: np.ndarray,
                          layout: ObservationLayout) -> np.ndarray:
    """Network-side observation: one channel row per device, (N, channel_dim)."""
    msgs = np.asarray(current_msgs)
    if msgs.shape != (layout.n_devices,):
        raise ContractViolation(
            f"need one current message per device, got shape {msgs.shape}")
    if msgs.min() < 0 or msgs.max() >= layout.vocab_size:
        raise ContractViolation(
            f"message index outside vocabulary 0..{layout.vocab_size - 1}")
    channels = np.zeros((layout.n_devices, layout.net_channel_dim))
    for i, hist in enumerate(histories):
        cur = np.zeros(layout.vocab_size)
        cur[msgs[i]] = 1.0
        channels[i] = np.concatenate([
            cur,
            _one_hot_rows(hist.msgs, layout.vocab_size).ravel(),
            hist.downlink,
            _one_hot_rows(hist.actions, layout.n_slices).ravel(),
        ])
    return channels


def build_joint_observation(net_channels: np.ndarray, md_observations: np.ndarray
                            ) -> np.ndarray:
    """Critic input: all network channels, then all MD observations."""
    return np.concatenate([net_channels.ravel(), md_observations.ravel()])


def exchange_round(md_msgs: np.ndarray, allocation: np.ndarray,
                   outcome: StepOutcome, intent_features: np.ndarray,
                   histories: list[HistoryBuffer]) -> None:
    """Record one completed uplink/allocate/downlink round in every buffer.

    ``allocation`` holds slice ids 1..M; they are stored 0-based so the
    one-hot encoding lines up with the catalog order.
    """
    n = len(histories)
    if not (len(md_msgs) == len(allocation) == len(outcome.downlink)
            == len(intent_features) == n):
        raise ContractViolation("exchange_round arguments disagree on device count")
    for i, hist in enumerate(histories):
        hist.push(int(md_msgs[i]), int(outcome.downlink[i]),
                  int(allocation[i]) - 1, intent_features[i])
