"""Comparison policies: perfect knowledge, random assignment, self-learning.

Perfect knowledge enumerates the feasible slices for each intent and picks
one uniformly; random assignment ignores the intent entirely.  The
self-learning scheme gives every device its own independent PPO learner
(decentralized critic, no communication channel) whose actions are the M
slices directly, trained with the same hyperparameters and episode budget
as the proposed scheme so the comparison isolates the communication layer.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .env import IntentInstance, SliceCatalog, SlicingEnv, feasible_mask
from .errors import ConfigError, ContractViolation
from .mappo import EpisodeMetrics, TrainConfig
from .nets import (AdamState, MlpNet, action_logprobs, categorical_sample_batch,
                   entropy_grad_wrt_logits, logprob_grad_to_logits_grad)
from .ppo import compute_gae, critic_loss, ppo_actor_loss, standardize_advantages
from .protocol import INTENT_FEATURE_DIM, EMPTY, encode_intent_batch


class BaselineKind(enum.Enum):
    PERFECT_KNOWLEDGE = "perfect"
    RANDOM_ASSIGNMENT = "random"
    SELF_LEARNING = "self-learning"


def perfect_knowledge_allocate(intents: list[IntentInstance],
                               catalog: SliceCatalog,
                               rng: np.random.Generator) -> np.ndarray:
    """One uniformly random feasible slice per intent (slice ids 1..M)."""
    allocation = np.zeros(len(intents), dtype=np.int64)
    for i, intent in enumerate(intents):
        feasible_ids = np.nonzero(feasible_mask(intent, catalog))[0] + 1
        if len(feasible_ids) == 0:
            raise ContractViolation(
                "no feasible slice for an intent; catalog coverage is broken")
        allocation[i] = feasible_ids[rng.integers(len(feasible_ids))]
    return allocation


def random_allocate(n_devices: int, n_slices: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Uniform independent slice ids, one per device."""
    if n_slices < 1:
        raise ConfigError("need at least one slice")
    return rng.integers(1, n_slices + 1, size=n_devices)


def run_static_episode(env: SlicingEnv, kind: BaselineKind,
                       rng: np.random.Generator) -> EpisodeMetrics:
    """Roll one episode under a non-learning baseline policy."""
    intents = env.reset()
    successes = 0
    team_rewards = []
    done = False
    while not done:
        if kind is BaselineKind.PERFECT_KNOWLEDGE:
            allocation = perfect_knowledge_allocate(intents, env.catalog, rng)
        elif kind is BaselineKind.RANDOM_ASSIGNMENT:
            allocation = random_allocate(env.n_devices, env.n_slices, rng)
        else:
            raise ContractViolation(f"{kind} is not a static baseline")
        outcome, intents, done = env.step(allocation)
        successes += int(outcome.per_md_success.sum())
        team_rewards.append(outcome.team_reward)
    return EpisodeMetrics(successes=successes,
                          total=env.n_devices * env.config.episode_len,
                          mean_team_reward=float(np.mean(team_rewards)))


@dataclass(frozen=True)
class SelfLearningLayout:
    """Observation layout for one self-learning device: no message blocks."""

    history_len: int
    n_slices: int

    @property
    def obs_dim(self) -> int:
        return INTENT_FEATURE_DIM + self.history_len * (self.n_slices + 1)

    def blocks(self) -> dict[str, tuple[int, int]]:
        l, m = self.history_len, self.n_slices
        return {
            "intent_features": (0, INTENT_FEATURE_DIM),
            "allocation_history": (INTENT_FEATURE_DIM,
                                   INTENT_FEATURE_DIM + l * m),
            "success_history": (INTENT_FEATURE_DIM + l * m,
                                INTENT_FEATURE_DIM + l * m + l),
        }


class _DeviceHistory:
    """Last-l (own slice choice, success bit) pairs, newest first."""

    def __init__(self, history_len: int):
        self.actions = np.full(history_len, EMPTY, dtype=np.int64)
        self.success = np.zeros(history_len)

    def reset(self) -> None:
        self.actions.fill(EMPTY)
        self.success.fill(0.0)

    def push(self, action: int, success_bit: int) -> None:
        self.actions[1:] = self.actions[:-1]
        self.actions[0] = action
        self.success[1:] = self.success[:-1]
        self.success[0] = float(success_bit)


class SelfLearningTrainer:
    """N independent PPO learners sharing nothing but the environment."""

    def __init__(self, env: SlicingEnv, history_len: int, config: TrainConfig,
                 seed: int | np.random.SeedSequence = 0):
        config.validate()
        if config.minibatch_size > config.episodes_per_update * env.config.episode_len:
            raise ConfigError("minibatch larger than one update window")
        self.env = env
        self.cfg = config
        self.layout = SelfLearningLayout(history_len, env.n_slices)
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        init_ss, action_ss, shuffle_ss = ss.spawn(3)
        init_rng = np.random.default_rng(init_ss)
        self.action_rng = np.random.default_rng(action_ss)
        self.shuffle_rng = np.random.default_rng(shuffle_ss)

        n, hidden = env.n_devices, list(config.hidden_sizes)
        obs_dim = self.layout.obs_dim
        self.policies = [MlpNet([obs_dim] + hidden + [env.n_slices], init_rng,
                                out_scale=0.01) for _ in range(n)]
        self.values = [MlpNet([obs_dim] + hidden + [1], init_rng)
                       for _ in range(n)]
        self.adam = [AdamState(net.params, lr=config.lr, eps=config.adam_eps)
                     for net in self.policies + self.values]
        self.histories = [_DeviceHistory(history_len) for _ in range(n)]
        self.episode_count = 0
        # per-device windows: obs, action, logp, reward, value, done
        self._win: list[dict[str, list]] = [self._empty_window() for _ in range(n)]

    @staticmethod
    def _empty_window() -> dict[str, list]:
        return {"obs": [], "act": [], "logp": [], "rew": [], "val": [], "done": []}

    def _observe(self, features: np.ndarray, dev: int) -> np.ndarray:
        hist = self.histories[dev]
        onehots = np.zeros((len(hist.actions), self.env.n_slices))
        valid = hist.actions >= 0
        onehots[np.nonzero(valid)[0], hist.actions[valid]] = 1.0
        return np.concatenate([features, onehots.ravel(), hist.success])

    def run_episode(self, collect: bool = True, greedy: bool = False
                    ) -> EpisodeMetrics:
        env = self.env
        n = env.n_devices
        intents = env.reset()
        for hist in self.histories:
            hist.reset()
        successes = 0
        team_rewards = []
        done = False
        while not done:
            feats = encode_intent_batch(intents, env.config.ranges)
            obs = [self._observe(feats[i], i) for i in range(n)]
            logits = np.stack([self.policies[i].forward(obs[i])[0]
                               for i in range(n)])
            if greedy:
                actions = np.argmax(logits, axis=1)
                logps = np.zeros(n)
            else:
                actions, logps = categorical_sample_batch(logits, self.action_rng)
            vals = np.zeros(n)
            if collect:
                for i in range(n):
                    v, _ = self.values[i].forward(obs[i])
                    vals[i] = v[0]
            outcome, intents, done = env.step(actions + 1)
            for i in range(n):
                self.histories[i].push(int(actions[i]), int(outcome.downlink[i]))
                if collect:
                    win = self._win[i]
                    win["obs"].append(obs[i])
                    win["act"].append(int(actions[i]))
                    win["logp"].append(logps[i])
                    win["rew"].append(float(outcome.per_md_reward[i]))
                    win["val"].append(vals[i])
                    win["done"].append(done)
            successes += int(outcome.per_md_success.sum())
            team_rewards.append(outcome.team_reward)
        return EpisodeMetrics(successes=successes,
                              total=n * env.config.episode_len,
                              mean_team_reward=float(np.mean(team_rewards)))

    def train(self, n_episodes: int | None = None,
              callback=None) -> list[EpisodeMetrics]:
        n_episodes = self.cfg.episodes if n_episodes is None else n_episodes
        metrics = []
        for _ in range(n_episodes):
            m = self.run_episode(collect=True)
            metrics.append(m)
            self.episode_count += 1
            if self.episode_count % self.cfg.episodes_per_update == 0:
                self.update()
            if callback is not None:
                callback(self.episode_count, m)
        return metrics

    def test(self, n_episodes: int) -> list[EpisodeMetrics]:
        return [self.run_episode(collect=False, greedy=True)
                for _ in range(n_episodes)]

    def update(self) -> None:
        """Independent PPO update per device; clears the windows."""
        cfg = self.cfg
        for i in range(self.env.n_devices):
            win = self._win[i]
            obs = np.stack(win["obs"])
            acts = np.array(win["act"])
            old_logps = np.array(win["logp"])
            rewards = np.array(win["rew"])
            values = np.array(win["val"])
            dones = np.array(win["done"])

            advantages = np.empty_like(rewards)
            returns = np.empty_like(rewards)
            start = 0
            for end in np.nonzero(dones)[0] + 1:
                adv, ret = compute_gae(rewards[start:end], values[start:end],
                                       0.0, cfg.gamma, cfg.gae_lambda)
                advantages[start:end] = adv
                returns[start:end] = ret
                start = int(end)
            advantages = standardize_advantages(advantages)

            n_steps = len(rewards)
            policy, value = self.policies[i], self.values[i]
            p_adam = self.adam[i]
            v_adam = self.adam[self.env.n_devices + i]
            for _ in range(cfg.epochs_per_update):
                order = self.shuffle_rng.permutation(n_steps)
                for lo in range(0, n_steps, cfg.minibatch_size):
                    idx = order[lo:lo + cfg.minibatch_size]
                    logits, cache = policy.forward(obs[idx])
                    new_logps = action_logprobs(logits, acts[idx])
                    _, dlogp, _ = ppo_actor_loss(new_logps, old_logps[idx],
                                                 advantages[idx],
                                                 cfg.clip_epsilon)
                    dlogits = logprob_grad_to_logits_grad(logits, acts[idx], dlogp)
                    dlogits -= (cfg.entropy_coeff
                                * entropy_grad_wrt_logits(logits) / len(idx))
                    policy.backward(cache, dlogits)
                    p_adam.step(policy.params, policy.grads)
                    policy.zero_grads()

                    preds, vcache = value.forward(obs[idx])
                    _, dpred = critic_loss(preds[:, 0], returns[idx])
                    value.backward(vcache, cfg.value_coeff * dpred[:, None])
                    v_adam.step(value.params, value.grads)
                    value.zero_grads()
            self._win[i] = self._empty_window()

    # ── checkpointing ────────────────────────────────────────────────

    def state_dict(self) -> dict:
        if any(len(w["rew"]) for w in self._win):
            raise ContractViolation("cannot snapshot mid-window; buffer not empty")
        arrays: dict[str, np.ndarray] = {}
        nets = self.policies + self.values
        names = ([f"pol{i}" for i in range(len(self.policies))]
                 + [f"val{i}" for i in range(len(self.values))])
        for name, net, adam in zip(names, nets, self.adam):
            for j, p in enumerate(net.params):
                arrays[f"{name}_p{j}"] = p.copy()
                arrays[f"{name}_m{j}"] = adam.m[j].copy()
                arrays[f"{name}_v{j}"] = adam.v[j].copy()
        meta = {
            "kind": "self-learning",
            "episode_count": self.episode_count,
            "adam_t": [a.t for a in self.adam],
            "rng": {
                "action": self.action_rng.bit_generator.state,
                "shuffle": self.shuffle_rng.bit_generator.state,
                "env": self.env.rng_state(),
            },
        }
        return {"arrays": arrays, "meta": meta}

    def load_state_dict(self, state: dict) -> None:
        arrays, meta = state["arrays"], state["meta"]
        if meta.get("kind") != "self-learning":
            raise ContractViolation(
                f"not a self-learning checkpoint: {meta.get('kind')}")
        nets = self.policies + self.values
        names = ([f"pol{i}" for i in range(len(self.policies))]
                 + [f"val{i}" for i in range(len(self.values))])
        for name, net, adam in zip(names, nets, self.adam):
            for j in range(len(net.params)):
                net.params[j][...] = arrays[f"{name}_p{j}"]
                adam.m[j][...] = arrays[f"{name}_m{j}"]
                adam.v[j][...] = arrays[f"{name}_v{j}"]
        for adam, t in zip(self.adam, meta["adam_t"]):
            adam.t = int(t)
        self.episode_count = int(meta["episode_count"])
        self.action_rng.bit_generator.state = meta["rng"]["action"]
        self.shuffle_rng.bit_generator.state = meta["rng"]["shuffle"]
        self.env.set_rng_state(meta["rng"]["env"])


def self_learning_train(env: SlicingEnv, history_len: int, config: TrainConfig,
                        seed: int | np.random.SeedSequence = 0,
                        callback=None) -> tuple[SelfLearningTrainer,
                                                list[EpisodeMetrics]]:
    """Train the self-learning baseline with the shared episode budget."""
    trainer = SelfLearningTrainer(env, history_len, config, seed)
    metrics = trainer.train(callback=callback)
    return trainer, metrics
