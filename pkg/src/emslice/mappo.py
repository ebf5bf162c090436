"""Cooperative MAPPO over N device agents and one network agent.

Per step, each device samples an uplink symbol from its own policy given its
local observation; the network agent applies one shared-parameter head to
every device channel and samples one slice per device (its joint log-prob is
the sum over channels).  A single centralized critic reads the concatenation
of all channels and all device observations and is trained on team returns;
every agent's advantages come from that shared team-reward GAE.

Updates follow PPO: per epoch, shuffle the window, split into minibatches,
and take one Adam step per minibatch on the summed loss
(actor terms + value_coeff * critic MSE - entropy_coeff * entropies).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .env import SlicingEnv
from .errors import ConfigError, ContractViolation
from .nets import (AdamState, MlpNet, action_logprobs, categorical_entropy,
                   categorical_sample_batch, entropy_grad_wrt_logits,
                   logprob_grad_to_logits_grad)
from .ppo import compute_gae, critic_loss, ppo_actor_loss, standardize_advantages
from .protocol import (HistoryBuffer, ObservationLayout, build_joint_observation,
                       build_md_observation, build_net_observation,
                       encode_intent_batch, exchange_round)

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    episodes: int = 6000
    minibatch_size: int = 64
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    value_coeff: float = 0.2
    entropy_coeff: float = 0.2
    lr: float = 1e-3
    adam_eps: float = 1e-5
    epochs_per_update: int = 4
    episodes_per_update: int = 8
    hidden_sizes: tuple[int, int] = (64, 64)
    share_md_parameters: bool = False
    critic_sees_prev_actions: bool = False

    def validate(self) -> None:
        if not (0.0 < self.gamma <= 1.0 and 0.0 < self.gae_lambda <= 1.0):
            raise ConfigError("gamma and gae_lambda must lie in (0, 1]")
        if self.clip_epsilon <= 0.0:
            raise ConfigError("clip epsilon must be positive")
        if self.lr < 0.0:
            raise ConfigError("learning rate must be non-negative")
        if self.adam_eps <= 0.0:
            raise ConfigError("adam epsilon must be positive")
        for name in ("episodes", "minibatch_size", "epochs_per_update",
                     "episodes_per_update"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")


@dataclass
class EpisodeMetrics:
    successes: int
    total: int
    mean_team_reward: float

    @property
    def normalized_success(self) -> float:
        return self.successes / self.total

    @property
    def normalized_failure(self) -> float:
        return 1.0 - self.normalized_success


class RolloutBuffer:
    """Trajectory storage for one update window (all agents, team rewards)."""

    def __init__(self) -> None:
        self.md_obs: list[np.ndarray] = []
        self.md_actions: list[np.ndarray] = []
        self.md_logps: list[np.ndarray] = []
        self.net_channels: list[np.ndarray] = []
        self.net_actions: list[np.ndarray] = []
        self.net_logps: list[float] = []
        self.joint_obs: list[np.ndarray] = []
        self.values: list[float] = []
        self.team_rewards: list[float] = []
        self.per_md_rewards: list[np.ndarray] = []
        self.dones: list[bool] = []

    def __len__(self) -> int:
        return len(self.team_rewards)

    def clear(self) -> None:
        self.__init__()

    def add(self, **kwargs) -> None:
        for name, value in kwargs.items():
            getattr(self, name).append(value)


class MappoTrainer:
    """Owns the nets, optimizer states, rollout buffer, and RNG streams."""

    def __init__(self, env: SlicingEnv, layout: ObservationLayout,
                 config: TrainConfig, seed: int | np.random.SeedSequence = 0):
        config.validate()
        if layout.n_devices != env.n_devices or layout.n_slices != env.n_slices:
            raise ConfigError("layout and environment disagree on N or M")
        if config.minibatch_size > config.episodes_per_update * env.config.episode_len:
            raise ConfigError("minibatch larger than one update window")
        self.env = env
        self.layout = layout
        self.cfg = config
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        init_ss, action_ss, shuffle_ss = ss.spawn(3)
        init_rng = np.random.default_rng(init_ss)
        self.action_rng = np.random.default_rng(action_ss)
        self.shuffle_rng = np.random.default_rng(shuffle_ss)

        n, hidden = env.n_devices, list(config.hidden_sizes)
        if config.share_md_parameters:
            shared = MlpNet([layout.md_dim] + hidden + [layout.vocab_size],
                            init_rng, out_scale=0.01)
            self.md_policies = [shared] * n
        else:
            self.md_policies = [
                MlpNet([layout.md_dim] + hidden + [layout.vocab_size],
                       init_rng, out_scale=0.01)
                for _ in range(n)]
        self.net_policy = MlpNet([layout.net_channel_dim] + hidden + [layout.n_slices],
                                 init_rng, out_scale=0.01)
        self.critic_input_dim = layout.joint_dim + (
            n * layout.n_slices if config.critic_sees_prev_actions else 0)
        self.critic = MlpNet([self.critic_input_dim] + hidden + [1], init_rng)

        self._unique_nets = ([self.md_policies[0]] if config.share_md_parameters
                             else list(self.md_policies))
        self._unique_nets += [self.net_policy, self.critic]
        self.adam = [AdamState(net.params, lr=config.lr, eps=config.adam_eps)
                     for net in self._unique_nets]

        self.histories = [HistoryBuffer(layout.history_len) for _ in range(n)]
        self.buffer = RolloutBuffer()
        self.episode_count = 0
        self._prev_actions = np.full(n, -1, dtype=np.int64)

    # ── rollout ──────────────────────────────────────────────────────

    def _critic_input(self, joint_obs: np.ndarray) -> np.ndarray:
        if not self.cfg.critic_sees_prev_actions:
            return joint_obs
        n, m = self.layout.n_devices, self.layout.n_slices
        onehots = np.zeros(n * m)
        for i, a in enumerate(self._prev_actions):
            if a >= 0:
                onehots[i * m + a] = 1.0
        return np.concatenate([joint_obs, onehots])

    def run_episode(self, collect: bool = True, greedy: bool = False
                    ) -> EpisodeMetrics:
        env, layout = self.env, self.layout
        n = env.n_devices
        intents = env.reset()
        for hist in self.histories:
            hist.reset()
        self._prev_actions.fill(-1)

        successes = 0
        team_rewards = []
        done = False
        while not done:
            feats = encode_intent_batch(intents, env.config.ranges)
            md_obs = np.stack([
                build_md_observation(self.histories[i], feats[i], layout)
                for i in range(n)])

            md_logits = np.stack([self.md_policies[i].forward(md_obs[i])[0]
                                  for i in range(n)])
            if greedy:
                msgs = np.argmax(md_logits, axis=1)
                md_logps = np.zeros(n)
            else:
                msgs, md_logps = categorical_sample_batch(md_logits,
                                                          self.action_rng)

            channels = build_net_observation(self.histories, msgs, layout)
            net_logits, _ = self.net_policy.forward(channels)
            if greedy:
                slice_actions = np.argmax(net_logits, axis=1)
                net_logp = 0.0
            else:
                slice_actions, slice_logps = categorical_sample_batch(
                    net_logits, self.action_rng)
                net_logp = float(slice_logps.sum())

            if collect:
                critic_in = self._critic_input(
                    build_joint_observation(channels, md_obs))
                value, _ = self.critic.forward(critic_in)

            allocation = slice_actions + 1
            outcome, next_intents, done = env.step(allocation)
            exchange_round(msgs, allocation, outcome, feats, self.histories)

            if collect:
                self.buffer.add(
                    md_obs=md_obs, md_actions=msgs.copy(), md_logps=md_logps,
                    net_channels=channels, net_actions=slice_actions.copy(),
                    net_logps=net_logp,
                    joint_obs=critic_in, values=float(value[0]),
                    team_rewards=outcome.team_reward,
                    per_md_rewards=outcome.per_md_reward, dones=done)
            self._prev_actions = slice_actions.copy()
            successes += int(outcome.per_md_success.sum())
            team_rewards.append(outcome.team_reward)
            intents = next_intents

        return EpisodeMetrics(successes=successes,
                              total=n * env.config.episode_len,
                              mean_team_reward=float(np.mean(team_rewards)))

    def train(self, n_episodes: int | None = None,
              callback=None) -> list[EpisodeMetrics]:
        """Run the training loop; an update fires every episodes_per_update."""
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
        """Frozen-policy greedy evaluation; no learning, no storage."""
        return [self.run_episode(collect=False, greedy=True)
                for _ in range(n_episodes)]

    # ── update ───────────────────────────────────────────────────────

    def _window_advantages(self, rewards: np.ndarray, values: np.ndarray,
                           dones: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        advantages = np.empty_like(rewards)
        returns = np.empty_like(rewards)
        start = 0
        for end in np.nonzero(dones)[0] + 1:
            adv, ret = compute_gae(rewards[start:end], values[start:end], 0.0,
                                   self.cfg.gamma, self.cfg.gae_lambda)
            advantages[start:end] = adv
            returns[start:end] = ret
            start = int(end)
        if start != len(rewards):
            raise ContractViolation("buffer must end on an episode boundary")
        return advantages, returns

    def update(self) -> dict:
        """One MAPPO update over the buffered window; clears the buffer."""
        cfg = self.cfg
        buf = self.buffer
        n_steps = len(buf)
        if n_steps == 0:
            raise ContractViolation("update called with an empty buffer")
        n = self.layout.n_devices

        md_obs = np.stack(buf.md_obs)                   # (S, N, md_dim)
        md_actions = np.stack(buf.md_actions)           # (S, N)
        md_old_logps = np.stack(buf.md_logps)           # (S, N)
        channels = np.stack(buf.net_channels)           # (S, N, ch_dim)
        net_actions = np.stack(buf.net_actions)         # (S, N)
        net_old_logps = np.array(buf.net_logps)         # (S,)
        joint_obs = np.stack(buf.joint_obs)             # (S, joint_dim)
        values = np.array(buf.values)
        rewards = np.array(buf.team_rewards)
        dones = np.array(buf.dones)

        advantages, returns = self._window_advantages(rewards, values, dones)
        advantages = standardize_advantages(advantages)

        snapshot = [net.copy_params() for net in self._unique_nets]
        stats: dict[str, list[float]] = {
            "actor_loss": [], "critic_loss": [], "entropy": [],
            "mean_ratio": [], "clip_fraction": [], "skipped": []}

        for _ in range(cfg.epochs_per_update):
            order = self.shuffle_rng.permutation(n_steps)
            for lo in range(0, n_steps, cfg.minibatch_size):
                idx = order[lo:lo + cfg.minibatch_size]
                ok = self._minibatch_step(
                    idx, md_obs, md_actions, md_old_logps, channels,
                    net_actions, net_old_logps, joint_obs, advantages,
                    returns, stats)
                if not ok:
                    for net, params in zip(self._unique_nets, snapshot):
                        net.set_params(params)
                    logger.error("non-finite loss; update aborted and "
                                 "parameters restored")
                    buf.clear()
                    return {"aborted": True}

        buf.clear()
        return {key: float(np.mean(vals)) for key, vals in stats.items()}

    def _minibatch_step(self, idx, md_obs, md_actions, md_old_logps, channels,
                        net_actions, net_old_logps, joint_obs, advantages,
                        returns, stats) -> bool:
        cfg = self.cfg
        n = self.layout.n_devices
        b = len(idx)
        adv = advantages[idx]

        total_actor = 0.0
        total_entropy = 0.0
        ratios = []
        clip_fracs = []
        skipped = 0

        if cfg.share_md_parameters:
            # all device samples through the one shared policy as one batch
            obs = md_obs[idx].reshape(b * n, -1)
            acts = md_actions[idx].reshape(b * n)
            olds = md_old_logps[idx].reshape(b * n)
            adv_rep = np.repeat(adv, n)
            logits, cache = self.md_policies[0].forward(obs)
            new_logps = action_logprobs(logits, acts)
            loss, dlogp, st = ppo_actor_loss(new_logps, olds, adv_rep,
                                             cfg.clip_epsilon)
            ent = categorical_entropy(logits)
            dlogits = logprob_grad_to_logits_grad(logits, acts, dlogp)
            dlogits -= cfg.entropy_coeff * entropy_grad_wrt_logits(logits) / len(obs)
            self.md_policies[0].backward(cache, dlogits)
            total_actor += loss
            total_entropy += float(ent.mean())
            ratios.append(st.mean_ratio)
            clip_fracs.append(st.clip_fraction)
            skipped += st.n_skipped
        else:
            for i in range(n):
                logits, cache = self.md_policies[i].forward(md_obs[idx, i])
                new_logps = action_logprobs(logits, md_actions[idx, i])
                loss, dlogp, st = ppo_actor_loss(
                    new_logps, md_old_logps[idx, i], adv, cfg.clip_epsilon)
                ent = categorical_entropy(logits)
                dlogits = logprob_grad_to_logits_grad(logits, md_actions[idx, i],
                                                      dlogp)
                dlogits -= cfg.entropy_coeff * entropy_grad_wrt_logits(logits) / b
                self.md_policies[i].backward(cache, dlogits)
                total_actor += loss
                total_entropy += float(ent.mean())
                ratios.append(st.mean_ratio)
                clip_fracs.append(st.clip_fraction)
                skipped += st.n_skipped

        # network agent: joint log-prob sums the per-channel log-probs;
        # entropy regularization stays per decision (mean over channels) so
        # every slice choice feels the same pressure as a device's message
        ch = channels[idx].reshape(b * n, -1)
        acts = net_actions[idx].reshape(b * n)
        logits, cache = self.net_policy.forward(ch)
        per_channel_logps = action_logprobs(logits, acts).reshape(b, n)
        joint_new = per_channel_logps.sum(axis=1)
        loss, dlogp_joint, st = ppo_actor_loss(joint_new, net_old_logps[idx],
                                               adv, cfg.clip_epsilon)
        dlogp_rows = np.repeat(dlogp_joint, n)
        ent_rows = categorical_entropy(logits)
        dlogits = logprob_grad_to_logits_grad(logits, acts, dlogp_rows)
        dlogits -= cfg.entropy_coeff * entropy_grad_wrt_logits(logits) / len(ch)
        self.net_policy.backward(cache, dlogits)
        total_actor += loss
        total_entropy += float(ent_rows.mean())
        ratios.append(st.mean_ratio)
        clip_fracs.append(st.clip_fraction)
        skipped += st.n_skipped

        preds, vcache = self.critic.forward(joint_obs[idx])
        vloss, dpred = critic_loss(preds[:, 0], returns[idx])
        self.critic.backward(vcache, cfg.value_coeff * dpred[:, None])

        total = total_actor + cfg.value_coeff * vloss - cfg.entropy_coeff * total_entropy
        if not np.isfinite(total):
            return False

        for net, adam in zip(self._unique_nets, self.adam):
            adam.step(net.params, net.grads)
            net.zero_grads()

        stats["actor_loss"].append(total_actor)
        stats["critic_loss"].append(vloss)
        stats["entropy"].append(total_entropy)
        stats["mean_ratio"].append(float(np.mean(ratios)))
        stats["clip_fraction"].append(float(np.mean(clip_fracs)))
        stats["skipped"].append(skipped)
        return True

    # ── checkpointing ────────────────────────────────────────────────

    def state_dict(self) -> dict:
        """Snapshot of parameters, Adam moments, counters, and RNG states.

        Only valid at an update-window boundary (empty rollout buffer), so a
        reloaded trainer continues the exact metric stream.
        """
        if len(self.buffer):
            raise ContractViolation("cannot snapshot mid-window; buffer not empty")
        arrays: dict[str, np.ndarray] = {}
        names = self._net_names()
        for name, net, adam in zip(names, self._unique_nets, self.adam):
            for j, p in enumerate(net.params):
                arrays[f"{name}_p{j}"] = p.copy()
                arrays[f"{name}_m{j}"] = adam.m[j].copy()
                arrays[f"{name}_v{j}"] = adam.v[j].copy()
        meta = {
            "kind": "mappo",
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
        if meta.get("kind") != "mappo":
            raise ContractViolation(f"not a mappo checkpoint: {meta.get('kind')}")
        for name, net, adam in zip(self._net_names(), self._unique_nets, self.adam):
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

    def _net_names(self) -> list[str]:
        if self.cfg.share_md_parameters:
            return ["md_shared", "net", "critic"]
        return [f"md{i}" for i in range(len(self.md_policies))] + ["net", "critic"]


def train(env: SlicingEnv, layout: ObservationLayout, config: TrainConfig,
          seed: int | np.random.SeedSequence = 0,
          callback=None) -> tuple[MappoTrainer, list[EpisodeMetrics]]:
    """Build a trainer and run the full training loop."""
    trainer = MappoTrainer(env, layout, config, seed)
    metrics = trainer.train(callback=callback)
    return trainer, metrics
