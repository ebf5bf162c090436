"""Experiment orchestration: config ingestion, runs, sweeps, artifact emission.

A run executes every (scheme, seed) cell independently: learned schemes train
for the configured episode budget and are then frozen for a greedy test
phase; static baselines roll the same number of episodes so all curves share
one x-axis.  Per-episode metric rows land in ``metrics.csv``; aggregates in
``summary.json``; training curves and the user sweep in self-rendered SVGs.
Identical config and seeds reproduce the CSV byte for byte.
"""
from __future__ import annotations

import json
import logging
import traceback
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import BaselineKind, SelfLearningTrainer, run_static_episode
from .checkpoint import load_checkpoint, save_checkpoint
from .env import EnvConfig, IntentRanges, SliceCatalog, SliceSpec, SlicingEnv
from .errors import ConfigError, ContractViolation
from .mappo import EpisodeMetrics, MappoTrainer, TrainConfig
from .protocol import ObservationLayout
from .svgplot import line_chart

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1
SCHEMES = ("proposed", "perfect", "random", "self-learning")
LEARNED_SCHEMES = ("proposed", "self-learning")
SMOOTH_WINDOW = 50  # episodes, SVG display only; CSV rows stay raw

_RANGE_KEYS = ("task_size_bits", "cycles_per_bit", "uplink_deadline_s",
               "compute_deadline_s", "storage_bits", "reliability")
_ENV_KEYS = ("n_devices", "n_slices", "episode_len", "reward_scale",
             "history_len", "vocab_size", "catalog", "ranges")
_TRAIN_KEYS = ("episodes", "minibatch_size", "gamma", "gae_lambda",
               "clip_epsilon", "value_coeff", "entropy_coeff", "lr", "adam_eps",
               "epochs_per_update", "episodes_per_update", "hidden_sizes",
               "share_md_parameters", "critic_sees_prev_actions")
_RUN_KEYS = ("schemes", "seeds", "test_episodes", "out_dir")


def default_config_dict() -> dict:
    """Paper-scale defaults: 5 devices, 10 slices, 6000 episodes, 3 seeds."""
    return {
        "version": CONFIG_VERSION,
        "env": {
            "n_devices": 5,
            "n_slices": 10,
            "episode_len": 15,
            "reward_scale": 1.0,
            "history_len": 3,
            "vocab_size": None,
            "catalog": None,
            "ranges": {
                "task_size_bits": [100.0, 500.0],
                "cycles_per_bit": [1e2, 5e4],
                "uplink_deadline_s": [1e-2, 5e-2],
                "compute_deadline_s": [1e-2, 5e-2],
                "storage_bits": [200.0, 600.0],
                "reliability": [5e-5, 1e-2],
            },
        },
        "train": {
            "episodes": 6000,
            "minibatch_size": 64,
            "gamma": 0.99,
            "gae_lambda": 0.95,
            "clip_epsilon": 0.2,
            "value_coeff": 0.2,
            "entropy_coeff": 0.2,
            "lr": 1e-3,
            "adam_eps": 1e-5,
            "epochs_per_update": 4,
            "episodes_per_update": 8,
            "hidden_sizes": [64, 64],
            "share_md_parameters": False,
            "critic_sees_prev_actions": False,
        },
        "run": {
            "schemes": list(SCHEMES),
            "seeds": [0, 1, 2],
            "test_episodes": 500,
            "out_dir": "results",
        },
    }


def _reject_unknown(block: dict, allowed: tuple[str, ...], where: str) -> None:
    unknown = set(block) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass
class ExperimentConfig:
    """Validated experiment description; ``raw`` is the normalized dict."""

    raw: dict
    env: EnvConfig
    catalog: SliceCatalog
    history_len: int
    vocab_size: int
    train: TrainConfig
    schemes: list[str]
    seeds: list[int]
    test_episodes: int
    out_dir: str

    @property
    def n_devices(self) -> int:
        return self.env.n_devices

    @property
    def layout(self) -> ObservationLayout:
        return ObservationLayout(history_len=self.history_len,
                                 vocab_size=self.vocab_size,
                                 n_slices=len(self.catalog),
                                 n_devices=self.env.n_devices)


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a config dict (schema-versioned; unknown keys rejected)."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    _reject_unknown(data, ("version", "env", "train", "run"), "config root")
    if data.get("version") != CONFIG_VERSION:
        raise ConfigError(f"config version must be {CONFIG_VERSION}")

    merged = default_config_dict()
    for block_name in ("env", "train", "run"):
        block = data.get(block_name, {})
        if not isinstance(block, dict):
            raise ConfigError(f"{block_name} block must be a mapping")
        allowed = {"env": _ENV_KEYS, "train": _TRAIN_KEYS, "run": _RUN_KEYS}[block_name]
        _reject_unknown(block, allowed, f"'{block_name}'")
        if block_name == "env" and "ranges" in block:
            _reject_unknown(block["ranges"], _RANGE_KEYS, "'env.ranges'")
            merged["env"]["ranges"].update(block.pop("ranges"))
        merged[block_name].update(block)

    env_block = merged["env"]
    ranges = IntentRanges(**{k: tuple(float(x) for x in v)
                             for k, v in env_block["ranges"].items()})
    env_cfg = EnvConfig(n_devices=int(env_block["n_devices"]),
                        episode_len=int(env_block["episode_len"]),
                        reward_scale=float(env_block["reward_scale"]),
                        ranges=ranges)
    env_cfg.validate()

    n_slices = int(env_block["n_slices"])
    if env_block["catalog"] is None:
        catalog = SliceCatalog.default(n_slices)
    else:
        entries = env_block["catalog"]
        if len(entries) != n_slices:
            raise ConfigError("catalog length must equal n_slices")
        catalog = SliceCatalog([SliceSpec(i + 1, float(r), float(f))
                                for i, (r, f) in enumerate(entries)])
    catalog.validate_coverage(ranges)

    vocab_size = env_block["vocab_size"]
    vocab_size = n_slices if vocab_size is None else int(vocab_size)
    if vocab_size < 2:
        raise ConfigError("vocab_size must be at least 2")
    history_len = int(env_block["history_len"])
    if history_len < 1:
        raise ConfigError("history_len must be at least 1")

    train_block = dict(merged["train"])
    train_block["hidden_sizes"] = tuple(int(h) for h in train_block["hidden_sizes"])
    train_cfg = TrainConfig(**train_block)
    train_cfg.validate()
    if train_cfg.minibatch_size > train_cfg.episodes_per_update * env_cfg.episode_len:
        raise ConfigError("minibatch_size exceeds one update window")

    run_block = merged["run"]
    schemes = list(run_block["schemes"])
    for scheme in schemes:
        if scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme '{scheme}'; choose from {SCHEMES}")
    seeds = [int(s) for s in run_block["seeds"]]
    if not seeds or len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be a non-empty list of distinct integers")
    test_episodes = int(run_block["test_episodes"])
    if test_episodes < 1:
        raise ConfigError("test_episodes must be at least 1")

    return ExperimentConfig(raw=merged, env=env_cfg, catalog=catalog,
                            history_len=history_len, vocab_size=vocab_size,
                            train=train_cfg, schemes=schemes, seeds=seeds,
                            test_episodes=test_episodes,
                            out_dir=str(run_block["out_dir"]))


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(data)


# ── metric rows ──────────────────────────────────────────────────────

METRIC_HEADER = ("episode", "scheme", "seed", "normalized_success",
                 "normalized_failure", "mean_team_reward")


@dataclass(frozen=True)
class MetricRow:
    episode: int
    scheme: str
    seed: int
    normalized_success: float
    normalized_failure: float
    mean_team_reward: float

    @classmethod
    def from_metrics(cls, episode: int, scheme: str, seed: int,
                     m: EpisodeMetrics) -> "MetricRow":
        success = m.normalized_success
        return cls(episode=episode, scheme=scheme, seed=seed,
                   normalized_success=success,
                   normalized_failure=1.0 - success,
                   mean_team_reward=m.mean_team_reward)


def write_metrics_csv(rows: list[MetricRow], path: str | Path) -> None:
    """Header + one row per (episode, scheme, seed); UTF-8, LF endings."""
    lines = [",".join(METRIC_HEADER)]
    for r in rows:
        lines.append(f"{r.episode},{r.scheme},{r.seed},{r.normalized_success!r},"
                     f"{r.normalized_failure!r},{r.mean_team_reward!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_metrics_csv(path: str | Path) -> list[MetricRow]:
    """Inverse of write_metrics_csv; round-trips losslessly."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or tuple(lines[0].split(",")) != METRIC_HEADER:
        raise ContractViolation(f"{path} lacks the metrics.csv header")
    rows = []
    for line in lines[1:]:
        ep, scheme, seed, ns, nf, mr = line.split(",")
        rows.append(MetricRow(int(ep), scheme, int(seed),
                              float(ns), float(nf), float(mr)))
    return rows


@dataclass(frozen=True)
class UserSweepRow:
    n_devices: int
    scheme: str
    seed: int
    test_normalized_success: float
    test_normalized_failure: float
    test_success_count: float  # mean successful translations per episode
    test_failure_count: float


SWEEP_HEADER = ("n_devices", "scheme", "seed", "test_normalized_success",
                "test_normalized_failure", "test_success_count",
                "test_failure_count")


def write_sweep_csv(rows: list[UserSweepRow], path: str | Path) -> None:
    lines = [",".join(SWEEP_HEADER)]
    for r in rows:
        lines.append(f"{r.n_devices},{r.scheme},{r.seed},"
                     f"{r.test_normalized_success!r},{r.test_normalized_failure!r},"
                     f"{r.test_success_count!r},{r.test_failure_count!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


# ── cell execution ───────────────────────────────────────────────────

def build_env(config: ExperimentConfig,
              seed: int | np.random.SeedSequence) -> SlicingEnv:
    rng = np.random.default_rng(seed)
    return SlicingEnv(config.env, config.catalog, rng=rng)


def run_cell(config: ExperimentConfig, scheme: str, seed: int
             ) -> tuple[list[MetricRow], object | None]:
    """Train (if applicable) and test one (scheme, seed) cell.

    Returns the per-episode rows (train then test, one continuous episode
    index) and the trained agent container for learned schemes.
    """
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme '{scheme}'")
    ss = np.random.SeedSequence(seed)
    env_ss, agent_ss = ss.spawn(2)
    env = build_env(config, env_ss)
    episodes = config.train.episodes
    rows: list[MetricRow] = []
    trainer = None

    if scheme == "proposed":
        trainer = MappoTrainer(env, config.layout, config.train, seed=agent_ss)
        train_metrics = trainer.train(episodes)
        test_metrics = trainer.test(config.test_episodes)
    elif scheme == "self-learning":
        trainer = SelfLearningTrainer(env, config.history_len, config.train,
                                      seed=agent_ss)
        train_metrics = trainer.train(episodes)
        test_metrics = trainer.test(config.test_episodes)
    else:
        kind = (BaselineKind.PERFECT_KNOWLEDGE if scheme == "perfect"
                else BaselineKind.RANDOM_ASSIGNMENT)
        rng = np.random.default_rng(agent_ss)
        train_metrics = [run_static_episode(env, kind, rng)
                         for _ in range(episodes)]
        test_metrics = [run_static_episode(env, kind, rng)
                        for _ in range(config.test_episodes)]

    for i, m in enumerate(train_metrics, start=1):
        rows.append(MetricRow.from_metrics(i, scheme, seed, m))
    for i, m in enumerate(test_metrics, start=episodes + 1):
        rows.append(MetricRow.from_metrics(i, scheme, seed, m))
    return rows, trainer


def summarize(rows: list[MetricRow], train_episodes: int, test_episodes: int,
              failures: list[dict] | None = None) -> dict:
    """Aggregate per-scheme train-tail and test-phase statistics from raw rows."""
    tail = max(1, train_episodes // 10)
    schemes: dict[str, dict] = {}
    for row in rows:
        schemes.setdefault(row.scheme, {}).setdefault(row.seed, []).append(row)

    out: dict = {"version": 1, "train_episodes": train_episodes,
                 "test_episodes": test_episodes,
                 "train_tail_window": tail, "schemes": {},
                 "failures": failures or []}
    for scheme, by_seed in schemes.items():
        per_seed = {}
        tail_means, test_means = [], []
        for seed, seed_rows in sorted(by_seed.items()):
            seed_rows = sorted(seed_rows, key=lambda r: r.episode)
            train_rows = [r for r in seed_rows if r.episode <= train_episodes]
            test_rows = [r for r in seed_rows if r.episode > train_episodes]
            t_mean = float(np.mean([r.normalized_success
                                    for r in train_rows[-tail:]])) if train_rows else None
            s_mean = float(np.mean([r.normalized_success
                                    for r in test_rows])) if test_rows else None
            per_seed[str(seed)] = {"train_tail_success": t_mean,
                                   "test_success": s_mean}
            if t_mean is not None:
                tail_means.append(t_mean)
            if s_mean is not None:
                test_means.append(s_mean)
        out["schemes"][scheme] = {
            "per_seed": per_seed,
            "train_tail_success": {"mean": float(np.mean(tail_means)),
                                   "std": float(np.std(tail_means))} if tail_means else None,
            "test_success": {"mean": float(np.mean(test_means)),
                             "std": float(np.std(test_means))} if test_means else None,
        }
    return out


def _smooth(values: np.ndarray, window: int) -> np.ndarray:
    if len(values) <= window:
        return values
    kernel = np.ones(window) / window
    return np.convolve(values, kernel, mode="valid")


def emit_outputs(rows: list[MetricRow] | None, out_dir: str | Path,
                 summary: dict | None = None,
                 sweep_rows: list[UserSweepRow] | None = None) -> list[Path]:
    """Write metrics.csv, summary.json, and the SVG charts; returns the paths.

    ``rows=None`` skips the per-episode artifacts (sweep-only output); an
    empty list still writes the CSV header.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output dir {out_dir}: {exc}") from exc

    written = []
    if rows is not None:
        csv_path = out_dir / "metrics.csv"
        write_metrics_csv(rows, csv_path)
        written.append(csv_path)

    if summary is not None:
        summary_path = out_dir / "summary.json"
        summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True)
                                + "\n", encoding="utf-8")
        written.append(summary_path)

    if rows:
        for metric, fname in (("normalized_success", "success_vs_episode.svg"),
                              ("normalized_failure", "failure_vs_episode.svg")):
            series = {}
            for scheme in SCHEMES:
                scheme_rows = [r for r in rows if r.scheme == scheme]
                if not scheme_rows:
                    continue
                by_ep: dict[int, list[float]] = {}
                for r in scheme_rows:
                    by_ep.setdefault(r.episode, []).append(getattr(r, metric))
                eps = np.array(sorted(by_ep))
                vals = np.array([np.mean(by_ep[e]) for e in eps])
                smooth = _smooth(vals, SMOOTH_WINDOW)
                series[scheme] = (eps[len(eps) - len(smooth):], smooth)
            if series:
                path = out_dir / fname
                pretty = metric.replace("_", " ")
                line_chart(series,
                           f"{pretty} vs episode ({SMOOTH_WINDOW}-episode "
                           f"moving average)",
                           "episode", pretty, path, y_range=(0.0, 1.0))
                written.append(path)

    if sweep_rows:
        sweep_path = out_dir / "user_sweep.csv"
        write_sweep_csv(sweep_rows, sweep_path)
        written.append(sweep_path)
        for metric, fname, label in (
                ("test_normalized_success", "success_vs_users.svg",
                 "test normalized success"),
                ("test_success_count", "success_count_vs_users.svg",
                 "successful translations per episode")):
            series = {}
            for scheme in SCHEMES:
                pts: dict[int, list[float]] = {}
                for r in sweep_rows:
                    if r.scheme == scheme:
                        pts.setdefault(r.n_devices, []).append(getattr(r, metric))
                if pts:
                    ns = np.array(sorted(pts))
                    series[scheme] = (ns, np.array([np.mean(pts[n]) for n in ns]))
            if series:
                path = out_dir / fname
                line_chart(series, f"{label} vs number of devices (no smoothing)",
                           "number of devices", label, path)
                written.append(path)
    return written


def run_experiment(config: ExperimentConfig,
                   out_dir: str | Path | None = None) -> dict:
    """Execute all (scheme, seed) cells; failures abort only their own cell."""
    out_dir = Path(out_dir if out_dir is not None else config.out_dir)
    rows: list[MetricRow] = []
    failures: list[dict] = []
    for scheme in config.schemes:
        for seed in config.seeds:
            try:
                cell_rows, trainer = run_cell(config, scheme, seed)
            except Exception as exc:  # noqa: BLE001 - cell isolation by design
                logger.error("cell (%s, seed %d) failed: %s", scheme, seed, exc)
                failures.append({"scheme": scheme, "seed": seed,
                                 "error": f"{type(exc).__name__}: {exc}",
                                 "traceback": traceback.format_exc()})
                continue
            rows.extend(cell_rows)
            if trainer is not None:
                ckpt = out_dir / "checkpoints" / f"{scheme}-seed{seed}.npz"
                save_checkpoint(ckpt, config.raw, trainer.state_dict())
    summary = summarize(rows, config.train.episodes, config.test_episodes,
                        failures)
    emit_outputs(rows, out_dir, summary)
    return summary


def _test_metrics_for_cell(config: ExperimentConfig, scheme: str, seed: int
                           ) -> list[EpisodeMetrics]:
    """Train (learned schemes only) and run the greedy/frozen test phase."""
    ss = np.random.SeedSequence(seed)
    env_ss, agent_ss = ss.spawn(2)
    env = build_env(config, env_ss)
    if scheme == "proposed":
        trainer = MappoTrainer(env, config.layout, config.train, seed=agent_ss)
        trainer.train(config.train.episodes)
        return trainer.test(config.test_episodes)
    if scheme == "self-learning":
        trainer = SelfLearningTrainer(env, config.history_len, config.train,
                                      seed=agent_ss)
        trainer.train(config.train.episodes)
        return trainer.test(config.test_episodes)
    kind = (BaselineKind.PERFECT_KNOWLEDGE if scheme == "perfect"
            else BaselineKind.RANDOM_ASSIGNMENT)
    rng = np.random.default_rng(agent_ss)
    return [run_static_episode(env, kind, rng)
            for _ in range(config.test_episodes)]


def with_n_devices(config: ExperimentConfig, n_devices: int) -> ExperimentConfig:
    """Clone a config with a different device count."""
    raw = json.loads(json.dumps(config.raw))
    raw["env"]["n_devices"] = int(n_devices)
    return parse_config(raw)


def evaluate_checkpoint(path: str | Path, episodes: int) -> dict:
    """Load a trained agent and run a frozen-policy greedy test phase."""
    if episodes < 1:
        raise ConfigError("evaluation needs at least one episode")
    raw_config, state = load_checkpoint(path)
    config = parse_config(raw_config)
    kind = state["meta"].get("kind")
    env = build_env(config, 0)  # rng state is overwritten by the checkpoint
    if kind == "mappo":
        trainer: MappoTrainer | SelfLearningTrainer = MappoTrainer(
            env, config.layout, config.train, seed=0)
        scheme = "proposed"
    elif kind == "self-learning":
        trainer = SelfLearningTrainer(env, config.history_len, config.train,
                                      seed=0)
        scheme = "self-learning"
    else:
        raise ContractViolation(f"checkpoint has unknown trainer kind {kind!r}")
    trainer.load_state_dict(state)
    metrics = trainer.test(episodes)
    success = [m.normalized_success for m in metrics]
    return {
        "scheme": scheme,
        "checkpoint": str(path),
        "episodes": episodes,
        "trained_episodes": trainer.episode_count,
        "test_success": {"mean": float(np.mean(success)),
                         "std": float(np.std(success))},
        "test_failure_mean": float(1.0 - np.mean(success)),
        "mean_team_reward": float(np.mean([m.mean_team_reward for m in metrics])),
    }


def sweep_users(config: ExperimentConfig, user_counts: list[int],
                out_dir: str | Path | None = None) -> list[UserSweepRow]:
    """Final-test metrics per device count; every N trains from scratch."""
    if not user_counts or any(int(n) < 1 for n in user_counts):
        raise ConfigError("user counts must be positive integers")
    out_dir = Path(out_dir if out_dir is not None else config.out_dir)
    sweep_rows: list[UserSweepRow] = []
    for n in user_counts:
        cfg_n = with_n_devices(config, n)
        per_episode_total = n * cfg_n.env.episode_len
        for scheme in config.schemes:
            for seed in config.seeds:
                metrics = _test_metrics_for_cell(cfg_n, scheme, seed)
                success = float(np.mean([m.normalized_success for m in metrics]))
                sweep_rows.append(UserSweepRow(
                    n_devices=int(n), scheme=scheme, seed=seed,
                    test_normalized_success=success,
                    test_normalized_failure=1.0 - success,
                    test_success_count=success * per_episode_total,
                    test_failure_count=(1.0 - success) * per_episode_total))
    emit_outputs(None, out_dir, sweep_rows=sweep_rows)
    return sweep_rows
