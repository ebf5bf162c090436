"""Network-slicing environment for intent profiling and translation.

Each of N device agents generates one application intent per step; the
network assigns one slice per device and the environment scores the
assignment by checking the uplink and compute deadlines against the slice
capabilities.  Rewards are +/- reward_scale per device, the team reward is
their sum, and the environment feeds back a truthful per-device success bit
(the downlink message).  Episodes last ``episode_len`` steps.

All randomness flows through a single ``numpy.random.Generator`` owned by
the environment instance, so a fixed seed yields bit-identical intent
streams and outcomes.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError, ContractViolation


class AppClass(enum.IntEnum):
    URLLC = 0
    EMBB = 1


@dataclass(frozen=True)
class IntentInstance:
    """One application task request (a QoE intent).

    ``storage_bits`` and ``reliability`` are carried in the data model but
    never enter the success check; only the two deadlines are scored.
    """

    app_class: AppClass
    task_size_bits: float
    cycles_per_bit: float
    uplink_deadline_s: float
    compute_deadline_s: float
    storage_bits: float
    reliability: float

    def __post_init__(self) -> None:
        if min(self.task_size_bits, self.cycles_per_bit, self.uplink_deadline_s,
               self.compute_deadline_s, self.storage_bits, self.reliability) <= 0.0:
            raise ConfigError("intent fields must be strictly positive")


@dataclass(frozen=True)
class IntentRanges:
    """Uniform sampling ranges for intent fields, as (lo, hi) pairs."""

    task_size_bits: tuple[float, float] = (100.0, 500.0)
    cycles_per_bit: tuple[float, float] = (1e2, 5e4)
    uplink_deadline_s: tuple[float, float] = (1e-2, 5e-2)
    compute_deadline_s: tuple[float, float] = (1e-2, 5e-2)
    storage_bits: tuple[float, float] = (200.0, 600.0)
    reliability: tuple[float, float] = (5e-5, 1e-2)

    def validate(self) -> None:
        for f in fields(self):
            lo, hi = getattr(self, f.name)
            if not (0.0 < lo <= hi) or not (math.isfinite(lo) and math.isfinite(hi)):
                raise ConfigError(f"bad range for {f.name}: ({lo}, {hi})")


@dataclass(frozen=True)
class SliceSpec:
    """A network slice's capability pair: uplink rate and CPU rate."""

    slice_id: int  # 1-based index within the catalog
    uplink_rate_bps: float
    cpu_rate_hz: float

    def __post_init__(self) -> None:
        if self.uplink_rate_bps <= 0.0 or self.cpu_rate_hz <= 0.0:
            raise ConfigError(f"slice {self.slice_id}: capabilities must be positive")


class SliceCatalog:
    """Ordered set of M slices; slice ids are 1..M."""

    def __init__(self, slices: list[SliceSpec]):
        if not slices:
            raise ConfigError("catalog needs at least one slice")
        ids = [s.slice_id for s in slices]
        if len(set(ids)) != len(ids):
            raise ConfigError("slice ids must be unique")
        self.slices = list(slices)
        self.uplink_rates = np.array([s.uplink_rate_bps for s in slices])
        self.cpu_rates = np.array([s.cpu_rate_hz for s in slices])

    def __len__(self) -> int:
        return len(self.slices)

    def __getitem__(self, index: int) -> SliceSpec:
        return self.slices[index]

    def by_id(self, slice_id: int) -> SliceSpec:
        return self.slices[slice_id - 1]

    @classmethod
    def default(cls, n_slices: int = 10,
                uplink_range: tuple[float, float] = (5e3, 1e5),
                cpu_range: tuple[float, float] = (1e6, 5e9)) -> "SliceCatalog":
        """Log-spaced capabilities paired index-wise, weakest to strongest."""
        rates = np.geomspace(uplink_range[0], uplink_range[1], n_slices)
        cpus = np.geomspace(cpu_range[0], cpu_range[1], n_slices)
        return cls([SliceSpec(i + 1, float(r), float(f))
                    for i, (r, f) in enumerate(zip(rates, cpus))])

    def validate_coverage(self, ranges: IntentRanges) -> None:
        """Check that the catalog covers the worst-case intent demands."""
        max_rate_demand = ranges.task_size_bits[1] / ranges.uplink_deadline_s[0]
        max_cpu_demand = (ranges.task_size_bits[1] * ranges.cycles_per_bit[1]
                          / ranges.compute_deadline_s[0])
        if self.uplink_rates.max() < max_rate_demand:
            raise ConfigError(
                f"catalog max uplink rate {self.uplink_rates.max():g} bps cannot "
                f"cover worst-case demand {max_rate_demand:g} bps")
        if self.cpu_rates.max() < max_cpu_demand:
            raise ConfigError(
                f"catalog max cpu rate {self.cpu_rates.max():g} Hz cannot "
                f"cover worst-case demand {max_cpu_demand:g} Hz")


@dataclass
class StepOutcome:
    """Result of applying one slice allocation to the current intents."""

    per_md_success: np.ndarray  # (N,) bool
    per_md_reward: np.ndarray   # (N,) float, +/- reward_scale
    team_reward: float
    downlink: np.ndarray        # (N,) int 0/1, truthful success bit


def sample_intent(rng: np.random.Generator, ranges: IntentRanges) -> IntentInstance:
    """Draw one intent, each field uniform over its configured range."""
    app = AppClass(int(rng.integers(2)))

    def u(pair: tuple[float, float]) -> float:
        return float(rng.uniform(pair[0], pair[1]))

    return IntentInstance(
        app_class=app,
        task_size_bits=u(ranges.task_size_bits),
        cycles_per_bit=u(ranges.cycles_per_bit),
        uplink_deadline_s=u(ranges.uplink_deadline_s),
        compute_deadline_s=u(ranges.compute_deadline_s),
        storage_bits=u(ranges.storage_bits),
        reliability=u(ranges.reliability),
    )


def sample_intent_batch(rng: np.random.Generator, ranges: IntentRanges,
                        n: int) -> list[IntentInstance]:
    """Draw n intents at once (field-major draws; faster than n scalar calls)."""
    apps = rng.integers(2, size=n)

    def u(pair: tuple[float, float]) -> np.ndarray:
        return rng.uniform(pair[0], pair[1], size=n)

    cols = (u(ranges.task_size_bits), u(ranges.cycles_per_bit),
            u(ranges.uplink_deadline_s), u(ranges.compute_deadline_s),
            u(ranges.storage_bits), u(ranges.reliability))
    return [IntentInstance(AppClass(int(apps[i])), *(float(c[i]) for c in cols))
            for i in range(n)]


def uplink_time(intent: IntentInstance, slice_spec: SliceSpec) -> float:
    """Transmission time of the task over the slice's uplink."""
    if slice_spec.uplink_rate_bps <= 0.0:
        raise ValueError("uplink rate must be positive")
    return intent.task_size_bits / slice_spec.uplink_rate_bps


def compute_time(intent: IntentInstance, slice_spec: SliceSpec) -> float:
    """Processing time of the task on the slice's CPU."""
    if slice_spec.cpu_rate_hz <= 0.0:
        raise ValueError("cpu rate must be positive")
    return intent.task_size_bits * intent.cycles_per_bit / slice_spec.cpu_rate_hz


def is_satisfied(intent: IntentInstance, slice_spec: SliceSpec) -> bool:
    """True iff both timing deadlines hold (inclusive comparison)."""
    return (uplink_time(intent, slice_spec) <= intent.uplink_deadline_s
            and compute_time(intent, slice_spec) <= intent.compute_deadline_s)


def feasible_mask(intent: IntentInstance, catalog: SliceCatalog) -> np.ndarray:
    """Boolean mask over the catalog: which slices satisfy this intent."""
    up_ok = intent.task_size_bits / catalog.uplink_rates <= intent.uplink_deadline_s
    comp_ok = (intent.task_size_bits * intent.cycles_per_bit / catalog.cpu_rates
               <= intent.compute_deadline_s)
    return up_ok & comp_ok


def evaluate_allocation(intents: list[IntentInstance], allocation: np.ndarray,
                        catalog: SliceCatalog, reward_scale: float = 1.0) -> StepOutcome:
    """Score one allocation: success bits, rewards, team reward, downlink.

    ``allocation`` holds one slice id (1..M) per device.
    """
    n = len(intents)
    alloc = np.asarray(allocation)
    if alloc.shape != (n,):
        raise ContractViolation(
            f"allocation must hold exactly one slice per device: "
            f"expected shape ({n},), got {alloc.shape}")
    if not np.issubdtype(alloc.dtype, np.integer):
        if not np.all(alloc == np.floor(alloc)):
            raise ContractViolation("allocation entries must be integer slice ids")
        alloc = alloc.astype(np.int64)
    if alloc.min() < 1 or alloc.max() > len(catalog):
        raise ContractViolation(
            f"slice ids must lie in 1..{len(catalog)}, got {alloc.tolist()}")

    sizes = np.array([i.task_size_bits for i in intents])
    cycles = np.array([i.cycles_per_bit for i in intents])
    up_dl = np.array([i.uplink_deadline_s for i in intents])
    comp_dl = np.array([i.compute_deadline_s for i in intents])
    rates = catalog.uplink_rates[alloc - 1]
    cpus = catalog.cpu_rates[alloc - 1]
    success = (sizes / rates <= up_dl) & (sizes * cycles / cpus <= comp_dl)
    reward = np.where(success, reward_scale, -reward_scale)
    return StepOutcome(
        per_md_success=success,
        per_md_reward=reward,
        team_reward=float(reward.sum()),
        downlink=success.astype(np.int64),
    )


@dataclass
class EnvConfig:
    n_devices: int = 5
    episode_len: int = 15
    reward_scale: float = 1.0
    ranges: IntentRanges = field(default_factory=IntentRanges)

    def validate(self) -> None:
        if self.n_devices < 1:
            raise ConfigError("need at least one device")
        if self.episode_len < 1:
            raise ConfigError("episode length must be positive")
        if self.reward_scale <= 0.0:
            raise ConfigError("reward scale must be positive")
        self.ranges.validate()


class SlicingEnv:
    """Episodic slicing environment; single-threaded, owns its RNG.

    reset() samples the first batch of intents; each step() scores the
    given allocation against the current intents and samples fresh intents
    for the next step.  After episode_len steps the episode is done and
    reset() must be called again.
    """

    def __init__(self, config: EnvConfig, catalog: SliceCatalog,
                 seed: int | None = None,
                 rng: np.random.Generator | None = None):
        config.validate()
        catalog.validate_coverage(config.ranges)
        self.config = config
        self.catalog = catalog
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.current_intents: list[IntentInstance] = []
        self.step_index = 0
        self._needs_reset = True

    @property
    def n_devices(self) -> int:
        return self.config.n_devices

    @property
    def n_slices(self) -> int:
        return len(self.catalog)

    def reset(self) -> list[IntentInstance]:
        self.step_index = 0
        self._needs_reset = False
        self.current_intents = sample_intent_batch(self.rng, self.config.ranges,
                                                   self.config.n_devices)
        return self.current_intents

    def step(self, allocation: np.ndarray
             ) -> tuple[StepOutcome, list[IntentInstance] | None, bool]:
        """Apply an allocation; returns (outcome, next_intents, done)."""
        if self._needs_reset:
            raise ContractViolation("episode is over; call reset() first")
        outcome = evaluate_allocation(self.current_intents, allocation,
                                      self.catalog, self.config.reward_scale)
        self.step_index += 1
        done = self.step_index >= self.config.episode_len
        if done:
            self._needs_reset = True
            next_intents = None
        else:
            next_intents = sample_intent_batch(self.rng, self.config.ranges,
                                               self.config.n_devices)
            self.current_intents = next_intents
        return outcome, next_intents, done

    def rng_state(self) -> dict:
        return self.rng.bit_generator.state

    def set_rng_state(self, state: dict) -> None:
        self.rng.bit_generator.state = state
