"""Environment tests: timing math, success scoring, sampling, determinism."""
import numpy as np
import pytest

from emslice.env import (AppClass, EnvConfig, IntentInstance, IntentRanges,
                         SliceCatalog, SliceSpec, SlicingEnv,
                         compute_time, evaluate_allocation, feasible_mask,
                         is_satisfied, sample_intent, sample_intent_batch,
                         uplink_time)
from emslice.errors import ConfigError, ContractViolation


def make_intent(size=100.0, cycles=100.0, up_dl=0.01, comp_dl=0.01,
                app=AppClass.URLLC):
    return IntentInstance(app_class=app, task_size_bits=size,
                          cycles_per_bit=cycles, uplink_deadline_s=up_dl,
                          compute_deadline_s=comp_dl, storage_bits=300.0,
                          reliability=1e-3)


def raw_slice(rate, cpu):
    """Bypass SliceSpec validation to probe the timing ops' own guards."""
    s = object.__new__(SliceSpec)
    object.__setattr__(s, "slice_id", 1)
    object.__setattr__(s, "uplink_rate_bps", rate)
    object.__setattr__(s, "cpu_rate_hz", cpu)
    return s


class TestTimingOps:
    def test_uplink_time_cases(self):
        assert uplink_time(make_intent(size=100), SliceSpec(1, 10_000, 1e9)) == 0.01
        assert uplink_time(make_intent(size=500), SliceSpec(1, 50_000, 1e9)) == 0.01
        assert uplink_time(make_intent(size=500), SliceSpec(1, 10_000, 1e9)) == 0.05

    def test_compute_time_cases(self):
        assert compute_time(make_intent(size=100, cycles=100),
                            SliceSpec(1, 1e4, 1e6)) == 0.01
        assert compute_time(make_intent(size=500, cycles=5e4),
                            SliceSpec(1, 1e4, 2.5e9)) == 0.01
        assert compute_time(make_intent(size=100, cycles=1e2),
                            SliceSpec(1, 1e4, 2e5)) == 0.05

    def test_nonpositive_rates_rejected(self):
        with pytest.raises(ValueError):
            uplink_time(make_intent(), raw_slice(0.0, 1e6))
        with pytest.raises(ValueError):
            compute_time(make_intent(), raw_slice(1e4, -5.0))
        with pytest.raises(ConfigError):
            SliceSpec(1, 0.0, 1e6)

    def test_inverse_scaling_exact(self, rng):
        for _ in range(1000):
            intent = make_intent(size=float(rng.uniform(100, 500)),
                                 cycles=float(rng.uniform(1e2, 5e4)))
            rate = float(rng.uniform(1e3, 1e5))
            cpu = float(rng.uniform(1e6, 5e9))
            assert uplink_time(intent, SliceSpec(1, rate, cpu)) > 0
            assert compute_time(intent, SliceSpec(1, rate, cpu)) > 0
            assert (uplink_time(intent, SliceSpec(1, rate / 2, cpu))
                    == 2 * uplink_time(intent, SliceSpec(1, rate, cpu)))


class TestIsSatisfied:
    def test_boundary_inclusive(self):
        intent = make_intent(size=100, cycles=100, up_dl=0.01, comp_dl=0.01)
        assert is_satisfied(intent, SliceSpec(1, 1e4, 1e6))

    def test_one_deadline_violated(self):
        intent = make_intent(size=500, up_dl=0.01, comp_dl=0.05)
        assert not is_satisfied(intent, SliceSpec(1, 1e4, 1e9))

    def test_feasible_mask_matches_bruteforce(self, catalog, rng):
        for _ in range(50):
            intent = sample_intent(rng, IntentRanges())
            brute = np.array([uplink_time(intent, s) <= intent.uplink_deadline_s
                              and compute_time(intent, s) <= intent.compute_deadline_s
                              for s in catalog.slices])
            assert np.array_equal(feasible_mask(intent, catalog), brute)

    def test_monotone_in_capabilities(self, rng):
        for _ in range(1000):
            intent = sample_intent(rng, IntentRanges())
            r_b, f_b = float(rng.uniform(1e3, 1e5)), float(rng.uniform(1e5, 5e9))
            strong = SliceSpec(1, r_b * float(rng.uniform(1, 4)),
                               f_b * float(rng.uniform(1, 4)))
            weak = SliceSpec(2, r_b, f_b)
            if is_satisfied(intent, weak):
                assert is_satisfied(intent, strong)


class TestSampling:
    def test_collapsed_ranges_force_values(self, rng):
        ranges = IntentRanges(task_size_bits=(100, 100),
                              cycles_per_bit=(1e2, 1e2),
                              uplink_deadline_s=(1e-2, 1e-2),
                              compute_deadline_s=(1e-2, 1e-2))
        intent = sample_intent(rng, ranges)
        assert intent.task_size_bits == 100
        assert intent.cycles_per_bit == 100
        assert intent.uplink_deadline_s == 0.01
        assert intent.compute_deadline_s == 0.01

    def test_cloned_rng_reproduces(self, ranges):
        a = sample_intent(np.random.default_rng(99), ranges)
        b = sample_intent(np.random.default_rng(99), ranges)
        assert a == b

    def test_uniform_moments(self, ranges):
        rng = np.random.default_rng(7)
        sizes = np.array([sample_intent(rng, ranges).task_size_bits
                          for _ in range(10_000)])
        assert sizes.min() >= 100 and sizes.max() <= 500
        assert abs(sizes.mean() - 300) < 10

    def test_batch_matches_field_ranges(self, ranges, rng):
        intents = sample_intent_batch(rng, ranges, 500)
        assert len(intents) == 500
        for intent in intents[:20]:
            assert 100 <= intent.task_size_bits <= 500
            assert 5e-5 <= intent.reliability <= 1e-2
        assert {i.app_class for i in intents} == {AppClass.URLLC, AppClass.EMBB}

    def test_invalid_ranges_rejected(self):
        with pytest.raises(ConfigError):
            IntentRanges(task_size_bits=(500, 100)).validate()
        with pytest.raises(ConfigError):
            IntentRanges(cycles_per_bit=(-1, 10)).validate()

    def test_nonpositive_intent_fields_rejected(self):
        with pytest.raises(ConfigError):
            make_intent(size=-3.0)


class TestCatalog:
    def test_default_covers_table_ranges(self, catalog, ranges):
        catalog.validate_coverage(ranges)  # must not raise
        assert len(catalog) == 10
        assert catalog.uplink_rates[0] == pytest.approx(5e3)
        assert catalog.uplink_rates[-1] == pytest.approx(1e5)

    def test_coverage_violation_raises(self, ranges):
        weak = SliceCatalog([SliceSpec(1, 1e3, 1e6)])
        with pytest.raises(ConfigError):
            weak.validate_coverage(ranges)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ConfigError):
            SliceCatalog([SliceSpec(1, 1e4, 1e8), SliceSpec(1, 1e4, 1e8)])

    def test_every_sampled_intent_has_feasible_slice(self, catalog):
        # vectorized brute force over a large intent sample
        rng = np.random.default_rng(11)
        n = 100_000
        sizes = rng.uniform(100, 500, n)
        cycles = rng.uniform(1e2, 5e4, n)
        up_dl = rng.uniform(1e-2, 5e-2, n)
        comp_dl = rng.uniform(1e-2, 5e-2, n)
        rates = catalog.uplink_rates[None, :]
        cpus = catalog.cpu_rates[None, :]
        ok = ((sizes[:, None] / rates <= up_dl[:, None])
              & (sizes[:, None] * cycles[:, None] / cpus <= comp_dl[:, None]))
        assert ok.any(axis=1).all()


class TestStepOutcome:
    def test_all_feasible(self, env):
        intents = env.reset()
        outcome, _, _ = env.step(np.full(env.n_devices, 10))
        assert outcome.per_md_success.all()
        assert outcome.team_reward == env.n_devices * 1.0
        assert (outcome.downlink == 1).all()

    def test_all_infeasible(self, catalog):
        intents = [make_intent(size=500, cycles=5e4, up_dl=0.01, comp_dl=0.01)
                   for _ in range(4)]
        outcome = evaluate_allocation(intents, np.full(4, 1), catalog)
        assert not outcome.per_md_success.any()
        assert outcome.team_reward == -4.0

    def test_mixed_case_matches_oracle(self, catalog, rng):
        # 3 of 5 feasible -> team reward (3 - 2) * rho with rho = 1
        intents = [sample_intent(rng, IntentRanges()) for _ in range(5)]
        allocation = np.array([10, 10, 10, 1, 1])
        outcome = evaluate_allocation(intents, allocation, catalog)
        oracle = [is_satisfied(i, catalog.by_id(int(c)))
                  for i, c in zip(intents, allocation)]
        assert outcome.per_md_success.tolist() == oracle
        assert sum(oracle) == 3 and outcome.team_reward == pytest.approx(1.0)

    def test_reward_identity_property(self, env, rng):
        # team_reward == rho * (2 * successes - N) on every step
        total_steps = 0
        while total_steps < 1000:
            env.reset()
            done = False
            while not done:
                alloc = rng.integers(1, env.n_slices + 1, env.n_devices)
                outcome, _, done = env.step(alloc)
                n_succ = int(outcome.per_md_success.sum())
                assert outcome.team_reward == pytest.approx(
                    1.0 * (2 * n_succ - env.n_devices))
                assert np.array_equal(outcome.downlink,
                                      outcome.per_md_success.astype(int))
                total_steps += 1

    def test_reward_scale(self, catalog):
        env = SlicingEnv(EnvConfig(reward_scale=2.5), catalog, seed=3)
        env.reset()
        outcome, _, _ = env.step(np.full(5, 10))
        assert outcome.team_reward == pytest.approx(5 * 2.5)


class TestEnvContract:
    def test_malformed_allocation(self, env):
        env.reset()
        with pytest.raises(ContractViolation):
            env.step(np.array([1, 2, 3]))  # missing entries
        with pytest.raises(ContractViolation):
            env.step(np.array([1, 2, 3, 4, 99]))  # unknown slice id
        with pytest.raises(ContractViolation):
            env.step(np.array([0, 1, 2, 3, 4]))  # ids are 1-based

    def test_episode_termination(self, env):
        env.reset()
        for t in range(env.config.episode_len):
            outcome, nxt, done = env.step(np.full(5, 10))
        assert done and nxt is None
        with pytest.raises(ContractViolation):
            env.step(np.full(5, 10))

    def test_fixed_seed_bit_identical_streams(self, catalog):
        logs = []
        for _ in range(2):
            env = SlicingEnv(EnvConfig(), catalog, seed=77)
            alloc_rng = np.random.default_rng(5)
            stream = []
            for _ in range(20):
                intents = env.reset()
                stream.extend((i.task_size_bits, i.cycles_per_bit) for i in intents)
                done = False
                while not done:
                    outcome, _, done = env.step(
                        alloc_rng.integers(1, 11, env.n_devices))
                    stream.append(tuple(outcome.per_md_success.tolist()))
            logs.append(stream)
        assert logs[0] == logs[1]
