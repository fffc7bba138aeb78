import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from optune_lab.errors import DomainError, NumericError
from optune_lab.policy import (
    GenerationConfig,
    PolicyParams,
    PromptSpace,
    derive_rng,
    nucleus_truncate,
    optimal_policy,
    policy_distribution,
    sample_response,
    sampling_distribution,
)

finite = st.floats(-20, 20, allow_nan=False)


def test_prompt_space_bounds():
    with pytest.raises(DomainError):
        PromptSpace(0, 4)
    with pytest.raises(DomainError):
        PromptSpace(3, 1)


def test_generation_defaults():
    cfg = GenerationConfig()
    assert (cfg.temperature, cfg.top_p) == (1.0, 0.9)
    with pytest.raises(DomainError):
        GenerationConfig(temperature=0.0)
    with pytest.raises(DomainError):
        GenerationConfig(top_p=0.0)


class TestPolicyDistribution:
    @pytest.mark.parametrize("temperature", [0.1, 1.0, 7.5])
    def test_constant_row_is_uniform(self, temperature):
        policy = PolicyParams([[3.0, 3.0, 3.0, 3.0]])
        np.testing.assert_allclose(policy_distribution(policy, 0, temperature), [0.25] * 4, atol=1e-15)

    def test_ln2_row(self):
        policy = PolicyParams([[math.log(2), 0.0]])
        np.testing.assert_allclose(policy_distribution(policy, 0, 1.0), [2 / 3, 1 / 3], atol=1e-15)

    def test_high_temperature_limit(self):
        policy = PolicyParams([[1.0, 0.0]])
        np.testing.assert_allclose(policy_distribution(policy, 0, 1e6), [0.5, 0.5], atol=1e-6)

    def test_out_of_range_prompt(self):
        with pytest.raises(DomainError):
            policy_distribution(PolicyParams([[0.0, 1.0]]), 1)

    def test_non_finite_logits(self):
        with pytest.raises(NumericError):
            PolicyParams([[np.inf, 0.0]])

    @given(arrays(float, (3, 5), elements=finite), st.floats(0.05, 50))
    def test_rows_are_distributions(self, logits, temperature):
        policy = PolicyParams(logits)
        for x in range(3):
            p = policy_distribution(policy, x, temperature)
            assert np.all(p >= 0)
            assert abs(p.sum() - 1) <= 1e-12


class TestNucleus:
    def test_top_p_one_is_identity(self):
        p = np.array([0.1, 0.2, 0.3, 0.4])
        np.testing.assert_array_equal(nucleus_truncate(p, 1.0), p)

    def test_cumulative_cut(self):
        np.testing.assert_allclose(nucleus_truncate([0.6, 0.3, 0.1], 0.9), [2 / 3, 1 / 3, 0], atol=1e-15)

    def test_tie_break_keeps_smaller_ids(self):
        np.testing.assert_allclose(nucleus_truncate([0.25] * 4, 0.5), [0.5, 0.5, 0, 0])

    def test_rejects_invalid_distribution(self):
        with pytest.raises(NumericError):
            nucleus_truncate([0.5, 0.6], 0.9)
        with pytest.raises(NumericError):
            nucleus_truncate([1.2, -0.2], 0.9)

    def test_reapplication_can_shrink_support(self):
        # the smallest-prefix rule is not idempotent: renormalizing the kept
        # mass can push a shorter prefix over top_p
        once = nucleus_truncate([0.4, 0.3, 0.3], 0.5)
        np.testing.assert_allclose(once, [4 / 7, 3 / 7, 0])
        np.testing.assert_allclose(nucleus_truncate(once, 0.5), [1, 0, 0])

    @given(
        arrays(float, 6, elements=st.floats(0, 1, allow_nan=False)).filter(lambda a: a.sum() > 1e-3),
        st.floats(0.01, 1.0),
    )
    def test_output_is_distribution_on_a_prefix(self, raw, top_p):
        p = raw / raw.sum()
        out = nucleus_truncate(p, top_p)
        assert np.all(out >= 0) and abs(out.sum() - 1) <= 1e-12
        kept = out > 0
        assert p[kept].sum() >= top_p - 1e-9
        # every kept entry is at least as likely as every dropped one
        if kept.any() and (~kept).any():
            assert p[kept].min() >= p[~kept].max()
        # a second pass never grows the support
        again = nucleus_truncate(out, top_p)
        assert set(np.flatnonzero(again)) <= set(np.flatnonzero(out))

    @given(arrays(float, 5, elements=st.floats(0.01, 1)), st.floats(0.01, 1.0))
    def test_idempotent_at_full_mass_and_singletons(self, raw, top_p):
        p = raw / raw.sum()
        np.testing.assert_array_equal(nucleus_truncate(nucleus_truncate(p, 1.0), 1.0), p)
        out = nucleus_truncate(p, top_p)
        if np.count_nonzero(out) == 1:
            np.testing.assert_array_equal(nucleus_truncate(out, top_p), out)


class TestSampling:
    def test_degenerate_distribution(self):
        policy = PolicyParams([[0.0, -800.0, -800.0]])
        rng = derive_rng(0, 1)
        assert {sample_response(policy, 0, GenerationConfig(), rng) for _ in range(200)} == {0}

    def test_seeded_sequence_repeats(self):
        policy = PolicyParams(np.random.default_rng(1).normal(size=(2, 6)))
        cfg = GenerationConfig(top_p=1.0)
        draw = lambda: [sample_response(policy, 1, cfg, derive_rng(9, 3)) for _ in range(5)]
        seq = lambda: (lambda g: [sample_response(policy, 1, cfg, g) for _ in range(50)])(derive_rng(9, 3))
        assert draw() == draw()
        assert seq() == seq()

    def test_monte_carlo_frequencies(self):
        policy = PolicyParams([[math.log(2), 0.0]])
        cfg = GenerationConfig(top_p=1.0)
        rng = derive_rng(2024)
        n = 100_000
        hits = sum(sample_response(policy, 0, cfg, rng) == 0 for _ in range(n))
        se = math.sqrt(n * (2 / 3) * (1 / 3))
        assert abs(hits - n * 2 / 3) <= 3 * se

    def test_draws_respect_nucleus(self):
        policy = PolicyParams([[math.log(6), math.log(3), 0.0]])  # (0.6, 0.3, 0.1)
        rng = derive_rng(5)
        draws = {sample_response(policy, 0, GenerationConfig(top_p=0.9), rng) for _ in range(2000)}
        assert draws == {0, 1}
        np.testing.assert_allclose(sampling_distribution(policy, 0, GenerationConfig()), [2 / 3, 1 / 3, 0])


class TestOptimalPolicy:
    def test_constant_rewards_return_reference(self, rng):
        ref = PolicyParams(rng.normal(size=(3, 4)))
        out = optimal_policy(ref, np.full((3, 4), 2.5), 0.3)
        np.testing.assert_allclose(out.probs(), ref.probs(), atol=1e-12)

    def test_two_response_formula(self):
        out = optimal_policy(PolicyParams([[0.0, 0.0]]), [[1.0, 0.0]], 1.0)
        e = math.e
        np.testing.assert_allclose(out.probs()[0], [e / (1 + e), 1 / (1 + e)], atol=1e-15)
        assert out.probs()[0, 0] == pytest.approx(0.7311, abs=1e-4)

    def test_large_beta_recovers_reference(self, rng):
        ref = PolicyParams(rng.normal(size=(4, 5)))
        out = optimal_policy(ref, rng.normal(size=(4, 5)), 1e6)
        tv = 0.5 * np.abs(out.probs() - ref.probs()).sum(axis=1)
        assert tv.max() <= 1e-5

    def test_small_beta_does_not_overflow(self, rng):
        ref = PolicyParams(rng.normal(size=(2, 3)))
        out = optimal_policy(ref, [[1.0, 0.0, 0.5], [3.0, 2.0, 1.0]], 1e-4)
        np.testing.assert_allclose(out.probs(), [[1, 0, 0], [1, 0, 0]], atol=1e-12)

    def test_rejects_nonpositive_beta(self):
        with pytest.raises(DomainError):
            optimal_policy(PolicyParams([[0.0, 0.0]]), [[1.0, 0.0]], 0.0)

    @settings(max_examples=50)
    @given(
        arrays(float, (3, 4), elements=finite),
        arrays(float, (3, 4), elements=st.floats(-5, 5)),
        arrays(float, (3, 1), elements=st.floats(-100, 100)),
        st.floats(0.05, 10),
    )
    def test_shift_invariance(self, ref_logits, rewards, shift, beta):
        ref = PolicyParams(ref_logits)
        a = optimal_policy(ref, rewards, beta).probs()
        b = optimal_policy(ref, rewards + shift, beta).probs()
        np.testing.assert_allclose(a, b, atol=1e-10)
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)


def test_derived_streams_are_independent_of_order():
    a = [derive_rng(7, 0, t, x).random() for t in range(3) for x in range(4)]
    b = [derive_rng(7, 0, t, x).random() for x in reversed(range(4)) for t in range(3)]
    assert sorted(a) == sorted(b)
    assert len(set(a)) == len(a)
