"""Sliding-window inference: coverage, call counts, and guidance."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lqe import rng
from lqe.denoisers import make_target_walk, perfect_target_denoiser
from lqe.errors import ConfigError, SizeError, StateError
from lqe.sampler import SamplerState
from lqe.schedule import FrameLatent, LatentQueue, build_schedule
from lqe.trace import GenerationTrace
from lqe.window import (
    expected_call_count,
    infer_queue_once,
    infer_queue_once_guided,
    run_window_pass,
    select_guidance_indices,
)


def call_count_oracle(L, f0, stride, m_guid=0):
    """Enumerate window starts the way a hand simulation would."""
    if L <= f0:
        return 1
    local = f0 - m_guid if m_guid else f0
    count, s = 0, 0
    while s + local < L:
        count += 1
        s += stride
    return count + 1  # final flush-with-tail window


def make_queue(levels, l=4, d=3, seed=0):
    return LatentQueue(items=[
        FrameLatent(rng.normal(seed, i + 1, "q", (l, d)), i + 1, lv)
        for i, lv in enumerate(levels)
    ])


@pytest.fixture(scope="module")
def env():
    schedule = build_schedule(64)
    targets = make_target_walk(300, l=4, d=3, seed=0)
    return SamplerState(schedule), perfect_target_denoiser(targets, schedule)


class TestSelectGuidanceIndices:
    def test_disabled_when_not_enough_prefix(self):
        assert select_guidance_indices(3, 6, 4) is None
        assert select_guidance_indices(6, 6, 4) is None

    def test_even_spacing_example(self):
        assert select_guidance_indices(41, 4, 4) == [25, 30, 35, 40]

    def test_collapsed_range(self):
        assert select_guidance_indices(5, 4, 4) == [1, 2, 3, 4]

    def test_single_guide(self):
        assert select_guidance_indices(10, 1, 4) == [9]

    @given(st.integers(1, 400), st.integers(1, 10), st.integers(1, 8))
    def test_properties(self, l, m_guid, L_zig):
        out = select_guidance_indices(l, m_guid, L_zig)
        if l <= m_guid:
            assert out is None
            return
        assert len(out) == m_guid
        assert out == sorted(set(out))
        assert out[-1] == l - 1
        assert out[0] >= l - min(m_guid * L_zig, l - 1)

    @given(st.integers(7, 400))
    def test_random_sampling_valid(self, l):
        out = select_guidance_indices(l, 6, 4, sample="random", seed=1)
        assert len(out) == 6 and out == sorted(set(out)) and out[-1] == l - 1
        assert out == select_guidance_indices(l, 6, 4, sample="random", seed=1)


class TestCallCounts:
    def test_pinned_examples(self, env):
        sampler, den = env
        assert infer_queue_once(make_queue(range(1, 65)), den, sampler, 16, 8) == 7
        assert run_window_pass(make_queue(range(1, 65)), den, sampler, 16, 8,
                               m_guid=6, L_zig=1) == 8
        assert infer_queue_once(make_queue([10 + i // 4 for i in range(216)]),
                                den, sampler, 16, 8) == 26

    def test_single_window(self, env):
        sampler, den = env
        q = make_queue([5] * 16)
        assert infer_queue_once(q, den, sampler, 16, 8) == 1
        assert q.levels() == [4] * 16

    @settings(max_examples=60)
    @given(st.integers(2, 30), st.integers(0, 120), st.data())
    def test_formula_matches_simulation(self, f0, extra, data):
        L = f0 + extra
        stride = data.draw(st.integers(1, f0))
        m_guid = data.draw(st.integers(0, f0 - 1))
        if m_guid and f0 - m_guid < stride:
            m_guid = 0
        assert expected_call_count(L, f0, stride, m_guid) == \
            call_count_oracle(L, f0, stride, m_guid)

    @settings(max_examples=25)
    @given(st.integers(16, 90), st.integers(1, 16))
    def test_executed_count_matches_formula(self, L, stride, env):
        sampler, den = env
        q = make_queue([30] * L)
        calls = infer_queue_once(q, den, sampler, 16, stride)
        assert calls == expected_call_count(L, 16, stride)


class TestPassSemantics:
    def test_every_level_decrements_once(self, env):
        sampler, den = env
        for levels in ([30] * 40, list(range(1, 65)),
                       [10 + i // 4 for i in range(56)]):
            q = make_queue(levels)
            infer_queue_once(q, den, sampler, 16, 8)
            assert q.levels() == [lv - 1 for lv in levels]

    def test_commit_exactly_once_odd_remainder(self, env):
        # L - f0 not a multiple of stride: the final window overlaps, the
        # filter must still commit each position exactly once.
        sampler, den = env
        for L in (17, 19, 21, 23, 45):
            q = make_queue([30] * L)
            infer_queue_once(q, den, sampler, 16, 8)
            assert q.levels() == [29] * L

    def test_errors(self, env):
        sampler, den = env
        with pytest.raises(SizeError):
            infer_queue_once(make_queue([5] * 10), den, sampler, 16, 8)
        with pytest.raises(StateError):
            infer_queue_once(make_queue([0] + [1] * 15), den, sampler, 16, 8)
        with pytest.raises(ConfigError):
            run_window_pass(make_queue([5] * 20), den, sampler, 16, 8, m_guid=12)

    def test_commit_from_freezes_prefix(self, env):
        sampler, den = env
        q = make_queue([20] * 4 + [30] * 12)
        before = [it.data.copy() for it in q.items[:4]]
        run_window_pass(q, den, sampler, 16, 8, commit_from=4, allow_small=True)
        assert q.levels() == [20] * 4 + [29] * 12
        for b, it in zip(before, q.items[:4]):
            assert np.array_equal(b, it.data)

    def test_empty_queue_noop(self, env):
        sampler, den = env
        assert infer_queue_once(LatentQueue(), den, sampler, 16, 8) == 0


class TestGuidance:
    def test_guidance_latents_untouched(self, env):
        sampler, den = env
        q = make_queue(list(range(1, 65)))
        before = [it.data.copy() for it in q.items]
        run_window_pass(q, den, sampler, 16, 8, m_guid=6, L_zig=1)
        # All levels stepped once regardless of guidance reads.
        assert q.levels() == list(range(0, 64))
        changed = [not np.array_equal(b, it.data)
                   for b, it in zip(before, q.items)]
        assert all(changed)

    def test_guided_matches_unguided_with_exact_oracle(self, env):
        sampler, den = env
        levels = [10 + i // 4 for i in range(64)]
        q1, q2 = make_queue(levels), make_queue(levels)
        infer_queue_once(q1, den, sampler, 16, 8)
        infer_queue_once_guided(q2, den, sampler, 16, 8, m_guid=6, L_zig=4)
        for a, b in zip(q1.items, q2.items):
            np.testing.assert_allclose(a.data, b.data, atol=1e-4)

    def test_m_guid_zero_identical(self, env):
        sampler, den = env
        q1, q2 = make_queue([30] * 40), make_queue([30] * 40)
        c1 = infer_queue_once(q1, den, sampler, 16, 8)
        c2 = infer_queue_once_guided(q2, den, sampler, 16, 8, m_guid=0, L_zig=4)
        assert c1 == c2
        for a, b in zip(q1.items, q2.items):
            assert np.array_equal(a.data, b.data)

    def test_trace_records_guidance_and_width(self, env):
        sampler, den = env
        trace = GenerationTrace()
        q = make_queue(list(range(1, 65)))
        run_window_pass(q, den, sampler, 16, 8, m_guid=6, L_zig=1,
                        trace=trace, phase="x")
        windows = [e for e in trace.events if e["kind"] == "window"]
        assert len(windows) == 8
        assert all(e["width"] <= 16 for e in windows)
        unguided = [e for e in windows if not e["guided"]]
        assert [e["start"] for e in unguided] == [1]  # start 1 <= m_guid
        for e in windows:
            if e["guided"]:
                assert len(e["guidance_indices"]) == 6
                assert e["guidance_indices"][-1] == e["start"] - 1
