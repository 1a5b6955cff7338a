"""Consistency scoring and the self-reflection search machinery."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lqe import rng
from lqe.config import preset
from lqe.consistency import (
    ConsistencyWindows,
    ReflectionState,
    c_score,
    expand_search,
    latents_c_score,
    maybe_correct,
    noisy_score_correlation,
    reflection_cost,
    reflection_rates,
    score_curve,
    should_trigger,
)
from lqe.denoisers import make_target_walk, perfect_target_denoiser
from lqe.errors import (
    DegenerateInputError,
    ParameterError,
    StateError,
    UndefinedSignal,
)
from lqe.generators import make_sampler
from lqe.sampler import SamplerState
from lqe.schedule import FrameLatent, LatentQueue, build_schedule


def c_score_oracle(q_eval, q_ref):
    """Element-wise loop reimplementation, no vectorized shortcuts."""
    def pooled(frames):
        out = []
        for frame in frames:
            v = [sum(frame[t][c] for t in range(len(frame))) / len(frame)
                 for c in range(len(frame[0]))]
            n = math.sqrt(sum(x * x for x in v))
            out.append([x / n for x in v])
        return out

    pe, pr = pooled(q_eval.tolist()), pooled(q_ref.tolist())
    total = 0.0
    for a in pe:
        for b in pr:
            total += sum(x * y for x, y in zip(a, b))
    return total / (len(pe) * len(pr))


class TestCScore:
    def test_matches_brute_force_oracle(self):
        gen = np.random.default_rng(0)
        for _ in range(100):
            qe = gen.standard_normal((4, 16, 8)).astype(np.float32)
            qr = gen.standard_normal((8, 16, 8)).astype(np.float32)
            assert c_score(qe, qr) == pytest.approx(c_score_oracle(qe, qr), abs=1e-6)

    def test_repeated_frame_scores_one(self):
        one = np.random.default_rng(1).standard_normal((1, 16, 8)).astype(np.float32)
        q = np.tile(one, (4, 1, 1))
        assert c_score(q, np.tile(one, (8, 1, 1))) == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal_chunks_score_zero(self):
        qe = np.zeros((2, 4, 4), dtype=np.float32)
        qr = np.zeros((3, 4, 4), dtype=np.float32)
        qe[:, :, 0] = 1.0
        qr[:, :, 1] = 1.0
        assert c_score(qe, qr) == pytest.approx(0.0, abs=1e-12)

    def test_swap_symmetry(self):
        gen = np.random.default_rng(2)
        qe = gen.standard_normal((4, 6, 5)).astype(np.float32)
        qr = gen.standard_normal((7, 6, 5)).astype(np.float32)
        assert c_score(qe, qr) == pytest.approx(c_score(qr, qe), abs=1e-12)

    @settings(max_examples=30)
    @given(st.floats(1e-3, 1e3), st.integers(0, 10**6))
    def test_positive_rescale_invariance(self, alpha, seed):
        gen = np.random.default_rng(seed)
        qe = gen.standard_normal((4, 6, 5)).astype(np.float32)
        qr = gen.standard_normal((8, 6, 5)).astype(np.float32)
        assert c_score(alpha * qe, qr) == pytest.approx(c_score(qe, qr), abs=1e-6)

    def test_bounds(self):
        gen = np.random.default_rng(3)
        for _ in range(20):
            qe = gen.standard_normal((3, 4, 4)).astype(np.float32)
            qr = gen.standard_normal((5, 4, 4)).astype(np.float32)
            assert -1.0 <= c_score(qe, qr) <= 1.0

    def test_zero_norm_rejected(self):
        qe = np.zeros((2, 4, 4), dtype=np.float32)
        qr = np.ones((2, 4, 4), dtype=np.float32)
        with pytest.raises(DegenerateInputError):
            c_score(qe, qr)

    def test_shape_validation(self):
        with pytest.raises(ParameterError):
            c_score(np.ones((2, 4)), np.ones((2, 4, 4)))
        with pytest.raises(ParameterError):
            c_score(np.ones((2, 4, 4)), np.ones((2, 4, 5)))
        with pytest.raises(ParameterError):
            c_score(np.ones((0, 4, 4)), np.ones((2, 4, 4)))


class TestScoreCurve:
    def test_constant_sequence_all_ones(self):
        frames = np.tile(np.random.default_rng(0)
                         .standard_normal((1, 8, 4)).astype(np.float32), (20, 1, 1))
        rows = score_curve(frames)
        assert len(rows) == 20 - 8 - 4 + 1
        assert all(s == pytest.approx(1.0, abs=1e-9) for _, s in rows)

    def test_positions(self):
        frames = np.random.default_rng(0).standard_normal((20, 8, 4)).astype(np.float32)
        rows = score_curve(frames, f_eval=4, f_ref=8)
        assert [p for p, _ in rows] == list(range(9, 18))

    def test_jump_minimum_localized(self):
        tg = make_target_walk(64, seed=5, discontinuities=(30,))
        pos = min(score_curve(tg.targets), key=lambda r: r[1])[0]
        assert abs(pos - 30) <= 4


class TestNoisyScoreCorrelation:
    def test_level_zero_perfect(self, sampler):
        tg = make_target_walk(30, seed=1)
        out = noisy_score_correlation(tg.targets, [0], sampler)
        assert out[0] == pytest.approx(1.0)

    def test_needs_twenty_frames(self, sampler):
        tg = make_target_walk(19, seed=1)
        with pytest.raises(ParameterError):
            noisy_score_correlation(tg.targets, [0], sampler)

    def test_constant_curve_undefined(self, sampler):
        frames = np.tile(np.random.default_rng(0)
                         .standard_normal((1, 8, 4)).astype(np.float32), (25, 1, 1))
        with pytest.raises(UndefinedSignal):
            noisy_score_correlation(frames, [0], sampler)

    def test_deterministic(self, sampler):
        tg = make_target_walk(30, seed=2)
        a = noisy_score_correlation(tg.targets, [32], sampler, seed=7)
        b = noisy_score_correlation(tg.targets, [32], sampler, seed=7)
        assert a == b


class TestShouldTrigger:
    def test_first_observation_seeds_baseline(self):
        s = ReflectionState()
        assert should_trigger(s, 0.9, 0.01) is False
        assert s.prev_score == 0.9

    def test_zero_decrease_no_trigger(self):
        s = ReflectionState(prev_score=0.90)
        assert should_trigger(s, 0.90, 0.01) is False

    def test_decrease_beyond_delta_triggers(self):
        s = ReflectionState(prev_score=0.90)
        assert should_trigger(s, 0.885, 0.01) is True
        assert s.prev_score == 0.90  # left for the correction step

    def test_improvement_updates_baseline(self):
        s = ReflectionState(prev_score=0.90)
        assert should_trigger(s, 0.95, 0.01) is False
        assert s.prev_score == 0.95


class TestConsistencyWindows:
    def test_valid(self):
        ConsistencyWindows(f_eval=4, f_ref=8, f_judg=205, f_guid=8)

    @pytest.mark.parametrize("kw", [
        dict(f_eval=0, f_ref=8, f_judg=20, f_guid=8),
        dict(f_eval=9, f_ref=8, f_judg=20, f_guid=8),
        dict(f_eval=4, f_ref=8, f_judg=8, f_guid=8),
        dict(f_eval=4, f_ref=8, f_judg=20, f_guid=7),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ParameterError):
            ConsistencyWindows(**kw)


def steady_queue(config, n_frames=250, seed=0):
    """A stage-1 steady-state queue: groups spanning tau_e .. tau_{T-1}."""
    L = config.init_queue_length
    items = [
        FrameLatent(
            rng.normal(seed, i + 1, "q", (config.l, config.d)),
            i + 1,
            config.e + i // config.L_zig,
        )
        for i in range(L)
    ]
    return LatentQueue(items=items, group_width=config.L_zig)


@pytest.fixture(scope="module")
def search_env():
    config = preset("videocrafter2-like", mode="tta+dce", N=64, n_samp=2)
    schedule = build_schedule(config.T)
    targets = make_target_walk(250, seed=0)
    return config, SamplerState(schedule), perfect_target_denoiser(targets, schedule)


FJ = 201  # group-aligned judgment index for the 216-frame steady queue


class TestExpandSearch:
    def test_candidate_shape(self, search_env):
        config, sampler, den = search_env
        q = steady_queue(config)
        cands = expand_search(q, config, sampler, den, FJ)
        assert len(cands) == 2
        assert all(len(c) == 216 - FJ + 1 for c in cands)

    def test_levels_and_frames_match_incumbent(self, search_env):
        config, sampler, den = search_env
        q = steady_queue(config)
        tail = q.items[FJ - 1:]
        for cand in expand_search(q, config, sampler, den, FJ):
            assert [x.level for x in cand] == [x.level for x in tail]
            assert [x.frame_index for x in cand] == [x.frame_index for x in tail]

    def test_prefix_bit_identical(self, search_env):
        config, sampler, den = search_env
        q = steady_queue(config)
        before = [it.data.copy() for it in q.items[:FJ - 1]]
        expand_search(q, config, sampler, den, FJ)
        for b, it in zip(before, q.items[:FJ - 1]):
            assert np.array_equal(b, it.data)

    def test_candidates_differ_across_k(self, search_env):
        config, sampler, den = search_env
        q = steady_queue(config)
        c0, c1 = expand_search(q, config, sampler, den, FJ)
        assert not all(np.array_equal(a.data, b.data) for a, b in zip(c0, c1))

    def test_same_tags_replay_bit_exactly(self, search_env):
        # Splice a candidate in, regenerate with the same noise keys: the
        # rebuilt tail must equal the incumbent bit for bit.
        config, sampler, den = search_env
        q = steady_queue(config)
        tags = ["replay-a", "replay-b"]
        cands = expand_search(q, config, sampler, den, FJ, noise_tags=tags)
        q.items[FJ - 1:] = [x.copy() for x in cands[1]]
        again = expand_search(q, config, sampler, den, FJ, noise_tags=tags)
        assert all(np.array_equal(a.data, b.data)
                   for a, b in zip(again[1], q.items[FJ - 1:]))

    def test_misaligned_judgment_rejected(self, search_env):
        # f_judg off the group grid would need candidates enqueued above
        # the top of the ladder.
        config, sampler, den = search_env
        q = steady_queue(config)
        with pytest.raises(StateError):
            expand_search(q, config, sampler, den, 200)

    def test_insufficient_prefix(self, search_env):
        config, sampler, den = search_env
        q = steady_queue(config)
        with pytest.raises(StateError):
            expand_search(q, config, sampler, den, 5)


class TestMaybeCorrect:
    def _queue_and_candidates(self, config, seeds):
        q = steady_queue(config)
        tail = q.items[FJ - 1:]
        cands = []
        for s in seeds:
            gen = np.random.default_rng(s)
            cands.append([
                FrameLatent(
                    gen.standard_normal((config.l, config.d)).astype(np.float32),
                    x.frame_index, x.level,
                )
                for x in tail
            ])
        refs = q.items[FJ - 1 - config.f_ref:FJ - 1]
        scores = [latents_c_score(c[:config.f_eval], refs) for c in cands]
        return q, cands, scores

    def test_worse_candidates_keep_incumbent(self, search_env):
        config, _, _ = search_env
        q, cands, scores = self._queue_and_candidates(config, (100, 101))
        state = ReflectionState(n_all=1)
        snapshot = [x.data.copy() for x in q.items[FJ - 1:]]
        c_init = max(scores) + 1.0
        corrected = maybe_correct(q, cands, config, state, FJ, c_init)
        assert corrected is False
        assert state.n_eval == 1 and state.n_corr == 0
        assert state.prev_score == c_init
        assert all(np.array_equal(a, b.data)
                   for a, b in zip(snapshot, q.items[FJ - 1:]))

    def test_best_candidate_spliced_and_score_monotone(self, search_env):
        config, _, _ = search_env
        q, cands, scores = self._queue_and_candidates(config, (100, 101, 102))
        state = ReflectionState(n_all=1)
        best = int(np.argmax(scores))
        corrected = maybe_correct(q, cands, config, state, FJ,
                                  min(scores) - 1.0)
        assert corrected is True
        assert state.n_corr == 1
        assert state.prev_score == pytest.approx(scores[best])
        for a, b in zip(q.items[FJ - 1:], cands[best]):
            assert np.array_equal(a.data, b.data)

    def test_tie_break_lowest_index(self, search_env):
        config, _, _ = search_env
        q, cands, scores = self._queue_and_candidates(config, (100, 100))
        # Same eval chunk, distinguishable payload past it: exact score tie.
        cands[0][config.f_eval].data[0, 0] = 7.0
        cands[1][config.f_eval].data[0, 0] = -7.0
        state = ReflectionState(n_all=1)
        maybe_correct(q, cands, config, state, FJ, min(scores) - 1.0)
        assert q.items[FJ - 1 + config.f_eval].data[0, 0] == 7.0


class TestReflectionAccounting:
    def test_cost_examples(self):
        assert reflection_cost(3, 2, 216, 200, 4) == 30
        assert reflection_cost(0, 2, 216, 200, 4) == 0
        assert reflection_cost(1, 4, 216, 205, 4) == 12

    def test_cost_validation(self):
        with pytest.raises(ParameterError):
            reflection_cost(-1, 2, 216, 200, 4)
        with pytest.raises(ParameterError):
            reflection_cost(1, 0, 216, 200, 4)

    def test_rates(self):
        assert reflection_rates(ReflectionState(n_all=100, n_eval=10, n_corr=5)) \
            == (0.05, 0.5)
        assert reflection_rates(ReflectionState(n_all=10, n_eval=4)) == (0.0, 0.0)
        assert reflection_rates(ReflectionState()) == (None, None)
        assert reflection_rates(ReflectionState(n_all=3)) == (0.0, None)

    def test_counter_ordering_enforced(self):
        s = ReflectionState(n_all=1, n_eval=2, n_corr=0)
        with pytest.raises(StateError):
            s.check()
