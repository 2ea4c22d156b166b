"""Similarity scoring, merge planning, merge/unmerge, and the refiner."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexrate import (
    ACOUSTIC,
    SEMANTIC,
    ConfigError,
    FeatureSequence,
    MergedSequence,
    MergePlan,
    PlanMismatchError,
    adjacent_similarity,
    apply_merge,
    plan_merge,
    refine_context,
    synth_piecewise_constant,
    unmerge,
)


def seq_of(rows, rate=Fraction(25, 2), kind=SEMANTIC):
    return FeatureSequence(np.asarray(rows, dtype=np.float32), rate, kind)


class TestAdjacentSimilarity:
    def test_orthogonal_parallel_and_opposite(self):
        seq = seq_of([[1, 0], [0, 1], [0, 2], [0, -1]])
        sims = adjacent_similarity(seq)
        assert sims.shape == (3,)
        assert sims[0] == pytest.approx(0.0)
        assert sims[1] == pytest.approx(1.0)
        assert sims[2] == pytest.approx(-1.0)

    def test_zero_norm_frame_scores_zero(self):
        seq = seq_of([[1, 1], [0, 0], [0, 0]])
        assert np.array_equal(adjacent_similarity(seq), [0.0, 0.0])

    def test_short_sequences_give_empty(self):
        assert adjacent_similarity(seq_of([[1.0]])).shape == (0,)
        empty = FeatureSequence(np.zeros((0, 3), dtype=np.float32), 12.5, SEMANTIC)
        assert adjacent_similarity(empty).shape == (0,)

    def test_identical_rows_score_exactly_one(self):
        seq = synth_piecewise_constant(1, (6, 6), 4, seed=5)
        assert np.all(adjacent_similarity(seq) == 1.0)


class TestPlanMerge:
    def test_greedy_oracle(self):
        # hand-traced: runs of 3 capped at l_max=3, boundary at the 0.2 score
        plan = plan_merge([0.9, 0.9, 0.2, 0.95, 0.95, 0.95], tau=0.5, l_max=3)
        assert plan.lengths == (3, 3, 1)
        assert plan.source_frame_count == 7

    def test_tau_one_never_merges(self):
        plan = plan_merge([1.0, 1.0, 1.0], tau=1.0)
        assert plan.lengths == (1, 1, 1, 1)

    def test_tau_above_one_never_merges(self):
        assert plan_merge([1.0], tau=1.5).lengths == (1, 1)

    def test_boundary_score_equal_to_tau_merges(self):
        assert plan_merge([0.5], tau=0.5).lengths == (2,)
        assert plan_merge([0.4999], tau=0.5).lengths == (1, 1)

    def test_l_max_one_forces_singletons(self):
        plan = plan_merge([0.99, 0.99], tau=0.1, l_max=1)
        assert plan.lengths == (1, 1, 1)

    def test_empty_sims_is_single_frame(self):
        assert plan_merge([], tau=0.5).lengths == (1,)

    def test_rejects_bad_l_max(self):
        with pytest.raises(ConfigError):
            plan_merge([0.5], tau=0.5, l_max=0)

    @given(
        sims=st.lists(st.floats(-1, 1, width=32), max_size=120),
        tau=st.floats(-0.5, 1.2),
        l_max=st.integers(1, 10),
    )
    @settings(deadline=None, max_examples=300)
    def test_partition_invariants(self, sims, tau, l_max):
        plan = plan_merge(sims, tau, l_max)
        assert sum(plan.lengths) == len(sims) + 1
        assert all(1 <= length <= l_max for length in plan.lengths)

    @given(
        sims=st.lists(st.floats(-1, 1, width=32), min_size=1, max_size=80),
        lo=st.floats(0, 1),
        hi=st.floats(0, 1),
    )
    @settings(deadline=None, max_examples=200)
    def test_merged_count_monotone_in_tau(self, sims, lo, hi):
        lo, hi = min(lo, hi), max(lo, hi)
        assert plan_merge(sims, lo).num_merged <= plan_merge(sims, hi).num_merged


class TestMergePlanValidation:
    def test_rejects_wrong_total(self):
        with pytest.raises(ConfigError):
            MergePlan((2, 2), source_frame_count=5, tau=0.5)

    def test_rejects_out_of_range_lengths(self):
        with pytest.raises(ConfigError):
            MergePlan((0, 5), source_frame_count=5, tau=0.5)
        with pytest.raises(ConfigError):
            MergePlan((9,), source_frame_count=9, tau=0.5)

    def test_num_merged(self):
        assert MergePlan((3, 1), 4, tau=None).num_merged == 2


class TestApplyMerge:
    def test_segment_means(self):
        seq = seq_of([[0.0, 0.0], [2.0, 4.0], [4.0, 8.0]])
        merged = apply_merge(seq, MergePlan((2, 1), 3, tau=0.5))
        assert merged.vectors.dtype == np.float64
        assert np.array_equal(merged.vectors, [[1.0, 2.0], [4.0, 8.0]])
        assert merged.base_rate_hz == Fraction(25, 2)
        assert merged.stream_kind == SEMANTIC

    def test_plan_mismatch(self):
        seq = seq_of([[1.0], [2.0]])
        with pytest.raises(PlanMismatchError):
            apply_merge(seq, MergePlan((3,), 3, tau=0.5))

    def test_average_rate_property(self):
        seq = seq_of([[1.0]] * 8)
        merged = apply_merge(seq, MergePlan((8,), 8, tau=0.1))
        assert merged.average_frame_rate_hz == pytest.approx(12.5 / 8)

    def test_empty_sequence(self):
        seq = FeatureSequence(np.zeros((0, 3), dtype=np.float32), 12.5, ACOUSTIC)
        merged = apply_merge(seq, MergePlan((), 0, tau=0.5))
        assert merged.num_merged == 0
        assert merged.average_frame_rate_hz == 0.0
        assert unmerge(merged).num_frames == 0

    def test_vector_count_must_match_plan(self):
        with pytest.raises(PlanMismatchError):
            MergedSequence(
                vectors=np.ones((3, 2)),
                plan=MergePlan((2,), 2, tau=0.5),
                base_rate_hz=Fraction(25, 2),
                stream_kind=SEMANTIC,
            )


class TestUnmergeRoundtrip:
    def plan_from_rows(self, frames, l_max=8):
        lengths = []
        run = 1
        for t in range(1, frames.shape[0]):
            if np.array_equal(frames[t], frames[t - 1]) and run < l_max:
                run += 1
            else:
                lengths.append(run)
                run = 1
        lengths.append(run)
        return MergePlan(tuple(lengths), frames.shape[0], tau=None, l_max=l_max)

    def test_piecewise_exact_roundtrip(self):
        # means over identical float32 rows are exact, so unmerge restores bits
        for seed in range(20):
            seq = synth_piecewise_constant(10, (1, 8), 5, seed=seed)
            plan = self.plan_from_rows(seq.frames)
            restored = unmerge(apply_merge(seq, plan))
            assert restored == seq
            assert np.array_equal(restored.frames, seq.frames)

    def test_roundtrip_preserves_rate_and_kind(self):
        seq = synth_piecewise_constant(
            4, (2, 3), 3, seed=1, frame_rate_hz=Fraction(25, 3), stream_kind=ACOUSTIC
        )
        restored = unmerge(apply_merge(seq, self.plan_from_rows(seq.frames)))
        assert restored.frame_rate_hz == Fraction(25, 3)
        assert restored.stream_kind == ACOUSTIC

    @given(lengths=st.lists(st.integers(1, 8), min_size=1, max_size=40))
    @settings(deadline=None, max_examples=100)
    def test_repetition_counts_follow_plan(self, lengths):
        plan = MergePlan(tuple(lengths), sum(lengths), tau=None)
        rng = np.random.default_rng(0)
        merged = MergedSequence(
            vectors=rng.normal(size=(len(lengths), 3)),
            plan=plan,
            base_rate_hz=Fraction(25, 2),
            stream_kind=SEMANTIC,
        )
        out = unmerge(merged)
        assert out.num_frames == sum(lengths)
        pos = 0
        for k, length in enumerate(lengths):
            expected = merged.vectors[k].astype(np.float32)
            for _ in range(length):
                assert np.array_equal(out.frames[pos], expected)
                pos += 1


class TestRefineContext:
    def test_identity_returns_input_object(self):
        seq = seq_of([[1.0], [2.0]])
        assert refine_context(seq, mode="identity") is seq

    def test_windowed_mean_oracle(self):
        # window 1 over [0,1,2,3,4]: edge-clipped means
        seq = seq_of([[0.0], [1.0], [2.0], [3.0], [4.0]])
        out = refine_context(seq, window=1, mode="windowed_mean")
        assert np.array_equal(out.frames.ravel(), [0.5, 1.0, 2.0, 3.0, 3.5])

    def test_window_zero_is_identity_valued(self):
        seq = seq_of([[1.5], [2.5], [3.5]])
        out = refine_context(seq, window=0, mode="windowed_mean")
        assert np.array_equal(out.frames, seq.frames)

    def test_window_spanning_everything_gives_global_mean(self):
        seq = seq_of([[0.0], [2.0], [4.0]])
        out = refine_context(seq, window=10, mode="windowed_mean")
        assert np.array_equal(out.frames.ravel(), [2.0, 2.0, 2.0])

    def test_merged_sequence_path_keeps_plan(self):
        seq = seq_of([[0.0], [2.0], [4.0], [6.0]])
        merged = apply_merge(seq, MergePlan((2, 2), 4, tau=0.5))
        out = refine_context(merged, window=1, mode="windowed_mean")
        assert isinstance(out, MergedSequence)
        assert out.plan == merged.plan
        assert np.array_equal(out.vectors.ravel(), [3.0, 3.0])

    def test_rejects_unknown_mode_and_bad_window(self):
        seq = seq_of([[1.0]])
        with pytest.raises(ConfigError):
            refine_context(seq, mode="median")
        with pytest.raises(ConfigError):
            refine_context(seq, window=-1, mode="windowed_mean")
        with pytest.raises(ConfigError):
            refine_context([[1.0]], mode="windowed_mean")

    def test_empty_inputs_pass_through(self):
        seq = FeatureSequence(np.zeros((0, 2), dtype=np.float32), 12.5, SEMANTIC)
        assert refine_context(seq, mode="windowed_mean") is seq
