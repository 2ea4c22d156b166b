"""Dual-stream encode/decode and the FLXC bitstream."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexrate import (
    ACOUSTIC,
    SEMANTIC,
    AlignmentError,
    CodecMismatchError,
    ConfigError,
    CorruptionError,
    EncodeOptions,
    FeatureSequence,
    FormatError,
    TokenStream,
    adjacent_similarity,
    apply_merge,
    bits_for,
    decode,
    encode,
    feat_alignment_distance,
    fsq_fit,
    fsq_quantize_frames,
    load_bitstream,
    pack,
    plan_merge,
    rvq_encode_frames,
    rvq_fit,
    save_bitstream,
    synth_piecewise_constant,
    synth_random_walk,
    unpack,
)

HEADER_SIZE = 42


@pytest.fixture(scope="module")
def fitted():
    """Small fitted codec pair plus an aligned training pair of streams."""
    rng = np.random.default_rng(42)
    dim = 10
    sem = synth_piecewise_constant(40, (1, 8), dim, seed=0)
    noise = rng.normal(0, 0.05, size=sem.frames.shape).astype(np.float32)
    ac = FeatureSequence(sem.frames + noise, sem.frame_rate_hz, ACOUSTIC)
    plan = plan_merge(adjacent_similarity(sem), 0.9)
    merged_sem = apply_merge(sem, plan)
    merged_ac = apply_merge(ac, plan)
    fsq = fsq_fit(merged_sem.vectors, latent_dim=3, levels=6)
    _, _, recon = fsq_quantize_frames(fsq, merged_sem.vectors)
    rvq = rvq_fit(merged_ac.vectors - recon, 4, 16, 10, seed=1)
    return fsq, rvq, sem, ac


def make_stream(lengths, n_q=8, base=Fraction(25, 2), fingerprint=None, seed=0):
    rng = np.random.default_rng(seed)
    lengths = np.asarray(lengths, dtype=np.int64)
    count = lengths.shape[0]
    return TokenStream(
        semantic_indices=rng.integers(0, 32768, size=count),
        lengths=lengths,
        acoustic_indices=rng.integers(0, 4096, size=(n_q - 1, count)),
        n_q=n_q,
        base_rate_hz=base,
        source_frame_count=int(lengths.sum()),
        fsq_dims=5,
        fsq_levels=8,
        rvq_size=4096,
        codec_fingerprint=fingerprint,
    )


class TestBitsFor:
    def test_frozen_widths(self):
        assert bits_for(8) == 3
        assert bits_for(32768) == 15
        assert bits_for(4096) == 12
        assert bits_for(1) == 0
        assert bits_for(2) == 1
        assert bits_for(3) == 2

    def test_rejects_empty_range(self):
        with pytest.raises(ConfigError):
            bits_for(0)


class TestEncodeOptions:
    def test_defaults(self):
        opts = EncodeOptions()
        assert opts.tau == 1.0
        assert opts.n_q == 8
        assert opts.l_max == 8

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"tau": 0.0},
            {"tau": 1.5},
            {"n_q": 0},
            {"l_max": 0},
            {"refiner_window": -1},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ConfigError):
            EncodeOptions(**kwargs)


class TestTokenStreamValidation:
    def test_lengths_must_sum_to_source_count(self):
        with pytest.raises(ConfigError, match="sum"):
            TokenStream(
                semantic_indices=np.array([0]),
                lengths=np.array([2]),
                acoustic_indices=np.zeros((0, 1), dtype=np.int64),
                n_q=1,
                base_rate_hz=Fraction(25, 2),
                source_frame_count=3,
                fsq_dims=5,
                fsq_levels=8,
                rvq_size=4096,
            )

    def test_index_ranges(self):
        with pytest.raises(ConfigError, match="semantic"):
            TokenStream(
                semantic_indices=np.array([32768]),
                lengths=np.array([1]),
                acoustic_indices=np.zeros((0, 1), dtype=np.int64),
                n_q=1,
                base_rate_hz=Fraction(25, 2),
                source_frame_count=1,
                fsq_dims=5,
                fsq_levels=8,
                rvq_size=4096,
            )

    def test_acoustic_shape_must_match_n_q(self):
        with pytest.raises(ConfigError, match="acoustic"):
            TokenStream(
                semantic_indices=np.array([0]),
                lengths=np.array([1]),
                acoustic_indices=np.zeros((3, 1), dtype=np.int64),
                n_q=2,
                base_rate_hz=Fraction(25, 2),
                source_frame_count=1,
                fsq_dims=5,
                fsq_levels=8,
                rvq_size=4096,
            )

    def test_equality_ignores_fingerprint(self):
        a = make_stream([1, 2, 3], fingerprint=None)
        b = make_stream([1, 2, 3], fingerprint=123456)
        assert a == b
        assert a != make_stream([1, 2, 3], seed=9)

    def test_duration(self):
        ts = make_stream([8, 8, 8, 1])
        assert ts.duration_s == pytest.approx(25 / 12.5)
        assert ts.merged_frame_count == 4


class TestEncode:
    def test_plan_comes_from_semantic_stream(self, fitted):
        fsq, rvq, sem, ac = fitted
        opts = EncodeOptions(tau=0.9, n_q=4)
        ts = encode(sem, ac, fsq, rvq, opts)
        plan = plan_merge(adjacent_similarity(sem), 0.9)
        assert tuple(int(v) for v in ts.lengths) == plan.lengths
        assert ts.source_frame_count == sem.num_frames
        assert ts.n_q == 4
        assert ts.acoustic_indices.shape == (3, plan.num_merged)

    def test_residual_is_against_fsq_reconstruction(self, fitted):
        fsq, rvq, sem, ac = fitted
        opts = EncodeOptions(tau=0.9, n_q=4)
        ts = encode(sem, ac, fsq, rvq, opts)
        plan = plan_merge(adjacent_similarity(sem), 0.9)
        merged_sem = apply_merge(sem, plan)
        merged_ac = apply_merge(ac, plan)
        sem_idx, _, recon = fsq_quantize_frames(fsq, merged_sem.vectors)
        ac_idx, _, _ = rvq_encode_frames(rvq, merged_ac.vectors - recon, 3)
        assert np.array_equal(ts.semantic_indices, sem_idx)
        assert np.array_equal(ts.acoustic_indices, ac_idx)

    def test_tau_one_keeps_every_frame(self, fitted):
        fsq, rvq, sem, ac = fitted
        ts = encode(sem, ac, fsq, rvq, EncodeOptions(tau=1.0, n_q=2))
        assert ts.merged_frame_count == sem.num_frames
        assert np.all(ts.lengths == 1)

    def test_n_q_one_emits_no_acoustic_rows(self, fitted):
        fsq, rvq, sem, ac = fitted
        ts = encode(sem, ac, fsq, None, EncodeOptions(tau=0.9, n_q=1))
        assert ts.acoustic_indices.shape[0] == 0
        assert ts.rvq_size == 1

    def test_empty_pair(self, fitted):
        fsq, rvq, _, _ = fitted
        empty_sem = FeatureSequence(np.zeros((0, 10), np.float32), 12.5, SEMANTIC)
        empty_ac = FeatureSequence(np.zeros((0, 10), np.float32), 12.5, ACOUSTIC)
        ts = encode(empty_sem, empty_ac, fsq, rvq, EncodeOptions(tau=0.9, n_q=3))
        assert ts.merged_frame_count == 0
        assert ts.source_frame_count == 0

    def test_alignment_errors(self, fitted):
        fsq, rvq, sem, ac = fitted
        with pytest.raises(AlignmentError, match="kind"):
            encode(ac, ac, fsq, rvq, EncodeOptions())
        short = FeatureSequence(ac.frames[:-1], ac.frame_rate_hz, ACOUSTIC)
        with pytest.raises(AlignmentError, match="lengths"):
            encode(sem, short, fsq, rvq, EncodeOptions())
        slow = FeatureSequence(ac.frames, Fraction(25, 3), ACOUSTIC)
        with pytest.raises(AlignmentError, match="rates"):
            encode(sem, slow, fsq, rvq, EncodeOptions())

    def test_layer_budget_errors(self, fitted):
        fsq, rvq, sem, ac = fitted
        with pytest.raises(ConfigError):
            encode(sem, ac, fsq, None, EncodeOptions(n_q=2))
        with pytest.raises(ConfigError):
            encode(sem, ac, fsq, rvq, EncodeOptions(n_q=rvq.num_layers + 2))


class TestDecode:
    def test_roundtrip_restores_timeline(self, fitted):
        fsq, rvq, sem, ac = fitted
        ts = encode(sem, ac, fsq, rvq, EncodeOptions(tau=0.9, n_q=5))
        out = decode(ts, fsq, rvq)
        assert out.num_frames == sem.num_frames
        assert out.frame_rate_hz == sem.frame_rate_hz
        assert out.stream_kind == ACOUSTIC
        assert out.source_tag == "decoded"

    def test_more_layers_reconstruct_better(self, fitted):
        fsq, rvq, sem, ac = fitted
        errors = []
        for n_q in (1, 2, 5):
            ts = encode(sem, ac, fsq, rvq if n_q > 1 else None,
                        EncodeOptions(tau=0.9, n_q=n_q))
            out = decode(ts, fsq, rvq if n_q > 1 else None)
            errors.append(feat_alignment_distance(out.frames, ac.frames))
        assert errors[2] < errors[1] < errors[0]

    def test_decode_is_deterministic(self, fitted):
        fsq, rvq, sem, ac = fitted
        ts = encode(sem, ac, fsq, rvq, EncodeOptions(tau=0.9, n_q=4))
        assert decode(ts, fsq, rvq) == decode(ts, fsq, rvq)

    def test_fingerprint_gate(self, fitted):
        fsq, rvq, sem, ac = fitted
        ts = encode(sem, ac, fsq, rvq, EncodeOptions(tau=0.9, n_q=3))
        stamped = unpack(pack(ts, 0xDEADBEEF))
        with pytest.raises(CodecMismatchError, match="encoded with codec"):
            decode(stamped, fsq, rvq)

    def test_zero_fingerprint_skips_verification(self, fitted):
        fsq, rvq, sem, ac = fitted
        ts = encode(sem, ac, fsq, rvq, EncodeOptions(tau=0.9, n_q=3))
        unstamped = unpack(pack(ts, 0))
        assert decode(unstamped, fsq, rvq) == decode(ts, fsq, rvq)

    def test_geometry_mismatch(self, fitted):
        fsq, rvq, sem, ac = fitted
        ts = make_stream([1, 2], n_q=3)
        with pytest.raises(CodecMismatchError):
            decode(ts, fsq, rvq)

    def test_refined_decode_differs_but_keeps_shape(self, fitted):
        fsq, rvq, sem, ac = fitted
        ts = encode(sem, ac, fsq, rvq, EncodeOptions(tau=0.9, n_q=4))
        plain = decode(ts, fsq, rvq)
        smooth = decode(ts, fsq, rvq, refiner_mode="windowed_mean", refiner_window=2)
        assert smooth.num_frames == plain.num_frames
        assert not np.array_equal(smooth.frames, plain.frames)

    def test_empty_stream_decodes_empty(self, fitted):
        fsq, rvq, _, _ = fitted
        ts = TokenStream(
            semantic_indices=np.zeros(0, dtype=np.int64),
            lengths=np.zeros(0, dtype=np.int64),
            acoustic_indices=np.zeros((2, 0), dtype=np.int64),
            n_q=3,
            base_rate_hz=Fraction(25, 2),
            source_frame_count=0,
            fsq_dims=fsq.latent_dim,
            fsq_levels=fsq.levels,
            rvq_size=rvq.codebook_size,
        )
        out = decode(ts, fsq, rvq)
        assert out.num_frames == 0
        assert out.dim == fsq.input_dim


class TestPack:
    def test_frozen_single_frame_payload(self):
        # one frame, n_q=1, length 3, semantic index 5:
        # bits are '010' + '000000000000101' padded to 3 bytes
        ts = TokenStream(
            semantic_indices=np.array([5]),
            lengths=np.array([3]),
            acoustic_indices=np.zeros((0, 1), dtype=np.int64),
            n_q=1,
            base_rate_hz=Fraction(25, 2),
            source_frame_count=3,
            fsq_dims=5,
            fsq_levels=8,
            rvq_size=4096,
        )
        bs = pack(ts)
        assert bs[:4] == b"FLXC"
        assert len(bs) == HEADER_SIZE + 3
        assert bs[HEADER_SIZE:] == bytes.fromhex("400140")

    def test_payload_size_formula(self):
        for count, n_q in ((1, 8), (7, 1), (13, 3), (100, 8)):
            ts = make_stream([1] * count, n_q=n_q)
            bits = count * (3 + 15 + (n_q - 1) * 12)
            assert len(pack(ts)) == HEADER_SIZE + (bits + 7) // 8

    def test_empty_stream_is_header_only(self):
        ts = make_stream([])
        assert len(pack(ts)) == HEADER_SIZE

    def test_fingerprint_argument_overrides_stream(self):
        ts = make_stream([1], fingerprint=111)
        assert unpack(pack(ts)).codec_fingerprint == 111
        assert unpack(pack(ts, 222)).codec_fingerprint == 222

    def test_rejects_oversized_fingerprint(self):
        with pytest.raises(ConfigError):
            pack(make_stream([1]), 1 << 64)


class TestUnpack:
    def test_roundtrip_identity(self):
        ts = make_stream([1, 8, 3, 4, 2], n_q=8, base=Fraction(25, 3))
        assert unpack(pack(ts, 77)) == ts
        assert unpack(pack(ts, 77)).codec_fingerprint == 77

    @given(
        lengths=st.lists(st.integers(1, 8), max_size=50),
        n_q=st.integers(1, 8),
        seed=st.integers(0, 2**20),
    )
    @settings(deadline=None, max_examples=150)
    def test_roundtrip_property(self, lengths, n_q, seed):
        ts = make_stream(lengths, n_q=n_q, seed=seed)
        again = unpack(pack(ts))
        assert again == ts
        assert again.base_rate_hz == ts.base_rate_hz

    def test_bad_magic(self):
        bs = pack(make_stream([1]))
        with pytest.raises(FormatError, match="magic"):
            unpack(b"XXXX" + bs[4:])

    def test_truncated_header(self):
        bs = pack(make_stream([1]))
        with pytest.raises(CorruptionError, match="header"):
            unpack(bs[:20])

    def test_bad_version_and_flags(self):
        bs = bytearray(pack(make_stream([1])))
        bs[4] = 9
        with pytest.raises(FormatError, match="version"):
            unpack(bytes(bs))
        bs[4] = 1
        bs[5] = 2
        with pytest.raises(FormatError, match="flags"):
            unpack(bytes(bs))

    def test_truncated_payload_names_failing_frame(self):
        ts = make_stream([1] * 10, n_q=8)
        bs = pack(ts)
        # 39 payload bytes = 312 bits = 3 full 102-bit records plus change
        with pytest.raises(CorruptionError, match="frame 3 of 10"):
            unpack(bs[: HEADER_SIZE + 39])

    def test_trailing_payload_bytes(self):
        bs = pack(make_stream([1]))
        with pytest.raises(CorruptionError, match="trailing"):
            unpack(bs + b"\x00")

    def test_nonzero_padding_bits(self):
        bs = bytearray(pack(make_stream([1], n_q=1)))
        # single 18-bit record in 3 bytes: the last 6 bits are padding
        bs[-1] |= 0x01
        with pytest.raises(CorruptionError, match="padding"):
            unpack(bytes(bs))

    def test_length_field_above_l_max(self):
        # l_max 5 still uses 3 length bits, so the raw value 7 (length 8)
        # fits the field but breaks the plan contract
        ts = TokenStream(
            semantic_indices=np.array([0]),
            lengths=np.array([5]),
            acoustic_indices=np.zeros((0, 1), dtype=np.int64),
            n_q=1,
            base_rate_hz=Fraction(25, 2),
            source_frame_count=5,
            fsq_dims=5,
            fsq_levels=8,
            rvq_size=4096,
            l_max=5,
        )
        bs = bytearray(pack(ts))
        bs[HEADER_SIZE] |= 0b11100000
        with pytest.raises(CorruptionError, match="length"):
            unpack(bytes(bs))

    def test_semantic_index_above_codebook(self):
        # D=1, L=5 -> 5 codes in 3 bits; raw 7 is out of range
        ts = TokenStream(
            semantic_indices=np.array([0]),
            lengths=np.array([1]),
            acoustic_indices=np.zeros((0, 1), dtype=np.int64),
            n_q=1,
            base_rate_hz=Fraction(25, 2),
            source_frame_count=1,
            fsq_dims=1,
            fsq_levels=5,
            rvq_size=4096,
        )
        bs = bytearray(pack(ts))
        bs[HEADER_SIZE] |= 0b00011100
        with pytest.raises(CorruptionError, match="semantic"):
            unpack(bytes(bs))

    def test_length_sum_mismatch_with_header(self):
        bs = bytearray(pack(make_stream([2, 2])))
        # flip one length bit so the sum no longer matches the header
        bs[HEADER_SIZE] ^= 0b00100000
        with pytest.raises(CorruptionError):
            unpack(bytes(bs))

    def test_file_roundtrip(self, tmp_path):
        ts = make_stream([3, 1, 8])
        path = tmp_path / "stream.flxc"
        save_bitstream(pack(ts, 5), path)
        assert unpack(load_bitstream(path)) == ts


class TestEndToEndFile:
    def test_pipeline_through_files(self, fitted, tmp_path):
        from flexrate import load_codecs, save_codecs

        fsq, rvq, sem, ac = fitted
        codec_path = tmp_path / "pair.flxq"
        fingerprint = save_codecs(fsq, rvq, codec_path)
        ts = encode(sem, ac, fsq, rvq, EncodeOptions(tau=0.85, n_q=4))
        stream_path = tmp_path / "utt.flxc"
        save_bitstream(pack(ts, fingerprint), stream_path)

        fsq2, rvq2, _ = load_codecs(codec_path)
        ts2 = unpack(load_bitstream(stream_path))
        out = decode(ts2, fsq2, rvq2)
        assert out == decode(ts, fsq, rvq)
