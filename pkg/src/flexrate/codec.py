"""Dual-stream encode/decode pipeline and the FLXC bitstream.

Encoding plans a merge from the semantic stream's adjacent similarities,
applies the identical plan to both streams, quantizes the merged semantic
vectors with FSQ, and quantizes the residual (merged acoustic vector minus
the FSQ reconstruction) with the RVQ layers. Decoding reverses the sums,
repeats each merged vector by its stored length, and optionally smooths.

FLXC layout, all integers little-endian:

    magic               4 bytes  b"FLXC"
    version             u8       currently 1
    flags               u8       must be 0
    base_rate_num       u32
    base_rate_den       u32
    n_q                 u8       total quantizer layers used, >= 1
    fsq_dims            u8       latent dimensions (D)
    fsq_levels          u8       levels per dimension (L)
    rvq_size            u32      codewords per acoustic layer (K)
    l_max               u8       longest mergeable run
    source_frame_count  u64      frames before merging
    merged_frame_count  u32      frames after merging
    codec_fingerprint   u64      FLXQ fingerprint, 0 when unbound
    payload             merged_frame_count fixed-width records, MSB-first,
                        zero-padded to a byte boundary

Each payload record is (length-1) in enough bits for l_max-1, the semantic
index in enough bits for L^D - 1, then one acoustic index per layer beyond
the first in enough bits for K - 1. For the standard configuration
(l_max=8, D=5, L=8, K=4096) that is 3 + 15 + (n_q - 1) * 12 bits per frame.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    AlignmentError,
    CodecMismatchError,
    ConfigError,
    CorruptionError,
    FormatError,
)
from .features import ACOUSTIC, SEMANTIC, FeatureSequence, as_rate
from .merge import (
    DEFAULT_L_MAX,
    MergePlan,
    MergedSequence,
    adjacent_similarity,
    apply_merge,
    plan_merge,
    refine_context,
    unmerge,
)
from .quant import (
    FsqCodec,
    RvqCodebooks,
    codec_fingerprint,
    fsq_quantize_frames,
    fsq_reconstruct,
    rvq_decode_frames,
    rvq_encode_frames,
)

FLXC_MAGIC = b"FLXC"
FLXC_VERSION = 1

_HEADER = struct.Struct("<4sBBIIBBBIBQIQ")

# Bitstream type: pack() returns plain bytes in the FLXC layout above.
Bitstream = bytes


def bits_for(value_count: int) -> int:
    """Bits needed to store values in [0, value_count); 0 when only one value."""
    if value_count < 1:
        raise ConfigError("value_count must be >= 1")
    return (value_count - 1).bit_length()


@dataclass(frozen=True)
class EncodeOptions:
    """Caller-chosen encode settings.

    ``tau`` is the merge threshold in (0, 1]; 1.0 disables merging. ``n_q``
    counts total quantizer layers including the semantic one, so ``n_q=1``
    emits no acoustic indices at all.
    """

    tau: float = 1.0
    n_q: int = 8
    l_max: int = DEFAULT_L_MAX
    refiner_mode: str = "identity"
    refiner_window: int = 8

    def __post_init__(self) -> None:
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        if self.n_q < 1:
            raise ConfigError(f"n_q must be >= 1, got {self.n_q}")
        if self.l_max < 1:
            raise ConfigError(f"l_max must be >= 1, got {self.l_max}")
        if self.refiner_window < 0:
            raise ConfigError("refiner_window must be >= 0")


@dataclass(frozen=True, eq=False)
class TokenStream:
    """One encoded utterance: indices, lengths, and quantizer geometry.

    ``codec_fingerprint`` binds the stream to the FLXQ file that produced
    it; None (or 0 in a container) means unbound. It never participates in
    equality, so a pack/unpack roundtrip compares equal to its source.
    """

    semantic_indices: np.ndarray
    lengths: np.ndarray
    acoustic_indices: np.ndarray
    n_q: int
    base_rate_hz: Fraction
    source_frame_count: int
    fsq_dims: int
    fsq_levels: int
    rvq_size: int
    l_max: int = DEFAULT_L_MAX
    codec_fingerprint: int | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        sem = self._own_int_array("semantic_indices")
        lengths = self._own_int_array("lengths")
        ac = np.array(self.acoustic_indices, dtype=np.int64, copy=True)
        ac.flags.writeable = False
        object.__setattr__(self, "acoustic_indices", ac)
        object.__setattr__(self, "base_rate_hz", as_rate(self.base_rate_hz))

        if self.n_q < 1:
            raise ConfigError("n_q must be >= 1")
        if self.fsq_dims < 1 or self.fsq_levels < 2 or self.rvq_size < 1:
            raise ConfigError("quantizer geometry out of range")
        if self.l_max < 1:
            raise ConfigError("l_max must be >= 1")
        count = sem.shape[0]
        if lengths.shape != (count,):
            raise ConfigError("lengths and semantic_indices must share length")
        if ac.ndim != 2 or ac.shape != (self.n_q - 1, count):
            raise ConfigError(
                f"acoustic_indices must have shape ({self.n_q - 1}, {count}), "
                f"got {ac.shape}"
            )
        size = self.fsq_levels**self.fsq_dims
        if count:
            if sem.min() < 0 or sem.max() >= size:
                raise ConfigError(f"semantic index outside [0, {size})")
            if lengths.min() < 1 or lengths.max() > self.l_max:
                raise ConfigError(f"length outside [1, {self.l_max}]")
        if ac.size and (ac.min() < 0 or ac.max() >= self.rvq_size):
            raise ConfigError(f"acoustic index outside [0, {self.rvq_size})")
        if int(lengths.sum()) != self.source_frame_count:
            raise ConfigError(
                f"lengths sum to {int(lengths.sum())}, "
                f"expected {self.source_frame_count}"
            )

    def _own_int_array(self, name: str) -> np.ndarray:
        arr = np.array(getattr(self, name), dtype=np.int64, copy=True).reshape(-1)
        arr.flags.writeable = False
        object.__setattr__(self, name, arr)
        return arr

    @property
    def merged_frame_count(self) -> int:
        return self.semantic_indices.shape[0]

    @property
    def duration_s(self) -> float:
        return float(Fraction(self.source_frame_count) / self.base_rate_hz)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TokenStream):
            return NotImplemented
        return (
            self.n_q == other.n_q
            and self.base_rate_hz == other.base_rate_hz
            and self.source_frame_count == other.source_frame_count
            and self.fsq_dims == other.fsq_dims
            and self.fsq_levels == other.fsq_levels
            and self.rvq_size == other.rvq_size
            and self.l_max == other.l_max
            and np.array_equal(self.semantic_indices, other.semantic_indices)
            and np.array_equal(self.lengths, other.lengths)
            and np.array_equal(self.acoustic_indices, other.acoustic_indices)
        )


def _check_geometry(ts: TokenStream, fsq: FsqCodec, rvq: RvqCodebooks | None) -> None:
    if ts.fsq_dims != fsq.latent_dim or ts.fsq_levels != fsq.levels:
        raise CodecMismatchError(
            f"stream expects FSQ {ts.fsq_dims} dims x {ts.fsq_levels} levels, "
            f"codec has {fsq.latent_dim} x {fsq.levels}"
        )
    if ts.n_q > 1:
        if rvq is None:
            raise CodecMismatchError("stream carries acoustic layers but no RVQ given")
        if ts.rvq_size != rvq.codebook_size:
            raise CodecMismatchError(
                f"stream expects {ts.rvq_size} codewords per layer, "
                f"codec has {rvq.codebook_size}"
            )
        if ts.n_q - 1 > rvq.num_layers:
            raise CodecMismatchError(
                f"stream uses {ts.n_q - 1} acoustic layers, codec has {rvq.num_layers}"
            )


def encode(
    semantic: FeatureSequence,
    acoustic: FeatureSequence,
    fsq: FsqCodec,
    rvq: RvqCodebooks | None,
    opts: EncodeOptions,
) -> TokenStream:
    """Encode a dual-stream feature pair into a TokenStream.

    The merge plan comes from the semantic stream alone and is applied to
    both streams, so they always share lengths. The acoustic residual is
    taken against the FSQ reconstruction, not the unquantized merged
    semantic vector, which keeps the decoder consistent.
    """
    if semantic.stream_kind != SEMANTIC or acoustic.stream_kind != ACOUSTIC:
        raise AlignmentError(
            f"expected kinds ({SEMANTIC}, {ACOUSTIC}), "
            f"got ({semantic.stream_kind}, {acoustic.stream_kind})"
        )
    if semantic.num_frames != acoustic.num_frames:
        raise AlignmentError(
            f"stream lengths differ: {semantic.num_frames} vs {acoustic.num_frames}"
        )
    if semantic.frame_rate_hz != acoustic.frame_rate_hz:
        raise AlignmentError(
            f"stream rates differ: {semantic.frame_rate_hz} vs "
            f"{acoustic.frame_rate_hz}"
        )
    if semantic.dim != fsq.input_dim or acoustic.dim != fsq.input_dim:
        raise AlignmentError(
            f"feature dimension must be {fsq.input_dim} for this codec, "
            f"got {semantic.dim}/{acoustic.dim}"
        )
    if opts.n_q > 1:
        if rvq is None:
            raise ConfigError("n_q > 1 requires RVQ codebooks")
        if opts.n_q - 1 > rvq.num_layers:
            raise ConfigError(
                f"n_q-1 = {opts.n_q - 1} exceeds the {rvq.num_layers} fitted layers"
            )
        if rvq.dim != fsq.input_dim:
            raise AlignmentError(
                f"RVQ dimension {rvq.dim} differs from FSQ input {fsq.input_dim}"
            )
    rvq_size = rvq.codebook_size if rvq is not None else 1

    if semantic.num_frames == 0:
        return TokenStream(
            semantic_indices=np.zeros(0, dtype=np.int64),
            lengths=np.zeros(0, dtype=np.int64),
            acoustic_indices=np.zeros((opts.n_q - 1, 0), dtype=np.int64),
            n_q=opts.n_q,
            base_rate_hz=semantic.frame_rate_hz,
            source_frame_count=0,
            fsq_dims=fsq.latent_dim,
            fsq_levels=fsq.levels,
            rvq_size=rvq_size,
            l_max=opts.l_max,
        )

    plan = plan_merge(adjacent_similarity(semantic), opts.tau, opts.l_max)
    merged_sem = refine_context(
        apply_merge(semantic, plan), opts.refiner_window, opts.refiner_mode
    )
    merged_ac = refine_context(
        apply_merge(acoustic, plan), opts.refiner_window, opts.refiner_mode
    )
    sem_indices, _, sem_recon = fsq_quantize_frames(fsq, merged_sem.vectors)
    if opts.n_q > 1:
        residual = merged_ac.vectors - sem_recon
        ac_indices, _, _ = rvq_encode_frames(rvq, residual, opts.n_q - 1)
    else:
        ac_indices = np.zeros((0, plan.num_merged), dtype=np.int64)
    return TokenStream(
        semantic_indices=sem_indices,
        lengths=np.asarray(plan.lengths, dtype=np.int64),
        acoustic_indices=ac_indices,
        n_q=opts.n_q,
        base_rate_hz=semantic.frame_rate_hz,
        source_frame_count=plan.source_frame_count,
        fsq_dims=fsq.latent_dim,
        fsq_levels=fsq.levels,
        rvq_size=rvq_size,
        l_max=opts.l_max,
    )


def decode(
    ts: TokenStream,
    fsq: FsqCodec,
    rvq: RvqCodebooks | None,
    refiner_mode: str = "identity",
    refiner_window: int = 8,
) -> FeatureSequence:
    """Reconstruct a feature sequence at the base rate from a TokenStream.

    Per merged frame the FSQ reconstruction and the summed acoustic
    codewords are added, the result repeats by its stored length, and the
    refiner runs over the expanded sequence. A stream carrying a nonzero
    fingerprint is verified against the supplied codecs first.
    """
    if ts.codec_fingerprint:
        if rvq is None:
            raise CodecMismatchError("fingerprinted stream requires RVQ codebooks")
        actual = codec_fingerprint(fsq, rvq)
        if actual != ts.codec_fingerprint:
            raise CodecMismatchError(
                f"stream was encoded with codec {ts.codec_fingerprint:#018x}, "
                f"supplied pair hashes to {actual:#018x}"
            )
    _check_geometry(ts, fsq, rvq)
    vectors = fsq_reconstruct(fsq, ts.semantic_indices)
    if ts.n_q > 1 and ts.merged_frame_count:
        vectors = vectors + rvq_decode_frames(rvq, ts.acoustic_indices)
    plan = MergePlan(
        lengths=tuple(int(v) for v in ts.lengths),
        source_frame_count=ts.source_frame_count,
        tau=None,
        l_max=ts.l_max,
    )
    merged = MergedSequence(
        vectors=vectors,
        plan=plan,
        base_rate_hz=ts.base_rate_hz,
        stream_kind=ACOUSTIC,
    )
    seq = refine_context(unmerge(merged), refiner_window, refiner_mode)
    return FeatureSequence(
        frames=seq.frames,
        frame_rate_hz=seq.frame_rate_hz,
        stream_kind=seq.stream_kind,
        source_tag="decoded",
    )


def _field_widths(
    l_max: int, fsq_dims: int, fsq_levels: int, rvq_size: int
) -> tuple[int, int, int]:
    len_bits = bits_for(l_max)
    sem_bits = bits_for(fsq_levels**fsq_dims)
    ac_bits = bits_for(rvq_size)
    if sem_bits > 63 or ac_bits > 63:
        raise ConfigError("index width exceeds the 63-bit budget")
    return len_bits, sem_bits, ac_bits


def _bits_msb_first(values: np.ndarray, width: int) -> np.ndarray:
    if width == 0:
        return np.zeros((values.shape[0], 0), dtype=np.uint8)
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    return ((values[:, None] >> shifts) & 1).astype(np.uint8)


def pack(ts: TokenStream, fingerprint: int | None = None) -> Bitstream:
    """Serialize a TokenStream to FLXC bytes.

    ``fingerprint`` overrides the one carried on the stream; with neither
    present, 0 is written and the stream decodes without verification.
    """
    if fingerprint is None:
        fingerprint = ts.codec_fingerprint or 0
    if not 0 <= fingerprint <= 0xFFFFFFFFFFFFFFFF:
        raise ConfigError("fingerprint must fit in 64 bits")
    rate = ts.base_rate_hz
    if rate.numerator > 0xFFFFFFFF or rate.denominator > 0xFFFFFFFF:
        raise ConfigError(f"base rate {rate} does not fit u32/u32")
    if ts.n_q > 255 or ts.fsq_dims > 255 or ts.fsq_levels > 255 or ts.l_max > 255:
        raise ConfigError("header field exceeds u8")
    if ts.rvq_size > 0xFFFFFFFF or ts.merged_frame_count > 0xFFFFFFFF:
        raise ConfigError("header field exceeds u32")
    len_bits, sem_bits, ac_bits = _field_widths(
        ts.l_max, ts.fsq_dims, ts.fsq_levels, ts.rvq_size
    )
    header = _HEADER.pack(
        FLXC_MAGIC,
        FLXC_VERSION,
        0,
        rate.numerator,
        rate.denominator,
        ts.n_q,
        ts.fsq_dims,
        ts.fsq_levels,
        ts.rvq_size,
        ts.l_max,
        ts.source_frame_count,
        ts.merged_frame_count,
        fingerprint,
    )
    if ts.merged_frame_count == 0:
        return header
    columns = [
        _bits_msb_first(ts.lengths - 1, len_bits),
        _bits_msb_first(ts.semantic_indices, sem_bits),
    ]
    for layer in range(ts.n_q - 1):
        columns.append(_bits_msb_first(ts.acoustic_indices[layer], ac_bits))
    bit_matrix = np.concatenate(columns, axis=1)
    payload = np.packbits(bit_matrix.reshape(-1)).tobytes()
    return header + payload


def _read_fields(bits: np.ndarray, width: int, offset: int) -> tuple[np.ndarray, int]:
    if width == 0:
        return np.zeros(bits.shape[0], dtype=np.int64), offset
    weights = (1 << np.arange(width - 1, -1, -1, dtype=np.int64))
    chunk = bits[:, offset : offset + width].astype(np.int64)
    return chunk @ weights, offset + width


def unpack(bs: Bitstream) -> TokenStream:
    """Parse FLXC bytes back into a TokenStream, the exact inverse of pack."""
    if len(bs) < 4 or bs[:4] != FLXC_MAGIC:
        raise FormatError("bad FLXC magic")
    if len(bs) < _HEADER.size:
        raise CorruptionError("truncated FLXC header")
    (
        _,
        version,
        flags,
        rate_num,
        rate_den,
        n_q,
        fsq_dims,
        fsq_levels,
        rvq_size,
        l_max,
        source_frame_count,
        merged_count,
        fingerprint,
    ) = _HEADER.unpack_from(bs)
    if version != FLXC_VERSION:
        raise FormatError(f"unsupported FLXC version {version}")
    if flags != 0:
        raise FormatError(f"unknown FLXC flags {flags:#04x}")
    if rate_num == 0 or rate_den == 0:
        raise CorruptionError("zero base rate component")
    if n_q < 1 or fsq_dims < 1 or fsq_levels < 2 or rvq_size < 1 or l_max < 1:
        raise CorruptionError("header geometry out of range")
    len_bits, sem_bits, ac_bits = _field_widths(l_max, fsq_dims, fsq_levels, rvq_size)
    bits_per_frame = len_bits + sem_bits + (n_q - 1) * ac_bits
    total_bits = merged_count * bits_per_frame
    expected_bytes = (total_bits + 7) // 8
    payload = bs[_HEADER.size :]
    if len(payload) < expected_bytes:
        have_bits = len(payload) * 8
        failing = have_bits // bits_per_frame if bits_per_frame else 0
        raise CorruptionError(
            f"payload truncated at frame {failing} of {merged_count}"
        )
    if len(payload) > expected_bytes:
        raise CorruptionError(f"{len(payload) - expected_bytes} trailing bytes")

    if merged_count == 0:
        lengths = np.zeros(0, dtype=np.int64)
        semantic = np.zeros(0, dtype=np.int64)
        acoustic = np.zeros((n_q - 1, 0), dtype=np.int64)
    else:
        bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))
        if np.any(bits[total_bits:]):
            raise CorruptionError("nonzero padding bits after the last frame")
        frame_bits = bits[:total_bits].reshape(merged_count, bits_per_frame)
        offset = 0
        raw_lengths, offset = _read_fields(frame_bits, len_bits, offset)
        semantic, offset = _read_fields(frame_bits, sem_bits, offset)
        rows = []
        for _ in range(n_q - 1):
            row, offset = _read_fields(frame_bits, ac_bits, offset)
            rows.append(row)
        acoustic = (
            np.stack(rows) if rows else np.zeros((0, merged_count), dtype=np.int64)
        )
        lengths = raw_lengths + 1
        if lengths.max() > l_max:
            frame = int(np.argmax(lengths > l_max))
            raise CorruptionError(f"frame {frame}: length exceeds l_max {l_max}")
        size = fsq_levels**fsq_dims
        if semantic.max() >= size:
            frame = int(np.argmax(semantic >= size))
            raise CorruptionError(f"frame {frame}: semantic index exceeds {size - 1}")
        if acoustic.size and acoustic.max() >= rvq_size:
            raise CorruptionError(f"acoustic index exceeds {rvq_size - 1}")
    if int(lengths.sum()) != source_frame_count:
        raise CorruptionError(
            f"lengths sum to {int(lengths.sum())}, header says {source_frame_count}"
        )
    return TokenStream(
        semantic_indices=semantic,
        lengths=lengths,
        acoustic_indices=acoustic,
        n_q=n_q,
        base_rate_hz=Fraction(rate_num, rate_den),
        source_frame_count=source_frame_count,
        fsq_dims=fsq_dims,
        fsq_levels=fsq_levels,
        rvq_size=rvq_size,
        l_max=l_max,
        codec_fingerprint=fingerprint,
    )


def save_bitstream(bs: Bitstream, path) -> None:
    with open(path, "wb") as fh:
        fh.write(bs)


def load_bitstream(path) -> Bitstream:
    with open(path, "rb") as fh:
        return fh.read()
