"""Frame-aligned feature sequences and the FLXF container.

A feature sequence is a (T, d) float32 matrix tagged with an exact rational
frame rate and a stream kind. Two kinds exist: "semantic" rows come from a
speech recognition encoder, "acoustic" rows from a waveform encoder. Rates
are stored as numerator/denominator pairs so values such as 25/3 Hz survive
save and load without drift.

FLXF layout, all integers little-endian:

    magic      4 bytes  b"FLXF"
    version    u8       currently 1
    kind       u8       0 = semantic, 1 = acoustic
    d          u32      feature dimension, >= 1
    T          u64      frame count, may be 0
    rate_num   u32      frame rate numerator, > 0
    rate_den   u32      frame rate denominator, > 0
    payload    T*d*4 bytes of float32, row-major

No padding and no trailing bytes are permitted.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    ConfigError,
    CorruptionError,
    FormatError,
    InsufficientDataError,
)

FLXF_MAGIC = b"FLXF"
FLXF_VERSION = 1

_HEADER = struct.Struct("<4sBBIQII")

SEMANTIC = "semantic"
ACOUSTIC = "acoustic"

_KIND_TO_CODE = {SEMANTIC: 0, ACOUSTIC: 1}
_CODE_TO_KIND = {code: kind for kind, code in _KIND_TO_CODE.items()}

_U32_MAX = 2**32 - 1


def as_rate(value: Fraction | int | float | str) -> Fraction:
    """Coerce a frame rate to an exact positive Fraction.

    Strings may use the "num/den" form, e.g. "25/3".
    """
    try:
        rate = Fraction(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"unparseable frame rate: {value!r}") from exc
    if rate <= 0:
        raise ConfigError(f"frame rate must be positive, got {rate}")
    return rate


def _round_half_away(value: Fraction) -> int:
    # Fraction-exact round half away from zero; callers only pass values >= 0.
    whole = value.numerator // value.denominator
    if value - whole >= Fraction(1, 2):
        whole += 1
    return whole


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    """Immutable (T, d) float32 frame matrix with rate and kind metadata.

    ``source_tag`` is free-form provenance text. It is not serialized and
    does not participate in equality.
    """

    frames: np.ndarray
    frame_rate_hz: Fraction
    stream_kind: str
    source_tag: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        frames = np.array(self.frames, dtype=np.float32, order="C", copy=True)
        if frames.ndim != 2:
            raise ConfigError(f"frames must be 2-D (T, d), got shape {frames.shape}")
        if frames.shape[1] < 1:
            raise ConfigError("feature dimension must be >= 1")
        if not np.all(np.isfinite(frames)):
            raise ConfigError("frames must be finite")
        frames.flags.writeable = False
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "frame_rate_hz", as_rate(self.frame_rate_hz))
        if self.stream_kind not in _KIND_TO_CODE:
            raise ConfigError(f"unknown stream kind: {self.stream_kind!r}")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def duration_s(self) -> float:
        return float(Fraction(self.num_frames) / self.frame_rate_hz)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureSequence):
            return NotImplemented
        return (
            self.frame_rate_hz == other.frame_rate_hz
            and self.stream_kind == other.stream_kind
            and self.frames.shape == other.frames.shape
            and np.array_equal(self.frames, other.frames)
        )


def save_features(seq: FeatureSequence, path) -> None:
    """Write a sequence to ``path`` in the FLXF layout, bit-exactly."""
    rate = seq.frame_rate_hz
    if rate.numerator > _U32_MAX or rate.denominator > _U32_MAX:
        raise ConfigError(f"frame rate {rate} does not fit u32/u32")
    header = _HEADER.pack(
        FLXF_MAGIC,
        FLXF_VERSION,
        _KIND_TO_CODE[seq.stream_kind],
        seq.dim,
        seq.num_frames,
        rate.numerator,
        rate.denominator,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(seq.frames, dtype="<f4").tobytes())


def load_features(path) -> FeatureSequence:
    """Read an FLXF file. Raises FormatError or CorruptionError on bad input."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: shorter than the fixed FLXF header")
    magic, version, kind_code, dim, num_frames, rate_num, rate_den = _HEADER.unpack_from(blob)
    if magic != FLXF_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FLXF_VERSION:
        raise FormatError(f"{path}: unsupported FLXF version {version}")
    if kind_code not in _CODE_TO_KIND:
        raise FormatError(f"{path}: unknown stream kind code {kind_code}")
    if dim < 1:
        raise FormatError(f"{path}: feature dimension must be >= 1, got {dim}")
    if rate_num == 0 or rate_den == 0:
        raise FormatError(f"{path}: zero frame rate component")
    expected = _HEADER.size + num_frames * dim * 4
    if len(blob) < expected:
        raise CorruptionError(
            f"{path}: payload truncated, expected {expected} bytes, found {len(blob)}"
        )
    if len(blob) > expected:
        raise CorruptionError(f"{path}: {len(blob) - expected} trailing bytes")
    frames = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    frames = frames.reshape(num_frames, dim)
    if not np.all(np.isfinite(frames)):
        raise CorruptionError(f"{path}: non-finite feature values")
    return FeatureSequence(
        frames=frames,
        frame_rate_hz=Fraction(rate_num, rate_den),
        stream_kind=_CODE_TO_KIND[kind_code],
        source_tag=str(path),
    )


def resample_linear(
    seq: FeatureSequence, target_rate_hz: Fraction | int | float | str
) -> FeatureSequence:
    """Linearly resample a sequence to a new frame rate.

    The output length is max(1, round(T * target / source)) with ties rounded
    away from zero. Output frame i is evaluated at source position
    i * source / target; positions are clamped to the valid range, so the
    endpoints repeat rather than extrapolate. When the target equals the
    source rate the input object is returned unchanged.
    """
    target = as_rate(target_rate_hz)
    source = seq.frame_rate_hz
    if target == source:
        return seq
    if seq.num_frames < 2:
        raise InsufficientDataError(
            f"resampling needs at least 2 frames, got {seq.num_frames}"
        )
    num_out = max(1, _round_half_away(Fraction(seq.num_frames) * target / source))
    step = source / target
    positions = np.arange(num_out, dtype=np.float64) * float(step)
    positions = np.clip(positions, 0.0, seq.num_frames - 1.0)
    lower = np.floor(positions).astype(np.int64)
    upper = np.minimum(lower + 1, seq.num_frames - 1)
    frac = (positions - lower)[:, None]
    src = seq.frames.astype(np.float64)
    out = src[lower] * (1.0 - frac) + src[upper] * frac
    return FeatureSequence(
        frames=out.astype(np.float32),
        frame_rate_hz=target,
        stream_kind=seq.stream_kind,
        source_tag=seq.source_tag,
    )


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    denom = float(np.linalg.norm(a) * np.linalg.norm(b))
    if denom < 1e-12:
        return 0.0
    return float(np.dot(a, b) / denom)


def synth_piecewise_constant(
    num_segments: int,
    seg_len_range: tuple[int, int],
    dim: int,
    seed: int,
    frame_rate_hz: Fraction | int | float | str = Fraction(25, 2),
    stream_kind: str = SEMANTIC,
) -> FeatureSequence:
    """Deterministic piecewise-constant fixture.

    Each segment repeats one random positive vector for a random length drawn
    from ``seg_len_range`` (inclusive). Adjacent segment vectors are redrawn
    until their cosine similarity is at most 0.99, so within-segment adjacent
    similarity is exactly 1.0 while every boundary falls strictly below it.
    """
    lo, hi = seg_len_range
    if num_segments < 1:
        raise ConfigError("num_segments must be >= 1")
    if lo < 1 or hi < lo:
        raise ConfigError(f"bad segment length range: {seg_len_range}")
    rng = np.random.default_rng(seed)
    lengths = rng.integers(lo, hi + 1, size=num_segments)
    rows = []
    prev = None
    for length in lengths:
        vec = rng.uniform(0.2, 1.0, size=dim)
        while prev is not None and _cosine(vec, prev) > 0.99:
            vec = rng.uniform(0.2, 1.0, size=dim)
        rows.append(np.repeat(vec[None, :].astype(np.float32), length, axis=0))
        prev = vec
    return FeatureSequence(
        frames=np.concatenate(rows, axis=0),
        frame_rate_hz=frame_rate_hz,
        stream_kind=stream_kind,
        source_tag=f"synth-piecewise-seed{seed}",
    )


def synth_random_walk(
    num_frames: int,
    dim: int,
    step_scale: float,
    seed: int,
    frame_rate_hz: Fraction | int | float | str = Fraction(25, 2),
    stream_kind: str = SEMANTIC,
) -> FeatureSequence:
    """Deterministic unit-norm random walk fixture.

    Frame 0 is a normalized Gaussian draw; each successor adds Gaussian noise
    scaled by ``step_scale`` and renormalizes. Smaller steps raise adjacent
    similarity, which makes this the fixture of choice for rate sweeps.
    """
    if num_frames < 1:
        raise ConfigError("num_frames must be >= 1")
    if dim < 2:
        raise ConfigError("random walk needs dim >= 2")
    if step_scale < 0:
        raise ConfigError("step_scale must be >= 0")
    rng = np.random.default_rng(seed)
    frames = np.empty((num_frames, dim), dtype=np.float64)
    vec = rng.standard_normal(dim)
    vec /= np.linalg.norm(vec)
    frames[0] = vec
    for t in range(1, num_frames):
        vec = vec + step_scale * rng.standard_normal(dim)
        vec /= np.linalg.norm(vec)
        frames[t] = vec
    return FeatureSequence(
        frames=frames.astype(np.float32),
        frame_rate_hz=frame_rate_hz,
        stream_kind=stream_kind,
        source_tag=f"synth-walk-seed{seed}",
    )
