"""Similarity-driven frame merging and its inverse.

The dynamic frame rate works in three steps: score adjacent frames by cosine
similarity, group maximal runs of high-similarity frames into segments capped
at ``l_max``, then replace each segment with its arithmetic mean. The plan
(segment lengths) travels with the merged vectors so the original timeline
can be restored by repetition.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigError, PlanMismatchError
from .features import FeatureSequence

DEFAULT_L_MAX = 8
_ZERO_NORM = 1e-12

REFINER_MODES = ("identity", "windowed_mean")


def adjacent_similarity(seq: FeatureSequence) -> np.ndarray:
    """Cosine similarity of each frame with its successor, length T-1.

    Pairs that include a frame of near-zero norm (below 1e-12) score 0.0 so
    silence never merges by accident. Computed in float64.
    """
    frames = seq.frames.astype(np.float64)
    if frames.shape[0] < 2:
        return np.zeros(0, dtype=np.float64)
    norms = np.linalg.norm(frames, axis=1)
    dots = np.einsum("ij,ij->i", frames[:-1], frames[1:])
    denom = norms[:-1] * norms[1:]
    mask = (norms[:-1] < _ZERO_NORM) | (norms[1:] < _ZERO_NORM)
    sims = np.zeros(frames.shape[0] - 1, dtype=np.float64)
    np.divide(dots, denom, out=sims, where=~mask)
    np.clip(sims, -1.0, 1.0, out=sims)
    # sqrt rounding can leave cos(x, x) a hair below 1; restore exactness
    identical = np.all(seq.frames[:-1] == seq.frames[1:], axis=1) & ~mask
    sims[identical] = 1.0
    sims[mask] = 0.0
    return sims


@dataclass(frozen=True)
class MergePlan:
    """Segment lengths partitioning a source sequence, in timeline order.

    ``tau`` records the threshold that produced the plan; plans recovered
    from a bitstream carry None there.
    """

    lengths: tuple[int, ...]
    source_frame_count: int
    tau: float | None
    l_max: int = DEFAULT_L_MAX

    def __post_init__(self) -> None:
        if self.l_max < 1:
            raise ConfigError(f"l_max must be >= 1, got {self.l_max}")
        total = 0
        for length in self.lengths:
            if not 1 <= length <= self.l_max:
                raise ConfigError(
                    f"segment length {length} outside [1, {self.l_max}]"
                )
            total += length
        if total != self.source_frame_count:
            raise ConfigError(
                f"lengths sum to {total}, expected {self.source_frame_count}"
            )

    @property
    def num_merged(self) -> int:
        return len(self.lengths)


def plan_merge(sims, tau: float, l_max: int = DEFAULT_L_MAX) -> MergePlan:
    """Greedy left-to-right segmentation of T frames from their T-1 scores.

    A frame joins the open segment when its similarity with the previous
    frame is at least ``tau`` and the segment has not reached ``l_max``.
    ``tau`` >= 1.0 is the no-merge setting: every frame stays single even
    when similarities equal 1.0 exactly.
    """
    if l_max < 1:
        raise ConfigError(f"l_max must be >= 1, got {l_max}")
    sims = np.asarray(sims, dtype=np.float64).ravel()
    num_frames = sims.shape[0] + 1
    if tau >= 1.0:
        lengths = (1,) * num_frames
        return MergePlan(lengths, num_frames, float(tau), l_max)
    lengths: list[int] = []
    current = 1
    for score in sims:
        if score >= tau and current < l_max:
            current += 1
        else:
            lengths.append(current)
            current = 1
    lengths.append(current)
    return MergePlan(tuple(lengths), num_frames, float(tau), l_max)


@dataclass(frozen=True, eq=False)
class MergedSequence:
    """Merged vectors (float64) plus the plan that produced them."""

    vectors: np.ndarray
    plan: MergePlan
    base_rate_hz: Fraction
    stream_kind: str

    def __post_init__(self) -> None:
        vectors = np.array(self.vectors, dtype=np.float64, order="C", copy=True)
        if vectors.ndim != 2:
            raise ConfigError(f"vectors must be 2-D, got shape {vectors.shape}")
        if vectors.shape[0] != self.plan.num_merged:
            raise PlanMismatchError(
                f"{vectors.shape[0]} vectors for a {self.plan.num_merged}-segment plan"
            )
        vectors.flags.writeable = False
        object.__setattr__(self, "vectors", vectors)

    @property
    def num_merged(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def average_frame_rate_hz(self) -> float:
        if self.plan.source_frame_count == 0:
            return 0.0
        return float(
            Fraction(self.num_merged)
            * self.base_rate_hz
            / self.plan.source_frame_count
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MergedSequence):
            return NotImplemented
        return (
            self.plan == other.plan
            and self.base_rate_hz == other.base_rate_hz
            and self.stream_kind == other.stream_kind
            and np.array_equal(self.vectors, other.vectors)
        )


def apply_merge(seq: FeatureSequence, plan: MergePlan) -> MergedSequence:
    """Replace each planned segment with its arithmetic mean.

    Accumulation happens in float64. A plan whose frame count differs from
    the sequence raises PlanMismatchError.
    """
    if plan.source_frame_count != seq.num_frames:
        raise PlanMismatchError(
            f"plan covers {plan.source_frame_count} frames, "
            f"sequence has {seq.num_frames}"
        )
    src = seq.frames.astype(np.float64)
    if plan.num_merged == 0:
        vectors = np.zeros((0, seq.dim), dtype=np.float64)
    else:
        lengths = np.asarray(plan.lengths, dtype=np.int64)
        starts = np.concatenate(([0], np.cumsum(lengths)[:-1]))
        sums = np.add.reduceat(src, starts, axis=0)
        vectors = sums / lengths[:, None]
    return MergedSequence(
        vectors=vectors,
        plan=plan,
        base_rate_hz=seq.frame_rate_hz,
        stream_kind=seq.stream_kind,
    )


def unmerge(merged: MergedSequence) -> FeatureSequence:
    """Expand merged vectors back to the source timeline by repetition.

    Each vector repeats ``length`` times, so the output has exactly
    ``plan.source_frame_count`` frames at the base rate.
    """
    lengths = np.asarray(merged.plan.lengths, dtype=np.int64)
    frames = np.repeat(merged.vectors, lengths, axis=0).astype(np.float32)
    if frames.shape[0] == 0:
        frames = frames.reshape(0, merged.dim)
    return FeatureSequence(
        frames=frames,
        frame_rate_hz=merged.base_rate_hz,
        stream_kind=merged.stream_kind,
        source_tag="unmerge",
    )


def _windowed_mean(matrix: np.ndarray, window: int) -> np.ndarray:
    # Edge-clipped inclusive window [k - window, k + window] via prefix sums.
    count = matrix.shape[0]
    padded = np.zeros((count + 1, matrix.shape[1]), dtype=np.float64)
    np.cumsum(matrix, axis=0, out=padded[1:])
    idx = np.arange(count)
    lo = np.maximum(idx - window, 0)
    hi = np.minimum(idx + window, count - 1)
    sums = padded[hi + 1] - padded[lo]
    return sums / (hi - lo + 1)[:, None]


def refine_context(x, window: int = 8, mode: str = "identity"):
    """Deterministic context smoothing over a sequence of vectors.

    Works on either a FeatureSequence or a MergedSequence and returns the
    same type. Mode "identity" returns the input unchanged; "windowed_mean"
    replaces each vector with the mean of its edge-clipped neighborhood of
    ``window`` positions to each side.
    """
    if mode not in REFINER_MODES:
        raise ConfigError(f"unknown refiner mode: {mode!r}")
    if window < 0:
        raise ConfigError(f"window must be >= 0, got {window}")
    if mode == "identity":
        return x
    if isinstance(x, MergedSequence):
        if x.num_merged == 0:
            return x
        return MergedSequence(
            vectors=_windowed_mean(x.vectors, window),
            plan=x.plan,
            base_rate_hz=x.base_rate_hz,
            stream_kind=x.stream_kind,
        )
    if isinstance(x, FeatureSequence):
        if x.num_frames == 0:
            return x
        smoothed = _windowed_mean(x.frames.astype(np.float64), window)
        return FeatureSequence(
            frames=smoothed.astype(np.float32),
            frame_rate_hz=x.frame_rate_hz,
            stream_kind=x.stream_kind,
            source_tag=x.source_tag,
        )
    raise ConfigError(f"refine_context cannot handle {type(x).__name__}")
