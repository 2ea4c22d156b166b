"""Rate accounting, threshold sweeps, and merge-pattern reporting.

Bitrates count payload bits only (length field plus indices); the container
header is excluded, which is how codec bitrates are conventionally quoted.
Exact rational arithmetic is used end to end so displayed figures never
drift from float rounding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .codec import TokenStream, bits_for
from .errors import ConfigError, DomainError, ValidationError
from .features import FeatureSequence
from .merge import DEFAULT_L_MAX, adjacent_similarity, plan_merge


@dataclass(frozen=True)
class BitLayout:
    """Per-frame payload bit widths: length, semantic index, acoustic index."""

    len_bits: int = 3
    sem_bits: int = 15
    ac_bits: int = 12

    def __post_init__(self) -> None:
        if self.len_bits < 0 or self.sem_bits < 1 or self.ac_bits < 0:
            raise ConfigError("bit widths out of range")

    def bits_per_frame(self, n_q: int) -> int:
        if n_q < 1:
            raise ConfigError("n_q must be >= 1")
        return self.len_bits + self.sem_bits + (n_q - 1) * self.ac_bits

    @classmethod
    def for_geometry(
        cls, l_max: int, fsq_dims: int, fsq_levels: int, rvq_size: int
    ) -> "BitLayout":
        return cls(
            len_bits=bits_for(l_max),
            sem_bits=bits_for(fsq_levels**fsq_dims),
            ac_bits=bits_for(rvq_size),
        )


DEFAULT_BIT_LAYOUT = BitLayout(3, 15, 12)


class RatePoint(NamedTuple):
    tau: float
    avg_rate_hz: float
    payload_kbps: float


@dataclass(frozen=True)
class RateCurve:
    """Sweep result: points sorted by tau with non-decreasing rates."""

    points: tuple[RatePoint, ...]

    def __post_init__(self) -> None:
        taus = [p.tau for p in self.points]
        if taus != sorted(taus):
            raise ConfigError("points must be sorted by tau")
        rates = [p.avg_rate_hz for p in self.points]
        if any(b < a - 1e-12 for a, b in zip(rates, rates[1:])):
            raise ConfigError("avg_rate_hz must be non-decreasing in tau")


def _rate_fraction(ts: TokenStream) -> Fraction:
    if ts.source_frame_count == 0:
        raise DomainError("average rate over zero duration is undefined")
    return Fraction(ts.merged_frame_count) * ts.base_rate_hz / ts.source_frame_count


def average_frame_rate(ts: TokenStream) -> float:
    """Merged frames divided by source duration, in Hz."""
    return float(_rate_fraction(ts))


def bitrate_kbps(ts: TokenStream, bit_layout: BitLayout) -> tuple[float, float]:
    """Payload bitrate as (semantic_kbps, total_kbps).

    The semantic figure covers the length and semantic-index bits of every
    frame; the total adds the acoustic-index bits for the n_q - 1 residual
    layers.
    """
    rate = _rate_fraction(ts)
    sem = rate * (bit_layout.sem_bits + bit_layout.len_bits) / 1000
    total = rate * bit_layout.bits_per_frame(ts.n_q) / 1000
    return float(sem), float(total)


def display_round(value: float, decimals: int = 2) -> str:
    """Format a value rounded half away from zero at ``decimals`` places."""
    if decimals < 0:
        raise ConfigError("decimals must be >= 0")
    quantum = Decimal(1).scaleb(-decimals)
    return str(Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_UP))


def sweep_tau(
    semantic: FeatureSequence,
    taus,
    l_max: int = DEFAULT_L_MAX,
    layout: BitLayout = DEFAULT_BIT_LAYOUT,
    n_q: int = 8,
) -> RateCurve:
    """Plan-only rate/bitrate evaluation over a threshold grid.

    No quantizer is involved: each tau is planned against the similarity
    scores once computed, and the projected bitrate assumes ``n_q`` layers
    under ``layout``.
    """
    taus = sorted(float(t) for t in taus)
    if not taus:
        raise ConfigError("taus must be non-empty")
    if semantic.num_frames == 0:
        raise DomainError("cannot sweep an empty sequence")
    sims = adjacent_similarity(semantic)
    frame_count = semantic.num_frames
    bits = layout.bits_per_frame(n_q)
    points = []
    for tau in taus:
        plan = plan_merge(sims, tau, l_max)
        rate = Fraction(plan.num_merged) * semantic.frame_rate_hz / frame_count
        points.append(
            RatePoint(
                tau=tau,
                avg_rate_hz=float(rate),
                payload_kbps=float(rate * bits / 1000),
            )
        )
    return RateCurve(points=tuple(points))


def tau_for_target_rate(
    semantic: FeatureSequence,
    target_hz: float,
    tol_hz: float = 0.3,
    l_max: int = DEFAULT_L_MAX,
) -> float:
    """Bisect tau in [0, 1] toward a target average frame rate.

    Achievable rates form a finite set per input (one value per distinct
    plan), so the search tracks the smallest-gap tau seen and stops early
    once within ``tol_hz``, or after 60 halvings. plan_merge is monotone in
    tau, which pins convergence to the achievable frontier around the
    target.
    """
    base = semantic.frame_rate_hz
    target_hz = float(target_hz)
    if target_hz <= 0:
        raise DomainError(f"target rate must be positive, got {target_hz}")
    if target_hz > float(base) + 1e-9:
        raise DomainError(f"target {target_hz} Hz exceeds the base rate {base} Hz")
    if semantic.num_frames == 0:
        raise DomainError("cannot calibrate on an empty sequence")
    if abs(target_hz - float(base)) <= 1e-9:
        return 1.0
    sims = adjacent_similarity(semantic)
    frame_count = semantic.num_frames

    def rate_at(tau: float) -> float:
        plan = plan_merge(sims, tau, l_max)
        return float(Fraction(plan.num_merged) * base / frame_count)

    best_tau, best_gap = 1.0, abs(float(base) - target_hz)
    low_rate_gap = abs(rate_at(0.0) - target_hz)
    if low_rate_gap < best_gap:
        best_tau, best_gap = 0.0, low_rate_gap
    lo, hi = 0.0, 1.0
    for _ in range(60):
        if best_gap <= tol_hz:
            break
        mid = 0.5 * (lo + hi)
        rate = rate_at(mid)
        gap = abs(rate - target_hz)
        if gap < best_gap:
            best_tau, best_gap = mid, gap
        if rate < target_hz:
            lo = mid
        else:
            hi = mid
    return best_tau


def pearson_r(x, y) -> float:
    """Sample Pearson correlation coefficient, clipped into [-1, 1]."""
    xs = np.asarray(x, dtype=np.float64).ravel()
    ys = np.asarray(y, dtype=np.float64).ravel()
    if xs.shape != ys.shape:
        raise ConfigError(f"length mismatch: {xs.shape[0]} vs {ys.shape[0]}")
    if xs.shape[0] < 2:
        raise ConfigError("correlation needs at least 2 samples")
    xc = xs - xs.mean()
    yc = ys - ys.mean()
    sxx = float(np.dot(xc, xc))
    syy = float(np.dot(yc, yc))
    if sxx == 0.0 or syy == 0.0:
        raise DomainError("correlation of a constant sequence is undefined")
    r = float(np.dot(xc, yc)) / float(np.sqrt(sxx * syy))
    return float(min(1.0, max(-1.0, r)))


def stride_frame_rate(sample_rate_hz: int, strides) -> Fraction:
    """Frame rate left after a cascade of downsampling strides, exact.

    An empty stride list is the identity product, returning the sample rate.
    """
    if sample_rate_hz < 1:
        raise ConfigError("sample rate must be >= 1")
    product = 1
    for stride in strides:
        if int(stride) != stride or stride < 1:
            raise ConfigError(f"strides must be integers >= 1, got {stride!r}")
        product *= int(stride)
    return Fraction(sample_rate_hz, product)


def _validate_annotations(annotations, duration: Fraction) -> list[tuple[float, float, str]]:
    checked = []
    for item in annotations:
        try:
            start, end, label = item
            start = float(start)
            end = float(end)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"malformed annotation: {item!r}") from exc
        if not (np.isfinite(start) and np.isfinite(end)) or start < 0 or end <= start:
            raise ValidationError(f"bad annotation interval [{start}, {end})")
        if end > float(duration) + 1e-9:
            raise ValidationError(
                f"annotation [{start}, {end}) extends past duration {float(duration)}"
            )
        checked.append((start, end, str(label)))
    return checked


def merge_report(ts: TokenStream, annotations=None) -> str:
    """Line-delimited JSON describing every merged frame, then a summary.

    Frame records carry start_s, end_s, length, and semantic_index; when
    annotations (start_s, end_s, label) are supplied, each frame also lists
    the labels whose interval overlaps its span with positive measure. The
    final line is a summary record with the average rate and a histogram of
    merged lengths.
    """
    duration = Fraction(ts.source_frame_count) / ts.base_rate_hz
    labeled = None
    if annotations is not None:
        labeled = _validate_annotations(annotations, duration)
    lines = []
    position = 0
    histogram: dict[int, int] = {}
    for k in range(ts.merged_frame_count):
        length = int(ts.lengths[k])
        start = Fraction(position) / ts.base_rate_hz
        end = Fraction(position + length) / ts.base_rate_hz
        record = {
            "type": "frame",
            "frame": k,
            "start_s": float(start),
            "end_s": float(end),
            "length": length,
            "semantic_index": int(ts.semantic_indices[k]),
        }
        if labeled is not None:
            record["labels"] = [
                label
                for (a_start, a_end, label) in labeled
                if a_start < float(end) and a_end > float(start)
            ]
        lines.append(json.dumps(record))
        histogram[length] = histogram.get(length, 0) + 1
        position += length
    summary = {
        "type": "summary",
        "merged_frames": ts.merged_frame_count,
        "source_frames": ts.source_frame_count,
        "duration_s": float(duration),
        "avg_rate_hz": float(_rate_fraction(ts)) if ts.source_frame_count else 0.0,
        "n_q": ts.n_q,
        "length_histogram": {str(k): v for k, v in sorted(histogram.items())},
    }
    lines.append(json.dumps(summary))
    return "\n".join(lines) + "\n"
