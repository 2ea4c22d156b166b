"""Semantic FSQ and acoustic RVQ quantizers plus their FLXQ container.

The semantic stream is quantized by finite scalar quantization: project the
d-dimensional vector into a small latent space, snap each coordinate to one
of L evenly spaced levels inside data-driven bounds, and read the level tuple
as one base-L integer. The acoustic stream is quantized by a stack of
residual codebooks fit offline with Lloyd iterations.

Both quantizers persist together in one FLXQ file, all integers
little-endian, all matrices float32 row-major:

    magic       4 bytes  b"FLXQ"
    version     u8       currently 1
    fsq.d       u32      input feature dimension
    fsq.D       u8       latent dimensions
    fsq.L       u8       levels per latent dimension
    fsq.down    d*D f32
    fsq.up      D*d f32
    fsq.lo      D f32
    fsq.hi      D f32
    rvq.layers  u8
    rvq.K       u32      codewords per layer
    rvq.d       u32      codeword dimension
    rvq.books   layers*K*d f32
    fingerprint u64      FNV-1a of every preceding byte

The fingerprint is what bitstreams reference, so any change to a codec file
is detected before a stream is decoded against the wrong codebooks.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    AlignmentError,
    ConfigError,
    CorruptionError,
    FitError,
    FormatError,
    InsufficientDataError,
    ValidationError,
)
from .features import FeatureSequence

FLXQ_MAGIC = b"FLXQ"
FLXQ_VERSION = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    value = _FNV_OFFSET
    for byte in data:
        value = ((value ^ byte) * _FNV_PRIME) & _U64_MASK
    return value


def _round_half_away(values: np.ndarray) -> np.ndarray:
    # numpy's round() ties to even; the container contract ties away from zero.
    return np.copysign(np.floor(np.abs(values) + 0.5), values)


def _collect_frames(train) -> np.ndarray:
    """Stack training input into one (N, d) float64 matrix.

    Accepts a FeatureSequence, a plain array, or an iterable of either.
    """
    if isinstance(train, FeatureSequence):
        parts = [train.frames]
    elif isinstance(train, np.ndarray):
        parts = [train]
    else:
        parts = [
            item.frames if isinstance(item, FeatureSequence) else np.asarray(item)
            for item in train
        ]
    if not parts:
        raise InsufficientDataError("no training frames supplied")
    mats = [np.atleast_2d(np.asarray(p, dtype=np.float64)) for p in parts]
    dims = {m.shape[1] for m in mats}
    if len(dims) != 1:
        raise AlignmentError(f"training frames disagree on dimension: {sorted(dims)}")
    stacked = np.concatenate(mats, axis=0)
    if not np.all(np.isfinite(stacked)):
        raise ValidationError("training frames must be finite")
    return stacked


@dataclass(frozen=True, eq=False)
class FsqCodec:
    """Finite scalar quantizer: projection pair plus per-dimension bounds.

    Parameters are stored as float32, matching the FLXQ container exactly;
    arithmetic happens in float64.
    """

    input_dim: int
    latent_dim: int
    levels: int
    down_proj: np.ndarray
    up_proj: np.ndarray
    per_dim_lo: np.ndarray
    per_dim_hi: np.ndarray

    def __post_init__(self) -> None:
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be >= 1")
        if self.levels < 2:
            raise ConfigError("levels must be >= 2")
        if self.latent_dim * np.log2(self.levels) > 62:
            raise ConfigError("codebook size exceeds the 63-bit index budget")
        down = self._own("down_proj", (self.input_dim, self.latent_dim))
        self._own("up_proj", (self.latent_dim, self.input_dim))
        lo = self._own("per_dim_lo", (self.latent_dim,))
        hi = self._own("per_dim_hi", (self.latent_dim,))
        del down
        if not np.all(lo < hi):
            raise ConfigError("per-dimension bounds must satisfy lo < hi")

    def _own(self, name: str, shape: tuple[int, ...]) -> np.ndarray:
        arr = np.array(getattr(self, name), dtype=np.float32, copy=True)
        if arr.shape != shape:
            raise ConfigError(f"{name} must have shape {shape}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ConfigError(f"{name} must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, name, arr)
        return arr

    @property
    def codebook_size(self) -> int:
        return self.levels**self.latent_dim

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FsqCodec):
            return NotImplemented
        return (
            self.input_dim == other.input_dim
            and self.latent_dim == other.latent_dim
            and self.levels == other.levels
            and np.array_equal(self.down_proj, other.down_proj)
            and np.array_equal(self.up_proj, other.up_proj)
            and np.array_equal(self.per_dim_lo, other.per_dim_lo)
            and np.array_equal(self.per_dim_hi, other.per_dim_hi)
        )


def fsq_fit(train, latent_dim: int, levels: int) -> FsqCodec:
    """Fit an FSQ codec to training frames.

    The down projection takes the top principal directions of the
    mean-centered frames; the up projection is the least-squares inverse on
    the raw frames, which makes down(up(y)) the identity on the latent space.
    Level bounds are the 1st and 99th percentiles of the projected training
    coordinates. Deterministic for a given data order.
    """
    frames = _collect_frames(train)
    count, dim = frames.shape
    if count < latent_dim:
        raise FitError(f"need at least {latent_dim} frames, got {count}")
    if levels < 2:
        raise ConfigError("levels must be >= 2")
    centered = frames - frames.mean(axis=0)
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    tol = max(count, dim) * np.finfo(np.float64).eps * singular[0]
    if singular.shape[0] < latent_dim or singular[latent_dim - 1] <= tol:
        raise FitError(
            f"training data rank is below {latent_dim}; cannot span the latent space"
        )
    directions = vt[:latent_dim]
    # Deterministic sign: largest-magnitude entry of each direction is positive.
    anchor = np.abs(directions).argmax(axis=1)
    signs = np.sign(directions[np.arange(latent_dim), anchor])
    signs[signs == 0] = 1.0
    down = (directions * signs[:, None]).T
    projected = frames @ down
    up, *_ = np.linalg.lstsq(projected, frames, rcond=None)
    lo = np.percentile(projected, 1.0, axis=0)
    hi = np.percentile(projected, 99.0, axis=0)
    if not np.all(lo < hi):
        raise FitError("a projected coordinate is constant; bounds collapsed")
    return FsqCodec(
        input_dim=dim,
        latent_dim=latent_dim,
        levels=levels,
        down_proj=down,
        up_proj=up,
        per_dim_lo=lo,
        per_dim_hi=hi,
    )


def _levels_from_coords(codec: FsqCodec, coords: np.ndarray) -> np.ndarray:
    lo = codec.per_dim_lo.astype(np.float64)
    hi = codec.per_dim_hi.astype(np.float64)
    scaled = (coords - lo) / (hi - lo) * (codec.levels - 1)
    snapped = _round_half_away(scaled)
    return np.clip(snapped, 0, codec.levels - 1).astype(np.int64)


def _levels_to_recon(codec: FsqCodec, levels: np.ndarray) -> np.ndarray:
    lo = codec.per_dim_lo.astype(np.float64)
    hi = codec.per_dim_hi.astype(np.float64)
    centers = lo + levels * (hi - lo) / (codec.levels - 1)
    return centers @ codec.up_proj.astype(np.float64)


def _level_powers(latent_dim: int, levels: int) -> np.ndarray:
    return levels ** np.arange(latent_dim, dtype=np.int64)


def fsq_quantize_frames(
    codec: FsqCodec, frames: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized FSQ over an (N, d) matrix.

    Returns indices (N,), levels (N, D), reconstructions (N, d), the latter
    in float64.
    """
    mat = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if mat.shape[1] != codec.input_dim:
        raise AlignmentError(
            f"frames have dimension {mat.shape[1]}, codec expects {codec.input_dim}"
        )
    if not np.all(np.isfinite(mat)):
        raise ValidationError("frames must be finite")
    coords = mat @ codec.down_proj.astype(np.float64)
    levels = _levels_from_coords(codec, coords)
    indices = levels @ _level_powers(codec.latent_dim, codec.levels)
    return indices, levels, _levels_to_recon(codec, levels)


def fsq_quantize(codec: FsqCodec, x) -> tuple[int, np.ndarray, np.ndarray]:
    """Quantize one d-vector to (index, level tuple, reconstruction).

    Coordinates are mapped affinely from [lo, hi] onto [0, L-1], rounded half
    away from zero, and clamped. The index reads the level tuple as a base-L
    integer, least significant digit first.
    """
    vec = np.asarray(x, dtype=np.float64)
    if vec.ndim != 1:
        raise ConfigError(f"fsq_quantize expects a single vector, got shape {vec.shape}")
    indices, levels, recon = fsq_quantize_frames(codec, vec[None, :])
    return int(indices[0]), levels[0], recon[0]


def fsq_index_decode(index: int, latent_dim: int, levels: int) -> np.ndarray:
    """Base-L digit expansion of an index, least significant digit first."""
    size = levels**latent_dim
    if not 0 <= index < size:
        raise ValidationError(f"index {index} outside [0, {size})")
    digits = np.empty(latent_dim, dtype=np.int64)
    remainder = int(index)
    for j in range(latent_dim):
        remainder, digits[j] = divmod(remainder, levels)
    return digits


def fsq_reconstruct(codec: FsqCodec, indices) -> np.ndarray:
    """Map indices (scalar or array) back to d-space reconstructions."""
    idx = np.asarray(indices, dtype=np.int64)
    scalar = idx.ndim == 0
    idx = np.atleast_1d(idx)
    size = codec.codebook_size
    if idx.size and (idx.min() < 0 or idx.max() >= size):
        raise ValidationError(f"index outside [0, {size})")
    powers = _level_powers(codec.latent_dim, codec.levels)
    levels = (idx[:, None] // powers[None, :]) % codec.levels
    recon = _levels_to_recon(codec, levels)
    return recon[0] if scalar else recon


@dataclass(frozen=True, eq=False)
class RvqCodebooks:
    """Ordered residual codebooks; every layer is a (K, d) float32 matrix."""

    layers: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ConfigError("at least one RVQ layer is required")
        owned = []
        shape = None
        for i, layer in enumerate(self.layers):
            arr = np.array(layer, dtype=np.float32, copy=True)
            if arr.ndim != 2 or arr.shape[0] < 1:
                raise ConfigError(f"layer {i} must be a (K, d) matrix")
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"layer {i} contains non-finite codewords")
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise ConfigError(
                    f"layer {i} shape {arr.shape} differs from layer 0 shape {shape}"
                )
            arr.flags.writeable = False
            owned.append(arr)
        object.__setattr__(self, "layers", tuple(owned))

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def codebook_size(self) -> int:
        return self.layers[0].shape[0]

    @property
    def dim(self) -> int:
        return self.layers[0].shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RvqCodebooks):
            return NotImplemented
        return len(self.layers) == len(other.layers) and all(
            np.array_equal(a, b) for a, b in zip(self.layers, other.layers)
        )


def _nearest(codebook: np.ndarray, points: np.ndarray) -> np.ndarray:
    # argmin of ||p - c||^2 expanded; the point term is constant per row and
    # dropped. Duplicated codewords produce bitwise-equal scores, so argmin's
    # first-hit rule implements the lowest-index tie break.
    scores = np.sum(codebook**2, axis=1)[None, :] - 2.0 * (points @ codebook.T)
    return np.argmin(scores, axis=1)


def fit_codebook(points, codebook_size: int, iters: int, seed) -> tuple[np.ndarray, list[float]]:
    """Fit one codebook with k-means++ seeding and Lloyd updates.

    Empty clusters are reseeded to the point currently farthest from its
    centroid, lowest cluster index first. Returns the float64 codebook and
    the mean squared error measured after each iteration; the sequence is
    non-increasing. Deterministic per seed.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    count = pts.shape[0]
    if count < codebook_size:
        raise InsufficientDataError(
            f"need at least {codebook_size} frames, got {count}"
        )
    if iters < 1:
        raise ConfigError("iters must be >= 1")
    rng = np.random.default_rng(seed)

    centers = np.empty((codebook_size, pts.shape[1]), dtype=np.float64)
    centers[0] = pts[rng.integers(count)]
    d2 = np.sum((pts - centers[0]) ** 2, axis=1)
    for k in range(1, codebook_size):
        total = d2.sum()
        if total > 0:
            pick = rng.choice(count, p=d2 / total)
        else:
            pick = int(rng.integers(count))
        centers[k] = pts[pick]
        d2 = np.minimum(d2, np.sum((pts - centers[k]) ** 2, axis=1))

    history: list[float] = []
    for _ in range(iters):
        labels = _nearest(centers, pts)
        for k in range(codebook_size):
            members = pts[labels == k]
            if members.shape[0]:
                centers[k] = members.mean(axis=0)
        assigned = np.sum((pts - centers[labels]) ** 2, axis=1)
        for k in range(codebook_size):
            if not np.any(labels == k):
                far = int(np.argmax(assigned))
                centers[k] = pts[far]
                labels[far] = k
                assigned[far] = -1.0
        labels = _nearest(centers, pts)
        history.append(float(np.mean(np.sum((pts - centers[labels]) ** 2, axis=1))))
    return centers, history


def rvq_fit(
    residual_train, num_layers: int, codebook_size: int, iters: int, seed: int
) -> RvqCodebooks:
    """Fit residual codebooks layer by layer.

    Layer 1 trains on the raw frames; each later layer trains on whatever
    error the previous layers left behind. Deterministic per seed.
    """
    if num_layers < 1:
        raise ConfigError("num_layers must be >= 1")
    frames = _collect_frames(residual_train)
    if frames.shape[0] < codebook_size:
        raise InsufficientDataError(
            f"need at least {codebook_size} frames to fit a layer, "
            f"got {frames.shape[0]}"
        )
    residual = frames.copy()
    layers = []
    for layer_index in range(num_layers):
        centers, _ = fit_codebook(residual, codebook_size, iters, [seed, layer_index])
        centers32 = centers.astype(np.float32)
        layers.append(centers32)
        chosen = _nearest(centers32.astype(np.float64), residual)
        residual -= centers32.astype(np.float64)[chosen]
    return RvqCodebooks(layers=tuple(layers))


def rvq_encode_frames(
    cb: RvqCodebooks, frames: np.ndarray, n_layers: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized residual encode of an (N, d) matrix over the first layers.

    Returns indices (n_layers, N), approximations (N, d), residuals (N, d).
    """
    if not 1 <= n_layers <= cb.num_layers:
        raise ConfigError(
            f"n_layers must lie in [1, {cb.num_layers}], got {n_layers}"
        )
    mat = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if mat.shape[1] != cb.dim:
        raise AlignmentError(
            f"frames have dimension {mat.shape[1]}, codebooks expect {cb.dim}"
        )
    indices = np.empty((n_layers, mat.shape[0]), dtype=np.int64)
    approx = np.zeros_like(mat)
    residual = mat.copy()
    for layer in range(n_layers):
        book = cb.layers[layer].astype(np.float64)
        chosen = _nearest(book, residual)
        indices[layer] = chosen
        approx += book[chosen]
        residual -= book[chosen]
    return indices, approx, mat - approx


def rvq_encode(
    cb: RvqCodebooks, x, n_layers: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Residual-quantize one vector through the first ``n_layers`` layers.

    Each layer picks the L2-nearest codeword to the running residual, lowest
    index winning ties. Returns (indices, approx, residual) with
    approx + residual == x up to float addition.
    """
    vec = np.asarray(x, dtype=np.float64)
    if vec.ndim != 1:
        raise ConfigError(f"rvq_encode expects a single vector, got shape {vec.shape}")
    indices, approx, residual = rvq_encode_frames(cb, vec[None, :], n_layers)
    return indices[:, 0], approx[0], residual[0]


def rvq_decode_frames(cb: RvqCodebooks, indices) -> np.ndarray:
    """Sum the indexed codewords for each column of an (n, N) index matrix."""
    idx = np.atleast_2d(np.asarray(indices, dtype=np.int64))
    if idx.shape[0] > cb.num_layers:
        raise ConfigError(
            f"{idx.shape[0]} index rows for {cb.num_layers} layers"
        )
    if idx.size and (idx.min() < 0 or idx.max() >= cb.codebook_size):
        raise ValidationError(f"index outside [0, {cb.codebook_size})")
    out = np.zeros((idx.shape[1], cb.dim), dtype=np.float64)
    for layer in range(idx.shape[0]):
        out += cb.layers[layer].astype(np.float64)[idx[layer]]
    return out


def rvq_decode(cb: RvqCodebooks, indices) -> np.ndarray:
    """Sum of the indexed codewords; an empty index list gives the zero vector."""
    idx = np.asarray(list(indices), dtype=np.int64)
    if idx.ndim != 1:
        raise ConfigError(f"rvq_decode expects a flat index list, got shape {idx.shape}")
    if idx.size == 0:
        return np.zeros(cb.dim, dtype=np.float64)
    return rvq_decode_frames(cb, idx[:, None])[0]


def feat_alignment_distance(quantized, reference) -> float:
    """Mean squared L2 distance between two equally shaped vector sequences."""
    q = np.atleast_2d(np.asarray(quantized, dtype=np.float64))
    r = np.atleast_2d(np.asarray(reference, dtype=np.float64))
    if q.shape != r.shape:
        raise AlignmentError(f"shape mismatch: {q.shape} vs {r.shape}")
    if q.shape[0] == 0:
        raise InsufficientDataError("distance over zero frames is undefined")
    return float(np.mean(np.sum((q - r) ** 2, axis=1)))


def residual_layer_mse(cb: RvqCodebooks, frames) -> list[float]:
    """Mean squared residual after each layer, for fit diagnostics."""
    mat = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    residual = mat.copy()
    out = []
    for layer in cb.layers:
        book = layer.astype(np.float64)
        residual -= book[_nearest(book, residual)]
        out.append(float(np.mean(np.sum(residual**2, axis=1))))
    return out


_FSQ_HEAD = struct.Struct("<IBB")
_RVQ_HEAD = struct.Struct("<BII")


def _codec_body(fsq: FsqCodec, rvq: RvqCodebooks) -> bytes:
    parts = [
        FLXQ_MAGIC,
        struct.pack("<B", FLXQ_VERSION),
        _FSQ_HEAD.pack(fsq.input_dim, fsq.latent_dim, fsq.levels),
        np.ascontiguousarray(fsq.down_proj, dtype="<f4").tobytes(),
        np.ascontiguousarray(fsq.up_proj, dtype="<f4").tobytes(),
        np.ascontiguousarray(fsq.per_dim_lo, dtype="<f4").tobytes(),
        np.ascontiguousarray(fsq.per_dim_hi, dtype="<f4").tobytes(),
        _RVQ_HEAD.pack(rvq.num_layers, rvq.codebook_size, rvq.dim),
    ]
    for layer in rvq.layers:
        parts.append(np.ascontiguousarray(layer, dtype="<f4").tobytes())
    return b"".join(parts)


def codec_fingerprint(fsq: FsqCodec, rvq: RvqCodebooks) -> int:
    """The 64-bit FNV-1a fingerprint a bitstream uses to reference this pair."""
    return fnv1a_64(_codec_body(fsq, rvq))


def save_codecs(fsq: FsqCodec, rvq: RvqCodebooks, path) -> int:
    """Write both quantizers to an FLXQ file; returns the fingerprint."""
    if rvq.num_layers > 255:
        raise ConfigError("FLXQ stores at most 255 RVQ layers")
    body = _codec_body(fsq, rvq)
    fingerprint = fnv1a_64(body)
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<Q", fingerprint))
    return fingerprint


def load_codecs(path) -> tuple[FsqCodec, RvqCodebooks, int]:
    """Read an FLXQ file, verifying structure and fingerprint.

    Returns (fsq, rvq, fingerprint).
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != FLXQ_MAGIC:
        raise FormatError(f"{path}: bad magic")
    if len(blob) < 5 + _FSQ_HEAD.size + _RVQ_HEAD.size + 8:
        raise CorruptionError(f"{path}: truncated header")
    if blob[4] != FLXQ_VERSION:
        raise FormatError(f"{path}: unsupported FLXQ version {blob[4]}")
    stored = struct.unpack_from("<Q", blob, len(blob) - 8)[0]
    body = blob[:-8]
    actual = fnv1a_64(body)
    if actual != stored:
        raise CorruptionError(
            f"{path}: fingerprint mismatch, stored {stored:#018x} "
            f"recomputed {actual:#018x}"
        )
    offset = 5
    dim, latent_dim, levels = _FSQ_HEAD.unpack_from(body, offset)
    offset += _FSQ_HEAD.size

    def take(count: int) -> np.ndarray:
        nonlocal offset
        end = offset + count * 4
        if end > len(body):
            raise CorruptionError(f"{path}: matrix data truncated")
        out = np.frombuffer(body, dtype="<f4", count=count, offset=offset)
        offset = end
        return out

    down = take(dim * latent_dim).reshape(dim, latent_dim)
    up = take(latent_dim * dim).reshape(latent_dim, dim)
    lo = take(latent_dim)
    hi = take(latent_dim)
    if offset + _RVQ_HEAD.size > len(body):
        raise CorruptionError(f"{path}: RVQ header truncated")
    num_layers, codebook_size, rvq_dim = _RVQ_HEAD.unpack_from(body, offset)
    offset += _RVQ_HEAD.size
    layers = tuple(
        take(codebook_size * rvq_dim).reshape(codebook_size, rvq_dim)
        for _ in range(num_layers)
    )
    if offset != len(body):
        raise CorruptionError(f"{path}: {len(body) - offset} trailing bytes")
    try:
        fsq = FsqCodec(
            input_dim=dim,
            latent_dim=latent_dim,
            levels=levels,
            down_proj=down,
            up_proj=up,
            per_dim_lo=lo,
            per_dim_hi=hi,
        )
        rvq = RvqCodebooks(layers=layers)
    except ConfigError as exc:
        raise CorruptionError(f"{path}: {exc}") from exc
    return fsq, rvq, stored
