"""WAV to FLXF extraction pipeline.

Audio must be 16 kHz mono 16-bit PCM. Each input yields two files with the
same frame count T = max(1, round(duration_s * target_rate)):

  <stem>.sem.flxf   encoder last hidden state, linearly resampled
  <stem>.ac.flxf    log-mel frames averaged into target-rate bins

Resampling uses frame-center alignment: source frame i sits at time
(i + 0.5) / source_rate, and each target frame is evaluated at its own
center with endpoint clamping.
"""

from __future__ import annotations

import math
import struct
import wave
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

SAMPLE_RATE = 16000
DEFAULT_RATE = Fraction(25, 2)
BUILTIN_TINY = "builtin:tiny"

_FLXF_HEADER = struct.Struct("<4sBBIQII")
_KIND_CODES = {"semantic": 0, "acoustic": 1}

# log-mel analysis geometry: 25 ms window, 10 ms hop
MEL_WIN = 400
MEL_HOP = 160
MEL_NFFT = 512
MEL_BANDS = 40


class FeatxError(Exception):
    """Base error for the extraction pipeline."""


class AudioFormatError(FeatxError):
    """Input audio violates the 16 kHz mono 16-bit PCM contract."""


class ModelLoadError(FeatxError):
    """The requested encoder could not be constructed or loaded."""


def read_wav_mono_16k(path) -> np.ndarray:
    """Read a WAV file into float32 samples in [-1, 1)."""
    try:
        with wave.open(str(path), "rb") as fh:
            rate = fh.getframerate()
            channels = fh.getnchannels()
            width = fh.getsampwidth()
            raw = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: not a readable WAV file: {exc}") from exc
    if rate != SAMPLE_RATE:
        raise AudioFormatError(f"{path}: expected {SAMPLE_RATE} Hz, got {rate}")
    if channels != 1:
        raise AudioFormatError(f"{path}: expected mono, got {channels} channels")
    if width != 2:
        raise AudioFormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    pcm = np.frombuffer(raw, dtype="<i2")
    if pcm.size == 0:
        raise AudioFormatError(f"{path}: no samples")
    return pcm.astype(np.float32) / 32768.0


def load_encoder(model_id: str = BUILTIN_TINY, seed: int = 0):
    """Build or load the frozen speech encoder.

    "builtin:tiny" constructs a small randomly initialized encoder with a
    fixed seed so the pipeline runs without any downloaded checkpoint; any
    other id is passed to transformers.AutoModel.from_pretrained and must
    resolve to an encoder exposing conv_stride in its config.
    """
    import torch
    from transformers import Wav2Vec2Config, Wav2Vec2Model

    if model_id.startswith("builtin:"):
        if model_id != BUILTIN_TINY:
            raise ModelLoadError(f"unknown builtin encoder '{model_id}'")
        config = Wav2Vec2Config(
            hidden_size=32,
            num_hidden_layers=2,
            num_attention_heads=2,
            intermediate_size=64,
            conv_dim=(32, 32, 32, 32, 32, 32, 32),
            vocab_size=32,
        )
        torch.manual_seed(seed)
        model = Wav2Vec2Model(config)
    else:
        from transformers import AutoModel

        try:
            model = AutoModel.from_pretrained(model_id)
        except Exception as exc:
            raise ModelLoadError(f"cannot load encoder '{model_id}': {exc}") from exc
        if not hasattr(model.config, "conv_stride"):
            raise ModelLoadError(
                f"encoder '{model_id}' has no conv_stride config, frame rate unknown"
            )
    model.eval()
    return model


def encoder_frame_rate(model) -> Fraction:
    """Native output rate of the encoder: sample rate over the stride product."""
    stride = math.prod(model.config.conv_stride)
    return Fraction(SAMPLE_RATE, stride)


def hidden_states(model, samples: np.ndarray) -> np.ndarray:
    """Last hidden state of the encoder for one waveform, as (T, d) float32."""
    import torch

    wav = np.asarray(samples, dtype=np.float32)
    if wav.size < MEL_WIN:
        wav = np.pad(wav, (0, MEL_WIN - wav.size))
    with torch.no_grad():
        out = model(torch.from_numpy(wav)[None, :]).last_hidden_state
    return out[0].cpu().numpy().astype(np.float32)


def _hann(width: int) -> np.ndarray:
    return np.hanning(width).astype(np.float64)


def _mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    def to_mel(hz):
        return 2595.0 * np.log10(1.0 + hz / 700.0)

    def to_hz(mel):
        return 700.0 * (10.0 ** (mel / 2595.0) - 1.0)

    points = to_hz(np.linspace(0.0, to_mel(sample_rate / 2.0), n_mels + 2))
    bins = np.floor((n_fft + 1) * points / sample_rate).astype(int)
    bank = np.zeros((n_mels, n_fft // 2 + 1))
    for m in range(1, n_mels + 1):
        lo, center, hi = bins[m - 1], bins[m], bins[m + 1]
        for k in range(lo, center):
            bank[m - 1, k] = (k - lo) / max(center - lo, 1)
        for k in range(center, hi):
            bank[m - 1, k] = (hi - k) / max(hi - center, 1)
    return bank


def log_mel_frames(samples: np.ndarray) -> np.ndarray:
    """Log-mel power frames at the 10 ms analysis hop, (N, MEL_BANDS) float32."""
    wav = np.asarray(samples, dtype=np.float64)
    if wav.size < MEL_WIN:
        wav = np.pad(wav, (0, MEL_WIN - wav.size))
    count = 1 + (wav.size - MEL_WIN) // MEL_HOP
    starts = MEL_HOP * np.arange(count)
    frames = wav[starts[:, None] + np.arange(MEL_WIN)[None, :]] * _hann(MEL_WIN)
    power = np.abs(np.fft.rfft(frames, n=MEL_NFFT, axis=1)) ** 2
    bank = _mel_filterbank(MEL_BANDS, MEL_NFFT, SAMPLE_RATE)
    return np.log(power @ bank.T + 1e-10).astype(np.float32)


def aggregate_to_rate(
    mel: np.ndarray, num_frames: int, target_rate: Fraction
) -> np.ndarray:
    """Average analysis frames into ``num_frames`` target-rate bins.

    A frame belongs to the bin its window center falls in; a tail bin with
    no frame of its own reuses the last available frame.
    """
    centers = MEL_HOP * np.arange(mel.shape[0]) + MEL_WIN // 2
    samples_per_bin = float(Fraction(SAMPLE_RATE, 1) / target_rate)
    edges = samples_per_bin * np.arange(num_frames + 1)
    cuts = np.searchsorted(centers, edges)
    out = np.empty((num_frames, mel.shape[1]), dtype=np.float32)
    for k in range(num_frames):
        lo, hi = cuts[k], cuts[k + 1]
        if hi > lo:
            out[k] = mel[lo:hi].mean(axis=0)
        else:
            out[k] = mel[min(lo, mel.shape[0] - 1)]
    return out


def resample_frame_centers(
    frames: np.ndarray, src_rate: Fraction, dst_rate: Fraction, num_out: int
) -> np.ndarray:
    """Linear interpolation at target frame centers, endpoints clamped."""
    mat = np.asarray(frames, dtype=np.float64)
    if mat.shape[0] == 1:
        return np.repeat(mat, num_out, axis=0).astype(np.float32)
    ratio = float(src_rate / dst_rate)
    pos = np.clip((np.arange(num_out) + 0.5) * ratio - 0.5, 0.0, mat.shape[0] - 1.0)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, mat.shape[0] - 1)
    w = (pos - lo)[:, None]
    return ((1.0 - w) * mat[lo] + w * mat[hi]).astype(np.float32)


def _regrid_bands(frames: np.ndarray, width: int) -> np.ndarray:
    # Same center-aligned lerp as the time resampler, applied along the
    # band axis so the acoustic proxy matches the encoder width.
    mat = np.asarray(frames, dtype=np.float64)
    if mat.shape[1] == width:
        return np.asarray(frames, dtype=np.float32)
    if mat.shape[1] == 1:
        return np.repeat(mat, width, axis=1).astype(np.float32)
    ratio = mat.shape[1] / width
    pos = np.clip((np.arange(width) + 0.5) * ratio - 0.5, 0.0, mat.shape[1] - 1.0)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, mat.shape[1] - 1)
    w = pos - lo
    return ((1.0 - w)[None, :] * mat[:, lo] + w[None, :] * mat[:, hi]).astype(
        np.float32
    )


def write_flxf(path, frames: np.ndarray, rate: Fraction, kind: str) -> None:
    """Write a (T, d) float32 matrix in the FLXF container layout."""
    mat = np.ascontiguousarray(frames, dtype="<f4")
    if mat.ndim != 2 or mat.shape[1] < 1:
        raise FeatxError(f"frames must be (T, d) with d >= 1, got {mat.shape}")
    header = _FLXF_HEADER.pack(
        b"FLXF",
        1,
        _KIND_CODES[kind],
        mat.shape[1],
        mat.shape[0],
        rate.numerator,
        rate.denominator,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(mat.tobytes())


def _target_frame_count(num_samples: int, rate: Fraction) -> int:
    exact = Fraction(num_samples, SAMPLE_RATE) * rate
    return max(1, int(exact + Fraction(1, 2)))


@dataclass(frozen=True)
class ExtractionJob:
    """One batch of WAV files to convert into FLXF pairs."""

    audio_paths: tuple[str, ...]
    out_dir: str
    model_id: str = BUILTIN_TINY
    target_rate: Fraction = field(default=DEFAULT_RATE)
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.audio_paths:
            raise FeatxError("no input files")
        if self.target_rate <= 0:
            raise FeatxError(f"target rate must be positive, got {self.target_rate}")


def extract(job: ExtractionJob) -> list[tuple[Path, Path]]:
    """Run the pipeline; returns (semantic_path, acoustic_path) per input.

    Inputs are processed in sorted path order. Both output files of a pair
    carry the same frame count, the same feature dimension (the encoder
    hidden size; the log-mel bands are regridded to it), and the job's
    target rate, so a pair can be fed straight into a joint codec fit.
    """
    model = load_encoder(job.model_id, job.seed)
    native_rate = encoder_frame_rate(model)
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = []
    for path in sorted(job.audio_paths):
        samples = read_wav_mono_16k(path)
        num_out = _target_frame_count(samples.size, job.target_rate)
        sem = resample_frame_centers(
            hidden_states(model, samples), native_rate, job.target_rate, num_out
        )
        ac = _regrid_bands(
            aggregate_to_rate(log_mel_frames(samples), num_out, job.target_rate),
            sem.shape[1],
        )
        stem = Path(path).stem
        sem_path = out_dir / f"{stem}.sem.flxf"
        ac_path = out_dir / f"{stem}.ac.flxf"
        write_flxf(sem_path, sem, job.target_rate, "semantic")
        write_flxf(ac_path, ac, job.target_rate, "acoustic")
        results.append((sem_path, ac_path))
    return results
