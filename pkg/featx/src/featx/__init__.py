"""Feature extraction bridge from 16 kHz WAV files to FLXF stream pairs.

The semantic stream is the last hidden state of a frozen speech encoder,
resampled to the target frame rate. The acoustic stream is a log-mel
spectrogram aggregated to the same rate; it stands in for a trained
waveform encoder so the downstream codec can run on real audio.
"""

__version__ = "0.1.0"

from .extract import (
    AudioFormatError,
    ExtractionJob,
    FeatxError,
    ModelLoadError,
    aggregate_to_rate,
    encoder_frame_rate,
    extract,
    hidden_states,
    load_encoder,
    log_mel_frames,
    read_wav_mono_16k,
    resample_frame_centers,
    write_flxf,
)

__all__ = [
    "__version__",
    "AudioFormatError",
    "ExtractionJob",
    "FeatxError",
    "ModelLoadError",
    "aggregate_to_rate",
    "encoder_frame_rate",
    "extract",
    "hidden_states",
    "load_encoder",
    "log_mel_frames",
    "read_wav_mono_16k",
    "resample_frame_centers",
    "write_flxf",
]
