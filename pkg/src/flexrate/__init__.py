"""Dynamic frame rate audio token codec toolkit.

Feature sequences at a fixed frame rate are merged where adjacent frames
are similar, quantized into one semantic index plus a stack of acoustic
residual indices per merged frame, and packed into a compact bitstream
that records how to restore the original timeline.
"""

__version__ = "0.1.0"

from .analysis import (
    DEFAULT_BIT_LAYOUT,
    BitLayout,
    RateCurve,
    RatePoint,
    average_frame_rate,
    bitrate_kbps,
    display_round,
    merge_report,
    pearson_r,
    stride_frame_rate,
    sweep_tau,
    tau_for_target_rate,
)
from .codec import (
    FLXC_MAGIC,
    FLXC_VERSION,
    Bitstream,
    EncodeOptions,
    TokenStream,
    bits_for,
    decode,
    encode,
    load_bitstream,
    pack,
    save_bitstream,
    unpack,
)
from .errors import (
    AlignmentError,
    CodecMismatchError,
    ConfigError,
    CorruptionError,
    DomainError,
    FitError,
    FlexrateError,
    FormatError,
    InsufficientDataError,
    PlanMismatchError,
    ValidationError,
)
from .features import (
    ACOUSTIC,
    FLXF_MAGIC,
    FLXF_VERSION,
    SEMANTIC,
    FeatureSequence,
    as_rate,
    load_features,
    resample_linear,
    save_features,
    synth_piecewise_constant,
    synth_random_walk,
)
from .merge import (
    DEFAULT_L_MAX,
    REFINER_MODES,
    MergePlan,
    MergedSequence,
    adjacent_similarity,
    apply_merge,
    plan_merge,
    refine_context,
    unmerge,
)
from .quant import (
    FLXQ_MAGIC,
    FLXQ_VERSION,
    FsqCodec,
    RvqCodebooks,
    codec_fingerprint,
    feat_alignment_distance,
    fit_codebook,
    fnv1a_64,
    fsq_fit,
    fsq_index_decode,
    fsq_quantize,
    fsq_quantize_frames,
    fsq_reconstruct,
    load_codecs,
    residual_layer_mse,
    rvq_decode,
    rvq_decode_frames,
    rvq_encode,
    rvq_encode_frames,
    rvq_fit,
    save_codecs,
)

__all__ = [
    "__version__",
    # features
    "FeatureSequence",
    "SEMANTIC",
    "ACOUSTIC",
    "FLXF_MAGIC",
    "FLXF_VERSION",
    "as_rate",
    "save_features",
    "load_features",
    "resample_linear",
    "synth_piecewise_constant",
    "synth_random_walk",
    # merge
    "DEFAULT_L_MAX",
    "REFINER_MODES",
    "MergePlan",
    "MergedSequence",
    "adjacent_similarity",
    "plan_merge",
    "apply_merge",
    "unmerge",
    "refine_context",
    # quantizers
    "FLXQ_MAGIC",
    "FLXQ_VERSION",
    "FsqCodec",
    "RvqCodebooks",
    "fsq_fit",
    "fsq_quantize",
    "fsq_quantize_frames",
    "fsq_index_decode",
    "fsq_reconstruct",
    "fit_codebook",
    "rvq_fit",
    "rvq_encode",
    "rvq_encode_frames",
    "rvq_decode",
    "rvq_decode_frames",
    "feat_alignment_distance",
    "residual_layer_mse",
    "codec_fingerprint",
    "fnv1a_64",
    "save_codecs",
    "load_codecs",
    # codec
    "FLXC_MAGIC",
    "FLXC_VERSION",
    "Bitstream",
    "EncodeOptions",
    "TokenStream",
    "bits_for",
    "encode",
    "decode",
    "pack",
    "unpack",
    "save_bitstream",
    "load_bitstream",
    # analysis
    "BitLayout",
    "DEFAULT_BIT_LAYOUT",
    "RatePoint",
    "RateCurve",
    "average_frame_rate",
    "bitrate_kbps",
    "display_round",
    "sweep_tau",
    "tau_for_target_rate",
    "pearson_r",
    "stride_frame_rate",
    "merge_report",
    # errors
    "FlexrateError",
    "FormatError",
    "CorruptionError",
    "ConfigError",
    "AlignmentError",
    "PlanMismatchError",
    "FitError",
    "InsufficientDataError",
    "CodecMismatchError",
    "DomainError",
    "ValidationError",
]
