"""Batch command line for fitting, encoding, decoding, and analysis.

Machine-readable results go to stdout (JSON for single objects, CSV for
curves, JSONL for reports); progress and diagnostics go to stderr. Exit
codes: 0 success, 1 generic error, 2 usage, 3 insufficient data, 4 codec
mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    BitLayout,
    average_frame_rate,
    bitrate_kbps,
    merge_report,
    sweep_tau,
    tau_for_target_rate,
)
from .codec import (
    FLXC_VERSION,
    EncodeOptions,
    TokenStream,
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
    FlexrateError,
    InsufficientDataError,
    ValidationError,
)
from .features import (
    ACOUSTIC,
    FLXF_VERSION,
    SEMANTIC,
    FeatureSequence,
    as_rate,
    load_features,
    save_features,
    synth_piecewise_constant,
    synth_random_walk,
)
from .merge import REFINER_MODES, adjacent_similarity, apply_merge, plan_merge, unmerge
from .quant import (
    FLXQ_VERSION,
    fsq_fit,
    fsq_index_decode,
    fsq_quantize_frames,
    load_codecs,
    residual_layer_mse,
    rvq_fit,
    save_codecs,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_INSUFFICIENT_DATA = 3
EXIT_CODEC_MISMATCH = 4


def _info(message: str) -> None:
    print(message, file=sys.stderr)


def _emit(obj: dict) -> None:
    print(json.dumps(obj))


def _require_files(*paths: Path) -> None:
    for path in paths:
        if not path.is_file():
            raise FlexrateError(f"input file not found: {path}")


def _load_pair(semantic_path: Path, acoustic_path: Path) -> tuple[FeatureSequence, FeatureSequence]:
    sem = load_features(semantic_path)
    ac = load_features(acoustic_path)
    if sem.stream_kind != SEMANTIC:
        raise AlignmentError(f"{semantic_path} is not a semantic stream")
    if ac.stream_kind != ACOUSTIC:
        raise AlignmentError(f"{acoustic_path} is not an acoustic stream")
    return sem, ac


def cmd_fit(args: argparse.Namespace) -> int:
    if len(args.semantic) != len(args.acoustic):
        raise AlignmentError(
            f"{len(args.semantic)} semantic files vs {len(args.acoustic)} acoustic"
        )
    pairs = sorted(zip(args.semantic, args.acoustic))
    _require_files(*(p for pair in pairs for p in pair))
    merged_sem = []
    merged_ac = []
    dim = None
    for sem_path, ac_path in pairs:
        sem, ac = _load_pair(sem_path, ac_path)
        if sem.num_frames != ac.num_frames:
            raise AlignmentError(
                f"{sem_path} and {ac_path} disagree on frame count"
            )
        if sem.dim != ac.dim:
            raise AlignmentError(
                f"{sem_path} and {ac_path} disagree on feature dimension: "
                f"{sem.dim} vs {ac.dim}"
            )
        if dim is None:
            dim = sem.dim
        elif sem.dim != dim:
            raise AlignmentError(
                f"{sem_path} has dimension {sem.dim}, earlier pairs have {dim}"
            )
        plan = plan_merge(adjacent_similarity(sem), args.tau, args.l_max)
        merged_sem.append(apply_merge(sem, plan).vectors)
        merged_ac.append(apply_merge(ac, plan).vectors)
    sem_train = np.concatenate(merged_sem, axis=0)
    ac_train = np.concatenate(merged_ac, axis=0)
    _info(f"fit: {sem_train.shape[0]} merged frames from {len(pairs)} pair(s)")

    fsq = fsq_fit(sem_train, args.fsq_dims, args.fsq_levels)
    _, _, recon = fsq_quantize_frames(fsq, sem_train)
    residuals = ac_train - recon
    rvq = rvq_fit(residuals, args.rvq_layers, args.rvq_size, args.iters, args.seed)
    fingerprint = save_codecs(fsq, rvq, args.out)
    for layer, mse in enumerate(residual_layer_mse(rvq, residuals), start=1):
        _info(f"fit: residual MSE after layer {layer}: {mse:.6g}")
    _emit(
        {
            "fingerprint": f"{fingerprint:#018x}",
            "codebook_size": fsq.codebook_size,
            "rvq_layers": rvq.num_layers,
            "rvq_size": rvq.codebook_size,
            "out": str(args.out),
        }
    )
    return EXIT_OK


def cmd_encode(args: argparse.Namespace) -> int:
    _require_files(args.semantic, args.acoustic, args.codec)
    sem, ac = _load_pair(args.semantic, args.acoustic)
    fsq, rvq, fingerprint = load_codecs(args.codec)
    if args.tau is not None:
        tau = args.tau
    else:
        target = float(as_rate(args.target_rate))
        tau = tau_for_target_rate(sem, target, args.tol, args.l_max)
        _info(f"encode: target {target} Hz resolved to tau {tau:.6f}")
    opts = EncodeOptions(
        tau=tau,
        n_q=args.n_q,
        l_max=args.l_max,
        refiner_mode=args.refiner,
        refiner_window=args.window,
    )
    ts = encode(sem, ac, fsq, rvq, opts)
    bs = pack(ts, fingerprint)
    save_bitstream(bs, args.out)
    layout = BitLayout.for_geometry(ts.l_max, ts.fsq_dims, ts.fsq_levels, ts.rvq_size)
    result = {
        "tau": tau,
        "merged_frames": ts.merged_frame_count,
        "source_frames": ts.source_frame_count,
        "bytes": len(bs),
        "out": str(args.out),
    }
    if ts.source_frame_count:
        sem_kbps, total_kbps = bitrate_kbps(ts, layout)
        result["avg_rate_hz"] = average_frame_rate(ts)
        result["semantic_kbps"] = sem_kbps
        result["total_kbps"] = total_kbps
    _emit(result)
    return EXIT_OK


def cmd_decode(args: argparse.Namespace) -> int:
    _require_files(args.bitstream, args.codec)
    ts = unpack(load_bitstream(args.bitstream))
    fsq, rvq, _ = load_codecs(args.codec)
    seq = decode(ts, fsq, rvq, refiner_mode=args.refiner, refiner_window=args.window)
    save_features(seq, args.out)
    _emit(
        {
            "frames": seq.num_frames,
            "dim": seq.dim,
            "rate_hz": str(seq.frame_rate_hz),
            "out": str(args.out),
        }
    )
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    _require_files(args.input)
    seq = load_features(args.input)
    taus = [float(t) for t in args.taus.split(",") if t.strip()]
    curve = sweep_tau(seq, taus, l_max=args.l_max, n_q=args.n_q)
    lines = ["tau,avg_rate_hz,payload_kbps"]
    lines += [f"{p.tau},{p.avg_rate_hz},{p.payload_kbps}" for p in curve.points]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        _info(f"sweep: wrote {len(curve.points)} points to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _read_annotations(path: Path) -> list[tuple[float, float, str]]:
    out = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(maxsplit=2)
        if len(parts) != 3:
            raise ValidationError(f"{path}:{lineno}: expected 'start end label'")
        try:
            out.append((float(parts[0]), float(parts[1]), parts[2]))
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: bad interval bounds") from exc
    return out


def cmd_report(args: argparse.Namespace) -> int:
    _require_files(args.bitstream)
    ts = unpack(load_bitstream(args.bitstream))
    annotations = None
    if args.annotations:
        _require_files(args.annotations)
        annotations = _read_annotations(args.annotations)
    text = merge_report(ts, annotations)
    if args.out:
        Path(args.out).write_text(text)
        _info(f"report: wrote {ts.merged_frame_count + 1} records to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    rate = as_rate(args.rate)
    if args.kind == "piecewise":
        seq = synth_piecewise_constant(
            num_segments=args.segments,
            seg_len_range=(args.seg_min, args.seg_max),
            dim=args.dim,
            seed=args.seed,
            frame_rate_hz=rate,
            stream_kind=args.stream,
        )
    else:
        seq = synth_random_walk(
            num_frames=args.frames,
            dim=args.dim,
            step_scale=args.step,
            seed=args.seed,
            frame_rate_hz=rate,
            stream_kind=args.stream,
        )
    save_features(seq, args.out)
    _emit(
        {
            "kind": args.kind,
            "frames": seq.num_frames,
            "dim": seq.dim,
            "rate_hz": str(rate),
            "out": str(args.out),
        }
    )
    return EXIT_OK


def _check_fsq_bijection() -> None:
    dims, levels = 5, 8
    powers = levels ** np.arange(dims, dtype=np.int64)
    for index in range(levels**dims):
        digits = fsq_index_decode(index, dims, levels)
        if int(digits @ powers) != index:
            raise FlexrateError(f"index {index} failed the bijection")


def _check_merge_roundtrip() -> None:
    from .merge import MergePlan

    for seed in range(50):
        seq = synth_piecewise_constant(12, (1, 8), 6, seed=seed)
        frames = seq.frames
        lengths = []
        run = 1
        for t in range(1, frames.shape[0]):
            if np.array_equal(frames[t], frames[t - 1]) and run < 8:
                run += 1
            else:
                lengths.append(run)
                run = 1
        lengths.append(run)
        plan = MergePlan(tuple(lengths), frames.shape[0], tau=None)
        if unmerge(apply_merge(seq, plan)) != seq:
            raise FlexrateError(f"merge roundtrip failed for seed {seed}")


def _check_plan_invariants() -> None:
    rng = np.random.default_rng(7)
    for _ in range(500):
        sims = rng.uniform(-1, 1, size=int(rng.integers(0, 120)))
        tau = float(rng.uniform(-0.2, 1.1))
        l_max = int(rng.integers(1, 12))
        plan = plan_merge(sims, tau, l_max)
        if sum(plan.lengths) != sims.size + 1 or max(plan.lengths) > l_max:
            raise FlexrateError("plan invariant violated")


def _check_bitstream_roundtrip() -> None:
    rng = np.random.default_rng(11)
    for _ in range(200):
        count = int(rng.integers(0, 40))
        n_q = int(rng.integers(1, 9))
        lengths = rng.integers(1, 9, size=count)
        ts = TokenStream(
            semantic_indices=rng.integers(0, 32768, size=count),
            lengths=lengths,
            acoustic_indices=rng.integers(0, 4096, size=(n_q - 1, count)),
            n_q=n_q,
            base_rate_hz=as_rate("25/2"),
            source_frame_count=int(lengths.sum()),
            fsq_dims=5,
            fsq_levels=8,
            rvq_size=4096,
        )
        if unpack(pack(ts, 1234)) != ts:
            raise FlexrateError("bitstream roundtrip mismatch")


def cmd_check(args: argparse.Namespace) -> int:
    del args
    checks = [
        ("fsq-index-bijection", _check_fsq_bijection),
        ("merge-roundtrip", _check_merge_roundtrip),
        ("plan-invariants", _check_plan_invariants),
        ("bitstream-roundtrip", _check_bitstream_roundtrip),
    ]
    failures = 0
    for name, fn in checks:
        try:
            fn()
        except Exception as exc:
            failures += 1
            print(f"FAIL {name}: {exc}")
        else:
            print(f"ok {name}")
    return EXIT_OK if failures == 0 else EXIT_ERROR


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flexrate",
        description="Dynamic frame rate audio token codec toolkit.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=(
            f"flexrate {__version__} "
            f"(FLXF {FLXF_VERSION}, FLXQ {FLXQ_VERSION}, FLXC {FLXC_VERSION})"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit FSQ and RVQ codecs, write an FLXQ file")
    fit.add_argument("--semantic", type=Path, nargs="+", required=True)
    fit.add_argument("--acoustic", type=Path, nargs="+", required=True)
    fit.add_argument("--out", type=Path, required=True)
    fit.add_argument("--fsq-dims", type=int, default=5)
    fit.add_argument("--fsq-levels", type=int, default=8)
    fit.add_argument("--rvq-layers", type=int, default=7)
    fit.add_argument("--rvq-size", type=int, default=4096)
    fit.add_argument("--iters", type=int, default=20)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--tau", type=float, default=1.0,
                     help="merge threshold used while collecting training vectors")
    fit.add_argument("--l-max", type=int, default=8)
    fit.set_defaults(func=cmd_fit)

    enc = sub.add_parser("encode", help="encode a feature pair to an FLXC bitstream")
    enc.add_argument("--semantic", type=Path, required=True)
    enc.add_argument("--acoustic", type=Path, required=True)
    enc.add_argument("--codec", type=Path, required=True)
    enc.add_argument("--out", type=Path, required=True)
    drive = enc.add_mutually_exclusive_group(required=True)
    drive.add_argument("--tau", type=float)
    drive.add_argument("--target-rate", type=str,
                       help="average rate in Hz, accepts num/den form")
    enc.add_argument("--tol", type=float, default=0.3,
                     help="rate tolerance when --target-rate drives encoding")
    enc.add_argument("--n-q", type=int, default=8)
    enc.add_argument("--l-max", type=int, default=8)
    enc.add_argument("--refiner", choices=REFINER_MODES, default="identity")
    enc.add_argument("--window", type=int, default=8)
    enc.set_defaults(func=cmd_encode)

    dec = sub.add_parser("decode", help="decode an FLXC bitstream to an FLXF file")
    dec.add_argument("--bitstream", type=Path, required=True)
    dec.add_argument("--codec", type=Path, required=True)
    dec.add_argument("--out", type=Path, required=True)
    dec.add_argument("--refiner", choices=REFINER_MODES, default="identity")
    dec.add_argument("--window", type=int, default=8)
    dec.set_defaults(func=cmd_decode)

    sweep = sub.add_parser("sweep", help="rate curve over a tau grid, plan only")
    sweep.add_argument("--input", type=Path, required=True)
    sweep.add_argument("--taus", type=str, required=True,
                       help="comma-separated thresholds, e.g. 0.7,0.8,0.9,1.0")
    sweep.add_argument("--l-max", type=int, default=8)
    sweep.add_argument("--n-q", type=int, default=8)
    sweep.add_argument("--out", type=Path)
    sweep.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="per-frame merge report from a bitstream")
    rep.add_argument("--bitstream", type=Path, required=True)
    rep.add_argument("--annotations", type=Path,
                     help="text file of 'start_s end_s label' lines")
    rep.add_argument("--out", type=Path)
    rep.set_defaults(func=cmd_report)

    synth = sub.add_parser("synth", help="write a synthetic FLXF fixture")
    synth.add_argument("--kind", choices=("piecewise", "walk"), required=True)
    synth.add_argument("--out", type=Path, required=True)
    synth.add_argument("--dim", type=int, default=16)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--rate", type=str, default="25/2")
    synth.add_argument("--stream", choices=(SEMANTIC, ACOUSTIC), default=SEMANTIC)
    synth.add_argument("--segments", type=int, default=60)
    synth.add_argument("--seg-min", type=int, default=1)
    synth.add_argument("--seg-max", type=int, default=8)
    synth.add_argument("--frames", type=int, default=500)
    synth.add_argument("--step", type=float, default=0.35)
    synth.set_defaults(func=cmd_synth)

    check = sub.add_parser("check", help="run built-in roundtrip self-tests")
    check.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InsufficientDataError as exc:
        print(f"flexrate: insufficient data: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT_DATA
    except CodecMismatchError as exc:
        print(f"flexrate: codec mismatch: {exc}", file=sys.stderr)
        return EXIT_CODEC_MISMATCH
    except FlexrateError as exc:
        print(f"flexrate: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"flexrate: i/o error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
