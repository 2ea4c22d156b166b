"""Full pipeline: fit codecs, encode a stream pair, pack to disk, read back.

Everything that crosses a process boundary here goes through the three
container formats. FLXF carries raw feature matrices, FLXQ carries fitted
quantizer parameters, FLXC carries the packed token stream.
"""

import tempfile
from pathlib import Path

import numpy as np

from flexrate import (
    EncodeOptions,
    FeatureSequence,
    adjacent_similarity,
    apply_merge,
    average_frame_rate,
    decode,
    encode,
    fsq_fit,
    fsq_quantize_frames,
    load_bitstream,
    load_codecs,
    load_features,
    pack,
    plan_merge,
    rvq_fit,
    save_bitstream,
    save_codecs,
    save_features,
    synth_piecewise_constant,
    unpack,
)

work = Path(tempfile.mkdtemp(prefix="flexrate_demo_"))
rng = np.random.default_rng(21)

sem = synth_piecewise_constant(60, (1, 8), dim=12, seed=5)
ac = FeatureSequence(
    (sem.frames + rng.normal(0.0, 0.05, sem.frames.shape)).astype(np.float32),
    sem.frame_rate_hz,
    "acoustic",
)
save_features(sem, work / "utt.sem.flxf")
save_features(ac, work / "utt.ac.flxf")

# fit both quantizers on the merged training view
plan = plan_merge(adjacent_similarity(sem), tau=0.9)
msem = apply_merge(sem, plan)
mac = apply_merge(ac, plan)
fsq = fsq_fit(msem.vectors, latent_dim=4, levels=6)
_, _, recon = fsq_quantize_frames(fsq, msem.vectors)
rvq = rvq_fit(mac.vectors - recon, num_layers=4, codebook_size=16, iters=15, seed=1)
fingerprint = save_codecs(fsq, rvq, work / "codecs.flxq")
print(f"codecs saved, fingerprint {fingerprint:#018x}")

sem_in = load_features(work / "utt.sem.flxf")
ac_in = load_features(work / "utt.ac.flxf")
ts = encode(sem_in, ac_in, fsq, rvq, EncodeOptions(tau=0.9, n_q=5))
print(f"{ts.source_frame_count} source frames -> {ts.merged_frame_count} tokens,",
      f"avg rate {average_frame_rate(ts):.3f} Hz")

bs = pack(ts, fingerprint=fingerprint)
save_bitstream(bs, work / "utt.flxc")
size = (work / "utt.flxc").stat().st_size
print(f"bitstream: {size} bytes ({size - 42} payload)")

fsq2, rvq2, fp2 = load_codecs(work / "codecs.flxq")
ts2 = unpack(load_bitstream(work / "utt.flxc"))
out = decode(ts2, fsq2, rvq2)

assert ts2 == ts
err = float(np.mean((out.frames - sem_in.frames) ** 2))
print(f"decoded {out.frames.shape[0]} frames at {out.frame_rate_hz} Hz, MSE vs input {err:.5f}")

# re-encoding with the same flags gives identical bytes
bs2 = pack(encode(sem_in, ac_in, fsq2, rvq2, EncodeOptions(tau=0.9, n_q=5)), fingerprint=fp2)
print("re-encode byte-identical:", bytes(bs2) == bytes(bs))
