"""Frame rate and bitrate control.

Shows the tau to rate trade-off on a random walk, solving for the tau that
hits a requested average rate, bitrate accounting under the 3+15+12 bit
frame layout, and the merge pattern report with interval labels.
"""

import json

import numpy as np

from flexrate import (
    DEFAULT_BIT_LAYOUT,
    EncodeOptions,
    FeatureSequence,
    adjacent_similarity,
    apply_merge,
    average_frame_rate,
    bitrate_kbps,
    encode,
    fsq_fit,
    fsq_quantize_frames,
    merge_report,
    plan_merge,
    rvq_fit,
    stride_frame_rate,
    sweep_tau,
    synth_random_walk,
    tau_for_target_rate,
)

walk = synth_random_walk(600, dim=24, step_scale=0.35, seed=2)

print("tau sweep on a 48 s random walk:")
curve = sweep_tau(walk, np.linspace(0.5, 1.0, 11))
for pt in curve.points:
    print(f"  tau={pt.tau:.2f}  rate={pt.avg_rate_hz:6.3f} Hz  payload={pt.payload_kbps:.4f} kbps")

target = 6.25
tau = tau_for_target_rate(walk, target, tol_hz=0.3)
plan = plan_merge(adjacent_similarity(walk), tau=tau)
got = apply_merge(walk, plan).average_frame_rate_hz
print(f"target {target} Hz solved by tau={tau:.4f} (achieved {got:.3f} Hz)")

# bitrate accounting: 3 length bits + 15 semantic bits per frame, and
# 12 bits per extra acoustic layer, at a few average rates
print("layout:", DEFAULT_BIT_LAYOUT)
for rate in (12.5, 25 / 3, 6.25):
    sem_kbps = rate * DEFAULT_BIT_LAYOUT.sem_bits / 1000
    total_kbps = rate * DEFAULT_BIT_LAYOUT.bits_per_frame(n_q=8) / 1000
    print(f"  {rate:6.3f} Hz -> semantic {sem_kbps:.4f} kbps, total {total_kbps:.4f} kbps")

# the same numbers fall out of a real encoded stream at that average rate
rng = np.random.default_rng(4)
sem = synth_random_walk(600, dim=24, step_scale=0.35, seed=2)
ac = FeatureSequence(
    (sem.frames + rng.normal(0, 0.05, sem.frames.shape)).astype(np.float32),
    sem.frame_rate_hz,
    "acoustic",
)
msem = apply_merge(sem, plan)
fsq = fsq_fit(msem.vectors, 4, 6)
_, _, recon = fsq_quantize_frames(fsq, msem.vectors)
rvq = rvq_fit(apply_merge(ac, plan).vectors - recon, 7, 64, 10, seed=1)
ts = encode(sem, ac, fsq, rvq, EncodeOptions(tau=tau))
sem_kbps, total_kbps = bitrate_kbps(ts, DEFAULT_BIT_LAYOUT)
print(f"encoded stream: {average_frame_rate(ts):.3f} Hz, "
      f"semantic {sem_kbps:.4f} kbps, total {total_kbps:.4f} kbps")

# fixed-rate tokenizers get their frame rate from the conv stride product
print("stride products at 16 kHz:")
for strides in ([4, 4, 5, 8, 2], [4, 5, 6, 8, 2], [4, 5, 8, 8, 2]):
    print(f"  {strides} -> {stride_frame_rate(16000, strides)} Hz")

# merge report: one JSON record per merged frame plus a summary line
walk_s = synth_random_walk(50, dim=24, step_scale=0.35, seed=8)
walk_a = FeatureSequence(walk_s.frames, walk_s.frame_rate_hz, "acoustic")
short = encode(walk_s, walk_a, fsq, rvq, EncodeOptions(tau=tau))
report = merge_report(short, annotations=[(0.0, 2.0, "intro"), (2.0, 4.0, "body")])
lines = report.splitlines()
for line in lines[:3]:
    print(json.loads(line))
print("...")
print(json.loads(lines[-1]))
