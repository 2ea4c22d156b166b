"""Fit and inspect the two quantizers.

The semantic stream goes through finite scalar quantization: project each
frame onto a small number of directions, clamp to percentile bounds, round
to one of L levels per dimension, and fold the level tuple into a single
integer index. The acoustic stream is coded as a residual against the FSQ
reconstruction by a stack of codebooks, each layer quantizing what the
previous layers left over.
"""

import numpy as np

from flexrate import (
    FeatureSequence,
    adjacent_similarity,
    apply_merge,
    feat_alignment_distance,
    fsq_fit,
    fsq_index_decode,
    fsq_quantize_frames,
    fsq_reconstruct,
    plan_merge,
    residual_layer_mse,
    rvq_decode_frames,
    rvq_encode_frames,
    rvq_fit,
    synth_piecewise_constant,
)

rng = np.random.default_rng(11)

sem = synth_piecewise_constant(120, (1, 8), dim=16, seed=3)
noisy = sem.frames + rng.normal(0.0, 0.05, sem.frames.shape).astype(np.float32)
ac = FeatureSequence(noisy.astype(np.float32), sem.frame_rate_hz, "acoustic")

plan = plan_merge(adjacent_similarity(sem), tau=0.9)
merged_sem = apply_merge(sem, plan)
merged_ac = apply_merge(ac, plan)
print(f"{sem.frames.shape[0]} frames merge to {plan.num_merged} at tau=0.9")

# FSQ: 4 dims of 6 levels gives a 1296 entry index space
fsq = fsq_fit(merged_sem.vectors, latent_dim=4, levels=6)
idx, _, recon = fsq_quantize_frames(fsq, merged_sem.vectors)
print("fsq indices:", idx[:10].tolist(), "...")
print("alignment distance (mean L2):", round(feat_alignment_distance(recon, merged_sem.vectors), 4))

# the index is a base-L digit string, least significant digit first
digits = fsq_index_decode(int(idx[0]), fsq.latent_dim, fsq.levels)
print("index", int(idx[0]), "unfolds to level tuple", digits.tolist())
same = fsq_reconstruct(fsq, idx)
print("reconstruct-from-index matches:", bool(np.array_equal(same, recon)))

# RVQ on the acoustic residual
residuals = merged_ac.vectors - recon
rvq = rvq_fit(residuals, num_layers=5, codebook_size=16, iters=15, seed=1)
codes, approx, left = rvq_encode_frames(rvq, residuals, n_layers=5)
print("rvq codes, one row per layer, one column per frame:")
print(codes[:, :8])

print("per-layer residual MSE (non-increasing):")
for k, mse in enumerate(residual_layer_mse(rvq, residuals), start=1):
    print(f"  after layer {k}: {mse:.6f}")

err = float(np.mean(np.sum((residuals - approx) ** 2, axis=1)))
print("squared residual norm with all 5 layers:", round(err, 6))
print("decode from codes matches encode-side approx:",
      bool(np.array_equal(rvq_decode_frames(rvq, codes), approx)))
print("telescoping holds (approx + leftover == input):",
      bool(np.allclose(approx + left, residuals)))
