#!/usr/bin/env python3
"""Gallery indexing, top-k retrieval, copy rate, persistence, and the SSIM baseline."""

import tempfile
from pathlib import Path

import numpy as np

from copyforge import (
    DecisionConfig,
    FusionConfig,
    PerturbationSpec,
    SyntheticEmbedder,
    apply,
    build_fuser,
    build_index,
    copy_rate,
    load_index,
    random_image,
    save_index,
    ssim,
    top_k,
)

rng = np.random.default_rng(9)
backend = SyntheticEmbedder(d=64, seed=0)
fuser = build_fuser(FusionConfig(d_model=128, num_heads=4, seed=0), input_dim=backend.d)

gallery = [(f"g{i:02d}", random_image(rng, 32, 32)) for i in range(20)]
index, skipped = build_index(gallery, backend, fuser)
print("indexed:", len(index.entries), " skipped:", skipped)

# a noisy copy of g05 should come back first
query = apply(gallery[5][1], PerturbationSpec("gaussian_noise", {"sigma": 0.01}, seed=2))
for entry_id, score in top_k(query, index, backend, fuser, k=3):
    print(f"  {entry_id}  {score:.4f}")

# copy rate over a mixed query batch: 3 duplicates, 3 fresh images.
# synthetic embeddings crowd near cosine 1, so gate with a threshold
# calibrated for this backend.
queries = [(f"dup{i}", gallery[i][1]) for i in range(3)]
queries += [(f"new{i}", random_image(rng, 32, 32)) for i in range(3)]
result = copy_rate(queries, index, backend, fuser, DecisionConfig(tau1=0.9999))
print("copy rate:", result.rate)
for v in result.verdicts:
    print(f"  {v['query']:5s} best={v['match']} s_fus={v['s_fus']:.4f} copy={v['is_copy']}")

# the index round-trips through disk, guarded by the fuser digest
outdir = Path(tempfile.mkdtemp()) / "index"
save_index(index, outdir)
loaded = load_index(outdir, expected_digest=index.fuser_digest)
print("reloaded ids match:", [e.entry_id for e in loaded.entries] == [e.entry_id for e in index.entries])
print("reloaded rank-1:", top_k(query, loaded, backend, fuser, k=1)[0][0])

# pixel-space baseline for comparison
a = gallery[5][1]
print("ssim self:     ", ssim(a, a))
print("ssim vs noisy: ", round(ssim(a, query), 4))
print("ssim unrelated:", round(ssim(a, gallery[6][1]), 4))
