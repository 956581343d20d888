#!/usr/bin/env python3
"""Fuse the three streams into one unit vector and compare images with it."""

import numpy as np

from copyforge import (
    FusionConfig,
    PerturbationSpec,
    SyntheticEmbedder,
    apply,
    build_fuser,
    checkerboard,
    cosine,
    fuse,
    fused_similarity,
    fuser_digest,
    random_image,
)

rng = np.random.default_rng(7)

backend = SyntheticEmbedder(d=64, seed=0)
config = FusionConfig(d_model=128, num_layers=2, num_heads=4, seed=0)
fuser = build_fuser(config, input_dim=backend.d)

img = checkerboard(32, 32, cell=4)
fused = fuse(fuser, backend.embed_image(img))
print("fused dim:", fused.vec.shape[0])
print("fused norm:", float(np.linalg.norm(fused.vec)))

# weights come from the seed alone, so a fresh fuser reproduces the vector
fuser2 = build_fuser(FusionConfig(d_model=128, num_layers=2, num_heads=4, seed=0), input_dim=backend.d)
fused2 = fuse(fuser2, backend.embed_image(img))
print("rebuild bitwise equal:", bool(np.array_equal(fused.vec, fused2.vec)))

# the digest pins config + input dim; change either and it moves
print("digest:       ", fuser_digest(config, backend.d)[:16])
print("digest, seed 1:", fuser_digest(FusionConfig(d_model=128, num_layers=2, num_heads=4, seed=1), backend.d)[:16])

# fused cosine drops as the pair drifts apart
blur = apply(img, PerturbationSpec("gaussian_blur", {"sigma": 0.5}, seed=0))
other = random_image(rng, 32, 32)

print("self similarity:     ", round(fused_similarity(fuser, img, img, backend=backend), 6))
print("after light blur:    ", round(fused_similarity(fuser, img, blur, backend=backend), 6))
print("unrelated image:     ", round(fused_similarity(fuser, img, other, backend=backend), 6))

# same ordering holds on raw triples fed straight to the fuser
ta = backend.embed_image(img)
tb = backend.embed_image(blur)
print("triple call agrees:  ", round(cosine(fuse(fuser, ta).vec, fuse(fuser, tb).vec), 6))
