"""Regenerate the frozen golden fixtures in this directory.

Run only when a deliberate contract change invalidates them:

    python3 tests/golden/regen.py

The committed files are the reference; tests compare fresh computations
against them at tight tolerances to catch accidental numeric drift.
"""

import hashlib
import json
import os

import numpy as np

from copyforge import (FusionConfig, PerturbationSpec, SyntheticEmbedder,
                       build_fuser, checkerboard, random_image)
from copyforge.perturb import apply

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    image = checkerboard(height=16, width=16, cell=2)
    backend = SyntheticEmbedder(d=8, seed=0)
    triple = backend.embed_image(image)
    np.savez(os.path.join(HERE, "triple_checker_d8.npz"),
             vis=triple.vis, clip=triple.clip, tex=triple.tex)

    fuser = build_fuser(FusionConfig(d_model=64, num_layers=1, num_heads=4, seed=0))
    fused = fuser.fuse(triple)
    np.savez(os.path.join(HERE, "fused_checker_d64.npz"), vec=fused.vec)

    other = random_image(np.random.default_rng(12345), height=16, width=16)
    pair_sim = float(np.dot(fused.vec,
                            fuser.fuse(backend.embed_image(other)).vec))

    noisy = apply(image, PerturbationSpec(kind="gaussian_noise",
                                          params={"sigma": 0.1}, seed=0))
    noise_digest = hashlib.sha256(
        np.ascontiguousarray(noisy.pixels).tobytes()).hexdigest()

    with open(os.path.join(HERE, "scalars.json"), "w", encoding="utf-8") as fh:
        json.dump({"fused_pair_checker_vs_random": pair_sim,
                   "gaussian_noise_digest": noise_digest}, fh, indent=2,
                  sort_keys=True)
        fh.write("\n")
    print("golden fixtures written to", HERE)


if __name__ == "__main__":
    main()
