#!/usr/bin/env python3
"""Three feature streams from one image, plus a text embedding."""

import numpy as np

from copyforge import SyntheticEmbedder, checkerboard, cosine, random_image

rng = np.random.default_rng(0)

backend = SyntheticEmbedder(d=64, seed=0)
print("backend:", backend.backend_id)
print("image embedding dim:", backend.d, " text dim:", backend.text_dim)

img = checkerboard(32, 32, cell=4)
triple = backend.embed_image(img)
print("streams:", triple.vis.shape, triple.clip.shape, triple.tex.shape, triple.vis.dtype)

# the three streams respond differently to the same picture
print("vis/clip cosine:", round(cosine(triple.vis, triple.clip), 4))
print("vis/tex  cosine:", round(cosine(triple.vis, triple.tex), 4))

# a second, unrelated image lands far away in every stream
other = random_image(rng, 32, 32)
other_triple = backend.embed_image(other)
for name in ("vis", "clip", "tex"):
    s = cosine(getattr(triple, name), getattr(other_triple, name))
    print(f"{name} cosine, checker vs random: {s:+.4f}")

# embeddings are deterministic in the pixels, so re-embedding is exact
again = backend.embed_image(img)
print("re-embed bitwise equal:", bool(np.array_equal(triple.vis, again.vis)))

# text goes through the same backend
cap = backend.embed_text("a dog in a park")
print("caption embedding:", cap.vec.shape)
print("caption vs itself:", round(cosine(cap.vec, backend.embed_text("a dog in a park").vec), 6))
print("caption vs other text:", round(cosine(cap.vec, backend.embed_text("a red car").vec), 4))
