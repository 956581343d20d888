import numpy as np
import pytest

from copyforge import (ConfigurationError, DataError, FeatureTriple,
                       ImageBuffer, ShapeMismatchError, SyntheticEmbedder,
                       TextEmbedding, UndefinedSimilarityError, cosine,
                       checkerboard, solid)
from copyforge.features import synthetic_embed


class TestImageBuffer:
    def test_valid_image(self, checker):
        assert checker.pixels.shape == (16, 16, 3)
        assert checker.height == 16 and checker.width == 16

    def test_rejects_2d(self):
        with pytest.raises(DataError):
            ImageBuffer(pixels=np.zeros((16, 16)))

    def test_rejects_small_side(self):
        with pytest.raises(DataError):
            ImageBuffer(pixels=np.zeros((7, 16, 3)))

    def test_rejects_out_of_range(self):
        px = np.zeros((8, 8, 3))
        px[0, 0, 0] = 1.5
        with pytest.raises(DataError):
            ImageBuffer(pixels=px)

    def test_rejects_nonfinite(self):
        px = np.zeros((8, 8, 3))
        px[0, 0, 0] = np.nan
        with pytest.raises(DataError):
            ImageBuffer(pixels=px)

    def test_pixels_read_only(self, checker):
        with pytest.raises(ValueError):
            checker.pixels[0, 0, 0] = 0.3

    def test_content_bytes_roundtrip(self, checker):
        back = np.frombuffer(checker.content_bytes(), dtype="<f8")
        assert np.array_equal(back.reshape(checker.pixels.shape), checker.pixels)


class TestFeatureTriple:
    def test_dim_and_stack(self):
        t = FeatureTriple(vis=np.ones(4, dtype=np.float32),
                          clip=np.zeros(4, dtype=np.float32),
                          tex=np.full(4, 0.5, dtype=np.float32))
        assert t.dim == 4
        assert t.stack().shape == (3, 4)

    def test_rejects_unequal_lengths(self):
        with pytest.raises(ShapeMismatchError):
            FeatureTriple(vis=np.ones(4, dtype=np.float32),
                          clip=np.ones(5, dtype=np.float32),
                          tex=np.ones(4, dtype=np.float32))

    def test_rejects_nonfinite(self):
        bad = np.ones(4, dtype=np.float32)
        bad[1] = np.inf
        with pytest.raises(DataError):
            FeatureTriple(vis=bad, clip=np.ones(4, dtype=np.float32),
                          tex=np.ones(4, dtype=np.float32))

    def test_stored_as_float32(self):
        t = FeatureTriple(vis=np.ones(4), clip=np.zeros(4), tex=np.ones(4))
        assert t.vis.dtype == np.float32


class TestTextEmbedding:
    def test_rejects_empty_text(self):
        with pytest.raises(DataError):
            TextEmbedding(vec=np.ones(4), source_text="")


class TestCosine:
    def test_identical_is_one(self):
        # norm(v)**2 rounds separately from dot(v, v); allow the last ulp
        v = np.array([0.3, -0.2, 0.9])
        assert cosine(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_opposite_is_minus_one(self):
        v = np.array([1.0, 2.0, 3.0])
        assert cosine(v, -v) == pytest.approx(-1.0, abs=1e-12)

    def test_orthogonal_is_zero(self):
        assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_zero_vector_rejected(self):
        with pytest.raises(UndefinedSimilarityError):
            cosine(np.zeros(3), np.ones(3))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            cosine(np.ones(3), np.ones(4))

    def test_clipped_into_range(self, rng):
        for _ in range(50):
            a = rng.normal(size=8)
            b = rng.normal(size=8)
            assert -1.0 <= cosine(a, b) <= 1.0


class TestSyntheticEmbed:
    def test_deterministic(self, checker):
        a = synthetic_embed(checker, d=16, seed=0)
        b = synthetic_embed(checker, d=16, seed=0)
        assert np.array_equal(a.vis, b.vis)
        assert np.array_equal(a.clip, b.clip)
        assert np.array_equal(a.tex, b.tex)

    def test_identical_images_identical_triples(self, checker):
        copy = ImageBuffer(pixels=checker.pixels.copy())
        a = synthetic_embed(checker, d=16, seed=0)
        b = synthetic_embed(copy, d=16, seed=0)
        assert np.array_equal(a.stack(), b.stack())

    def test_seed_changes_result(self, checker):
        a = synthetic_embed(checker, d=16, seed=0)
        b = synthetic_embed(checker, d=16, seed=1)
        assert not np.array_equal(a.vis, b.vis)

    def test_different_images_differ(self, checker, rng):
        from copyforge import random_image
        other = random_image(rng, height=16, width=16)
        a = synthetic_embed(checker, d=16, seed=0)
        b = synthetic_embed(other, d=16, seed=0)
        assert not np.array_equal(a.vis, b.vis)

    def test_rejects_tiny_dim(self, checker):
        with pytest.raises(ConfigurationError):
            synthetic_embed(checker, d=3, seed=0)


class TestSyntheticEmbedder:
    def test_backend_id_encodes_parameters(self):
        assert SyntheticEmbedder(d=16, seed=3).backend_id == "synthetic-d16-s3"

    def test_parallel_safe(self, backend16):
        assert backend16.parallel_safe is True

    def test_embed_image_matches_free_function(self, backend16, checker):
        a = backend16.embed_image(checker)
        b = synthetic_embed(checker, d=16, seed=0)
        assert np.array_equal(a.stack(), b.stack())

    def test_embed_text_deterministic(self, backend16):
        a = backend16.embed_text("a dog in the park")
        b = backend16.embed_text("a dog in the park")
        assert np.array_equal(a.vec, b.vec)
        assert a.vec.shape == (16,)
        assert a.source_text == "a dog in the park"

    def test_embed_text_distinguishes_texts(self, backend16):
        a = backend16.embed_text("a dog in the park")
        b = backend16.embed_text("a cat on the mat")
        assert not np.array_equal(a.vec, b.vec)

    def test_text_dim_override(self, checker):
        backend = SyntheticEmbedder(d=16, seed=0, text_dim=8)
        assert backend.embed_text("hello").vec.shape == (8,)

    def test_embed_image_global_shape_and_determinism(self, backend16, checker):
        a = backend16.embed_image_global(checker)
        b = backend16.embed_image_global(checker)
        assert a.shape == (16,)
        assert np.array_equal(a, b)

    def test_global_distinguishes_images(self, backend16, checker):
        a = backend16.embed_image_global(checker)
        b = backend16.embed_image_global(solid(0.25))
        assert not np.array_equal(a, b)


class TestGoldenTriple:
    def test_checker_triple_frozen(self, golden_dir, checker):
        import os
        stored = np.load(os.path.join(golden_dir, "triple_checker_d8.npz"))
        fresh = SyntheticEmbedder(d=8, seed=0).embed_image(checker)
        for name in ("vis", "clip", "tex"):
            np.testing.assert_allclose(getattr(fresh, name), stored[name],
                                       rtol=0, atol=1e-9)
