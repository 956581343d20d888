import numpy as np
import pytest

from copyforge import (CachingBackend, EmbeddingCache, FeatureTriple,
                       ImageBuffer, IntegrityError, SyntheticEmbedder,
                       content_digest)
from copyforge.cache import decode_record, encode_record


def _triple(rng, d=8):
    return FeatureTriple(vis=rng.normal(size=d).astype(np.float32),
                         clip=rng.normal(size=d).astype(np.float32),
                         tex=rng.normal(size=d).astype(np.float32))


class TestRecordCodec:
    def test_roundtrip_three_streams(self, rng):
        arr = rng.normal(size=(3, 16)).astype(np.float32)
        assert np.array_equal(decode_record(encode_record(arr)), arr)

    def test_roundtrip_single_vector(self, rng):
        vec = rng.normal(size=32).astype(np.float32)
        out = decode_record(encode_record(vec))
        assert out.shape == (1, 32)
        assert np.array_equal(out[0], vec)

    def test_truncated_header_rejected(self):
        with pytest.raises(IntegrityError, match="truncated"):
            decode_record(b"ADM")

    def test_bad_magic_rejected(self, rng):
        blob = encode_record(rng.normal(size=4).astype(np.float32))
        with pytest.raises(IntegrityError, match="magic"):
            decode_record(b"XXXX" + blob[4:], key="entry-k")

    def test_bad_version_rejected(self, rng):
        blob = bytearray(encode_record(rng.normal(size=4).astype(np.float32)))
        blob[4] = 99
        with pytest.raises(IntegrityError, match="version"):
            decode_record(bytes(blob))

    def test_short_payload_rejected(self, rng):
        blob = encode_record(rng.normal(size=4).astype(np.float32))
        with pytest.raises(IntegrityError, match="payload"):
            decode_record(blob[:-4], key="short-one")

    def test_error_names_the_key(self, rng):
        blob = encode_record(rng.normal(size=4).astype(np.float32))
        with pytest.raises(IntegrityError, match="short-one"):
            decode_record(blob[:-4], key="short-one")


class TestContentDigest:
    def test_stable_for_identical_images(self, checker):
        copy = ImageBuffer(pixels=checker.pixels.copy())
        assert content_digest(checker, "b", 8) == content_digest(copy, "b", 8)

    def test_sensitive_to_backend_and_dim(self, checker):
        base = content_digest(checker, "b", 8)
        assert content_digest(checker, "other", 8) != base
        assert content_digest(checker, "b", 16) != base

    def test_sensitive_to_pixels(self, checker, checker_inv):
        assert content_digest(checker, "b", 8) != content_digest(checker_inv, "b", 8)


class TestEmbeddingCache:
    def test_put_get_roundtrip(self, tmp_path, rng):
        cache = EmbeddingCache(tmp_path)
        triple = _triple(rng)
        cache.put("backend-a", "k" * 8, triple)
        back = cache.get("backend-a", "k" * 8)
        assert np.array_equal(back.stack(), triple.stack())

    def test_missing_returns_none(self, tmp_path):
        assert EmbeddingCache(tmp_path).get("backend-a", "nothere") is None

    def test_first_write_wins(self, tmp_path, rng):
        cache = EmbeddingCache(tmp_path)
        first = _triple(rng)
        second = _triple(rng)
        cache.put("backend-a", "samekey", first)
        cache.put("backend-a", "samekey", second)
        assert np.array_equal(cache.get("backend-a", "samekey").stack(),
                              first.stack())

    def test_corrupt_entry_detected(self, tmp_path, rng):
        cache = EmbeddingCache(tmp_path)
        cache.put("backend-a", "victim", _triple(rng))
        path = tmp_path / "backend-a" / "victim.bin"
        path.write_bytes(path.read_bytes()[:-2])
        with pytest.raises(IntegrityError):
            cache.get("backend-a", "victim")


class TestCachingBackend:
    def test_cached_equals_direct(self, tmp_path, checker):
        inner = SyntheticEmbedder(d=8, seed=0)
        caching = CachingBackend(inner, EmbeddingCache(tmp_path))
        direct = inner.embed_image(checker)
        first = caching.embed_image(checker)
        second = caching.embed_image(checker)  # served from disk
        assert np.array_equal(first.stack(), direct.stack())
        assert np.array_equal(second.stack(), direct.stack())

    def test_cache_file_created(self, tmp_path, checker):
        inner = SyntheticEmbedder(d=8, seed=0)
        caching = CachingBackend(inner, EmbeddingCache(tmp_path))
        caching.embed_image(checker)
        files = list((tmp_path / inner.backend_id).glob("*.bin"))
        assert len(files) == 1

    def test_delegates_identity_and_text(self, tmp_path, checker):
        inner = SyntheticEmbedder(d=8, seed=0)
        caching = CachingBackend(inner, EmbeddingCache(tmp_path))
        assert caching.backend_id == inner.backend_id
        assert caching.parallel_safe == inner.parallel_safe
        assert np.array_equal(caching.embed_text("hi").vec,
                              inner.embed_text("hi").vec)
        assert np.array_equal(caching.embed_image_global(checker),
                              inner.embed_image_global(checker))
