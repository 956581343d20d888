import json

import numpy as np
import pytest
from numpy.random import default_rng

from copyforge import (ConfigurationError, DataError, DecisionConfig,
                       IntegrityError, PerturbationSpec, ShapeMismatchError,
                       StaleIndexError, apply, build_index, copy_rate,
                       cosine, evaluate_manifest, get_baseline, load_index,
                       load_manifest, register_baseline, save_index, ssim,
                       top_k)
from copyforge.gallery import BASELINES, rank_entries
from copyforge.images import random_image, save_image, solid


@pytest.fixture
def gallery5(backend16, fuser32):
    items = [(f"img{i}", random_image(default_rng(i), 16, 16))
             for i in range(5)]
    index, errors = build_index(items, backend16, fuser32)
    assert errors == []
    return items, index


class TestBuildIndex:
    def test_five_images_five_unit_entries(self, gallery5):
        _, index = gallery5
        assert len(index) == 5
        for entry in index.entries:
            assert abs(np.linalg.norm(entry.fused.vec) - 1.0) <= 1e-9

    def test_duplicate_ids_rejected(self, backend16, fuser32):
        img = random_image(default_rng(0), 16, 16)
        with pytest.raises(DataError, match="dup"):
            build_index([("dup", img), ("dup", img)], backend16, fuser32)

    def test_unreadable_item_collected_not_fatal(self, backend16, fuser32,
                                                 tmp_path):
        items = [("ok", random_image(default_rng(0), 16, 16)),
                 ("gone", str(tmp_path / "missing.npy"))]
        index, errors = build_index(items, backend16, fuser32)
        assert len(index) == 1
        assert len(errors) == 1 and "gone" in errors[0]

    def test_all_failures_fatal(self, backend16, fuser32, tmp_path):
        with pytest.raises(DataError):
            build_index([("gone", str(tmp_path / "missing.npy"))],
                        backend16, fuser32)

    def test_empty_items_rejected(self, backend16, fuser32):
        with pytest.raises(DataError):
            build_index([], backend16, fuser32)

    def test_path_items_load(self, backend16, fuser32, tmp_path):
        path = tmp_path / "img.npy"
        save_image(random_image(default_rng(3), 16, 16), path)
        index, errors = build_index([("disk", str(path))], backend16, fuser32)
        assert errors == [] and index.entries[0].source == str(path)


class TestTopK:
    def test_identical_query_ranks_first_at_one(self, gallery5, backend16,
                                                 fuser32):
        items, index = gallery5
        ranked = top_k(items[2][1], index, backend16, fuser32, k=3)
        assert ranked[0][0] == "img2"
        assert ranked[0][1] == pytest.approx(1.0, abs=1e-9)

    def test_k_caps_at_gallery_size(self, gallery5, backend16, fuser32):
        items, index = gallery5
        ranked = top_k(items[0][1], index, backend16, fuser32, k=50)
        assert len(ranked) == 5

    def test_k_below_one_rejected(self, gallery5, backend16, fuser32):
        items, index = gallery5
        with pytest.raises(ConfigurationError):
            top_k(items[0][1], index, backend16, fuser32, k=0)

    def test_matches_brute_force(self, backend16, fuser32):
        items = [(f"g{i}", random_image(default_rng(100 + i), 16, 16))
                 for i in range(20)]
        index, _ = build_index(items, backend16, fuser32)
        for q in range(10):
            query = random_image(default_rng(500 + q), 16, 16)
            fused_q = fuser32.fuse(backend16.embed_image(query)).vec
            expected = sorted(
                ((e.entry_id, cosine(fused_q, e.fused.vec))
                 for e in index.entries),
                key=lambda pair: (-pair[1], pair[0]))[:7]
            assert top_k(query, index, backend16, fuser32, k=7) == expected

    def test_exact_ties_order_by_id(self, backend16, fuser32):
        img = random_image(default_rng(0), 16, 16)
        index, _ = build_index([("zz", img), ("aa", img)], backend16, fuser32)
        ranked = rank_entries(index.entries[0].fused.vec, index, k=2)
        assert [r[0] for r in ranked] == ["aa", "zz"]


class TestPersistence:
    def test_round_trip(self, gallery5, tmp_path):
        _, index = gallery5
        save_index(index, tmp_path / "idx")
        loaded = load_index(tmp_path / "idx")
        assert [e.entry_id for e in loaded.entries] == \
            [e.entry_id for e in index.entries]
        assert loaded.fuser_digest == index.fuser_digest
        for orig, back in zip(index.entries, loaded.entries):
            # fused vectors round-trip through float32 records
            assert np.allclose(orig.fused.vec, back.fused.vec, atol=1e-6)
            assert cosine(orig.fused.vec, back.fused.vec) > 1 - 1e-9

    def test_loaded_index_ranks_like_original(self, gallery5, backend16,
                                              fuser32, tmp_path):
        items, index = gallery5
        save_index(index, tmp_path / "idx")
        loaded = load_index(tmp_path / "idx")
        fresh = top_k(items[1][1], index, backend16, fuser32, k=5)
        reloaded = top_k(items[1][1], loaded, backend16, fuser32, k=5)
        assert [r[0] for r in fresh] == [r[0] for r in reloaded]

    def test_matching_digest_accepted(self, gallery5, tmp_path):
        _, index = gallery5
        save_index(index, tmp_path / "idx")
        loaded = load_index(tmp_path / "idx",
                            expected_digest=index.fuser_digest)
        assert len(loaded) == 5

    def test_stale_digest_rejected_with_hint(self, gallery5, tmp_path):
        _, index = gallery5
        save_index(index, tmp_path / "idx")
        with pytest.raises(StaleIndexError, match="rebuild"):
            load_index(tmp_path / "idx", expected_digest="0" * 64)

    def test_missing_header(self, tmp_path):
        with pytest.raises(DataError, match="header"):
            load_index(tmp_path)

    def test_truncated_records_detected(self, gallery5, tmp_path):
        _, index = gallery5
        save_index(index, tmp_path / "idx")
        blob_path = tmp_path / "idx" / "fused.bin"
        blob_path.write_bytes(blob_path.read_bytes()[:-5])
        with pytest.raises(IntegrityError):
            load_index(tmp_path / "idx")


class TestCopyRate:
    def test_exact_duplicates_rate_one(self, gallery5, backend16, fuser32,
                                       default_config):
        items, index = gallery5
        queries = [(f"q{i}", image) for i, (_, image) in enumerate(items)]
        result = copy_rate(queries, index, backend16, fuser32, default_config)
        assert result.rate == 1.0
        assert all(v["is_copy"] for v in result.verdicts)

    def test_impossible_threshold_rate_zero(self, backend16, fuser32):
        items = [(f"g{i}", random_image(default_rng(i), 16, 16))
                 for i in range(3)]
        index, _ = build_index(items, backend16, fuser32)
        queries = [("q0", random_image(default_rng(77), 16, 16))]
        config = DecisionConfig(tau1=0.9999999999)
        result = copy_rate(queries, index, backend16, fuser32, config)
        assert result.rate == 0.0

    def test_rate_monotone_in_tau(self, gallery5, backend16, fuser32):
        items, index = gallery5
        noisy = [(f"n{i}",
                  apply(image, PerturbationSpec(kind="gaussian_noise", seed=i)))
                 for i, (_, image) in enumerate(items)]
        queries = noisy + [("far", random_image(default_rng(999), 16, 16))]
        rates = []
        for tau in np.linspace(0.5, 0.9999999999, 10):
            config = DecisionConfig(tau1=float(tau))
            rates.append(copy_rate(queries, index, backend16, fuser32,
                                   config).rate)
        assert all(a >= b for a, b in zip(rates, rates[1:]))

    def test_verdict_fields(self, gallery5, backend16, fuser32, default_config):
        items, index = gallery5
        result = copy_rate([("q", items[0][1])], index, backend16, fuser32,
                           default_config)
        verdict = result.verdicts[0]
        assert set(verdict) == {"query", "match", "s_fus", "is_copy"}
        assert verdict["match"] == "img0"

    def test_no_queries_rejected(self, gallery5, backend16, fuser32,
                                 default_config):
        _, index = gallery5
        with pytest.raises(DataError):
            copy_rate([], index, backend16, fuser32, default_config)


def write_manifest(tmp_path, rows):
    for name, image in {"a.npy": random_image(default_rng(0), 16, 16),
                        "b.npy": random_image(default_rng(1), 16, 16)}.items():
        save_image(image, tmp_path / name)
    path = tmp_path / "pairs.jsonl"
    path.write_text("".join(json.dumps(row) + "\n" for row in rows))
    return path


class TestManifest:
    def test_load_resolves_relative_paths(self, tmp_path):
        path = write_manifest(tmp_path, [
            {"query": "a.npy", "reference": "a.npy", "label": "retrieve"},
            {"query": "a.npy", "reference": "b.npy", "label": "noncopy"},
        ])
        manifest = load_manifest(path)
        assert len(manifest.pairs) == 2
        assert manifest.pairs[0].query == str(tmp_path / "a.npy")

    def test_unknown_label_rejected(self, tmp_path):
        path = write_manifest(tmp_path, [
            {"query": "a.npy", "reference": "b.npy", "label": "sorta"}])
        with pytest.raises(DataError, match="sorta"):
            load_manifest(path)

    def test_missing_image_named(self, tmp_path):
        path = write_manifest(tmp_path, [
            {"query": "c.npy", "reference": "b.npy", "label": "noncopy"}])
        with pytest.raises(DataError, match="c.npy"):
            load_manifest(path)

    def test_missing_field_names_line(self, tmp_path):
        path = write_manifest(tmp_path, [
            {"query": "a.npy", "reference": "a.npy", "label": "retrieve"},
            {"query": "a.npy", "label": "retrieve"}])
        with pytest.raises(DataError, match=":2"):
            load_manifest(path)

    def test_empty_manifest_rejected(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        path.write_text("")
        with pytest.raises(DataError):
            load_manifest(path)

    def test_evaluate_separable_pairs(self, backend16, fuser32, default_config,
                                      tmp_path):
        path = write_manifest(tmp_path, [
            {"query": "a.npy", "reference": "a.npy", "label": "retrieve"},
            {"query": "b.npy", "reference": "b.npy", "label": "retrieve"},
        ])
        report = evaluate_manifest(load_manifest(path), backend16, fuser32,
                                   default_config)
        assert report.accuracy == 1.0 and report.recall == 1.0
        assert report.tp == 2 and report.fn == 0
        assert report.confusion["retrieve"]["retrieve"] == 2
        assert report.copy_rate == 1.0

    def test_evaluate_metric_consistency(self, backend16, fuser32,
                                         default_config, tmp_path):
        path = write_manifest(tmp_path, [
            {"query": "a.npy", "reference": "a.npy", "label": "retrieve"},
            {"query": "a.npy", "reference": "b.npy", "label": "noncopy"},
            {"query": "b.npy", "reference": "a.npy", "label": "noncopy"},
        ])
        report = evaluate_manifest(load_manifest(path), backend16, fuser32,
                                   default_config)
        total = report.tp + report.fp + report.tn + report.fn
        assert total == 3
        assert report.accuracy == (report.tp + report.tn) / total
        json.dumps(report.to_json())


def naive_ssim(a, b, window=8):
    """Direct per-window double loop; slow but unarguable."""
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    h, w, channels = a.shape
    per_channel = []
    for c in range(channels):
        scores = []
        for i in range(h - window + 1):
            for j in range(w - window + 1):
                x = a[i:i + window, j:j + window, c]
                y = b[i:i + window, j:j + window, c]
                mx, my = x.mean(), y.mean()
                vx, vy = x.var(), y.var()
                cov = ((x - mx) * (y - my)).mean()
                scores.append(((2 * mx * my + c1) * (2 * cov + c2))
                              / ((mx * mx + my * my + c1) * (vx + vy + c2)))
        per_channel.append(float(np.mean(scores)))
    return float(np.mean(per_channel))


class TestSsim:
    def test_self_similarity_is_one(self, checker):
        assert ssim(checker, checker) == 1.0

    def test_constant_pair(self):
        assert ssim(solid(0.3), solid(0.3)) == pytest.approx(1.0, abs=1e-12)

    def test_symmetry(self, rng):
        for _ in range(5):
            a = random_image(rng, 16, 16)
            b = random_image(rng, 16, 16)
            assert abs(ssim(a, b) - ssim(b, a)) <= 1e-12

    def test_matches_naive_oracle(self, rng):
        for _ in range(6):
            a = random_image(rng, 32, 32)
            b = random_image(rng, 32, 32)
            assert abs(ssim(a, b) - naive_ssim(a.pixels, b.pixels)) <= 1e-9

    def test_oracle_other_window(self, rng):
        a = random_image(rng, 16, 16)
        b = random_image(rng, 16, 16)
        assert abs(ssim(a, b, window=4)
                   - naive_ssim(a.pixels, b.pixels, window=4)) <= 1e-9

    def test_distinct_images_below_one(self, rng):
        a = random_image(rng, 16, 16)
        b = random_image(rng, 16, 16)
        assert ssim(a, b) < 1.0

    def test_shape_mismatch(self, checker):
        with pytest.raises(ShapeMismatchError):
            ssim(checker, random_image(default_rng(0), 8, 8))

    def test_oversized_window(self, checker):
        with pytest.raises(ConfigurationError):
            ssim(checker, checker, window=17)


class TestBaselines:
    def test_ssim_slot_is_builtin(self):
        assert get_baseline("ssim") is ssim

    def test_unknown_name_rejected(self):
        with pytest.raises(ConfigurationError):
            get_baseline("clipscore")

    def test_empty_slot_explains(self):
        with pytest.raises(ConfigurationError, match="adapter"):
            get_baseline("lpips")

    def test_register_adapter(self):
        def fake(a, b):
            return 0.5
        register_baseline("orb", fake)
        try:
            assert get_baseline("orb") is fake
        finally:
            BASELINES["orb"] = None

    def test_register_unknown_slot_rejected(self):
        with pytest.raises(ConfigurationError):
            register_baseline("vgg", lambda a, b: 0.0)
