import json

import numpy as np
import pytest

from specdetect.backends import SpectralBackend
from specdetect.detector import (
    DecisionPolicy,
    ScoreRecord,
    classify,
    cosine_similarity,
    records_to_jsonl,
    score_batch,
    score_image,
)
from specdetect.errors import DimMismatch, EmptyManifest, ZeroVector
from specdetect.fixtures import lowpass_filter
from specdetect.imaging import DatasetManifest, PreprocessSpec, load_manifest
from specdetect.perturb import PerturbConfig


class TestCosineSimilarity:
    def test_identical_vectors_exactly_one(self, rng):
        a = rng.standard_normal(771)
        assert cosine_similarity(a, a.copy()) == 1.0

    def test_orthogonal_zero(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_hand_computed_eight_ninths(self):
        assert cosine_similarity([1, 2, 2], [2, 1, 2]) == pytest.approx(8 / 9, abs=1e-15)

    def test_opposite_is_minus_one(self):
        assert cosine_similarity([1.0, 2.0], [-1.0, -2.0]) == pytest.approx(-1.0, abs=1e-15)

    def test_scale_invariance(self, rng):
        a = rng.standard_normal(64)
        b = rng.standard_normal(64)
        base = cosine_similarity(a, b)
        for s, t in [(3.0, 0.5), (1e-6, 1e6), (123.456, 7.89)]:
            assert abs(cosine_similarity(s * a, t * b) - base) <= 1e-12

    def test_zero_vector_raises(self):
        with pytest.raises(ZeroVector):
            cosine_similarity([0.0, 0.0], [1.0, 2.0])
        with pytest.raises(ZeroVector):
            cosine_similarity([1.0, 2.0], [0.0, 0.0])

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            cosine_similarity([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_bounds_clamped(self, rng):
        for _ in range(200):
            a = rng.standard_normal(8)
            b = rng.standard_normal(8)
            s = cosine_similarity(a, b)
            assert -1.0 <= s <= 1.0


class TestScoreImage:
    def test_lambda_zero_scores_exactly_one(self, rng):
        x = rng.uniform(0, 1, (56, 56, 3))
        b = SpectralBackend(56)
        rec = score_image(x, PerturbConfig(lam=0.0), b, image_id="x")
        assert rec.score == 1.0

    def test_deterministic(self, rng):
        x = rng.uniform(0, 1, (56, 56, 3))
        b = SpectralBackend(56)
        cfg = PerturbConfig(seed=11)
        r1 = score_image(x, cfg, b, image_index=4)
        r2 = score_image(x, cfg, b, image_index=4)
        assert r1.score == r2.score

    def test_broadband_scores_strictly_lower_than_lowpass(self, rng):
        # realizes the working hypothesis: genuine high-frequency content
        # responds more to the perturbation
        b = SpectralBackend(56)
        cfg = PerturbConfig(seed=3)
        noise = rng.uniform(0, 1, (56, 56, 3))
        smooth = lowpass_filter(noise, 0.35)
        s_noise = score_image(noise, cfg, b, image_index=0).score
        s_smooth = score_image(smooth, cfg, b, image_index=0).score
        assert s_noise < s_smooth

    def test_score_within_bounds(self, rng):
        b = SpectralBackend(56)
        cfg = PerturbConfig(lam=0.5, seed=1)
        for i in range(5):
            x = rng.uniform(0, 1, (56, 56, 3))
            s = score_image(x, cfg, b, image_index=i).score
            assert -1.0 <= s <= 1.0


class TestScoreBatch:
    def test_batch_size_independence(self, small_fixture):
        manifest = load_manifest(small_fixture)
        b = SpectralBackend(56)
        cfg = PerturbConfig(seed=0)
        pre = PreprocessSpec(target_size=56)
        kw = dict(pre=pre, root=small_fixture.parent)
        r1 = score_batch(manifest, cfg, b, batch_size=1, **kw)
        r8 = score_batch(manifest, cfg, b, batch_size=8, **kw)
        assert [r.score for r in r1] == [r.score for r in r8]
        assert [r.image_id for r in r1] == [r.image_id for r in r8]

    def test_worker_count_independence(self, small_fixture):
        manifest = load_manifest(small_fixture)
        b = SpectralBackend(56)
        cfg = PerturbConfig(seed=0)
        kw = dict(pre=PreprocessSpec(target_size=56), root=small_fixture.parent, batch_size=4)
        r1 = score_batch(manifest, cfg, b, workers=1, **kw)
        r4 = score_batch(manifest, cfg, b, workers=4, **kw)
        assert [r.score for r in r1] == [r.score for r in r4]

    def test_matches_independent_score_image(self, small_fixture):
        from specdetect.imaging import load_image, preprocess

        manifest = load_manifest(small_fixture)
        b = SpectralBackend(56)
        cfg = PerturbConfig(seed=0)
        pre = PreprocessSpec(target_size=56)
        records = score_batch(manifest, cfg, b, pre=pre, root=small_fixture.parent)
        for idx in (0, 5, 13):
            entry = manifest.entries[idx]
            img = preprocess(load_image(small_fixture.parent / entry.path), pre)
            want = score_image(img, cfg, b, image_index=idx).score
            assert records[idx].score == want

    def test_corrupt_file_becomes_skip_record(self, small_fixture, tmp_path):
        manifest = load_manifest(small_fixture)
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"not an image at all")
        entries = list(manifest.entries[:4])
        from specdetect.imaging import ManifestEntry

        entries.insert(2, ManifestEntry(path=str(bad), label="fake", generator="g"))
        m = DatasetManifest(entries=entries)
        records = score_batch(
            m, PerturbConfig(seed=0), SpectralBackend(56),
            pre=PreprocessSpec(target_size=56), root=small_fixture.parent,
        )
        assert len(records) == 5
        assert records[2].skipped and records[2].skip_reason
        assert all(not r.skipped for i, r in enumerate(records) if i != 2)

    def test_empty_manifest_raises(self):
        with pytest.raises(EmptyManifest):
            score_batch(DatasetManifest(entries=[]), PerturbConfig(), SpectralBackend(56))


class TestClassify:
    def _records(self, scores):
        return [ScoreRecord(image_id=str(i), score=s) for i, s in enumerate(scores)]

    def test_threshold_below_range_all_fake(self):
        recs = self._records([-0.5, 0.0, 1.0])
        assert classify(recs, DecisionPolicy(threshold=-1.01)) == ["fake"] * 3

    def test_threshold_above_range_all_real(self):
        recs = self._records([-0.5, 0.0, 1.0])
        assert classify(recs, DecisionPolicy(threshold=1.01)) == ["real"] * 3

    def test_mid_threshold(self):
        recs = self._records([0.2, 0.8])
        assert classify(recs, DecisionPolicy(threshold=0.5)) == ["real", "fake"]

    def test_boundary_is_fake(self):
        recs = self._records([0.5])
        assert classify(recs, DecisionPolicy(threshold=0.5)) == ["fake"]

    def test_monotone(self, rng):
        scores = sorted(rng.uniform(-1, 1, 50))
        decisions = classify(self._records(scores), DecisionPolicy(threshold=0.25))
        flips = [i for i in range(len(decisions) - 1)
                 if decisions[i] == "fake" and decisions[i + 1] == "real"]
        assert flips == []

    def test_skipped_yields_none(self):
        recs = [ScoreRecord(image_id="a", score=None, skip_reason="bad")]
        assert classify(recs, DecisionPolicy(threshold=0.0)) == [None]

    def test_non_finite_threshold_rejected(self):
        with pytest.raises(ValueError):
            DecisionPolicy(threshold=float("nan"))


class TestSerialization:
    def test_jsonl_round_trip(self):
        recs = [
            ScoreRecord(image_id="a.png", score=0.5, label="real", generator="real"),
            ScoreRecord(image_id="b.png", score=None, label="fake", generator="g", skip_reason="boom"),
        ]
        lines = records_to_jsonl(recs).splitlines()
        assert len(lines) == 2
        first = json.loads(lines[0])
        assert first == {"id": "a.png", "score": 0.5, "label": "real", "generator": "real"}
        second = json.loads(lines[1])
        assert second["score"] is None and second["skip_reason"] == "boom"
