import json

import numpy as np
import pytest
from PIL import Image

from specdetect.errors import DecodeError, DimensionError, EmptyManifest, ParseError, UnsupportedFormat
from specdetect.imaging import (
    DatasetManifest,
    ManifestEntry,
    PreprocessSpec,
    dump_manifest,
    load_image,
    load_manifest,
    preprocess,
)


def _write_png(path, arr_u8):
    Image.fromarray(arr_u8).save(path, format="PNG")


class TestLoadImage:
    def test_pure_white_1x1(self, tmp_path):
        p = tmp_path / "w.png"
        _write_png(p, np.full((1, 1, 3), 255, dtype=np.uint8))
        img = load_image(p)
        assert img.shape == (1, 1, 3)
        assert np.all(img == 1.0)

    def test_pure_black_2x2(self, tmp_path):
        p = tmp_path / "b.png"
        _write_png(p, np.zeros((2, 2, 3), dtype=np.uint8))
        img = load_image(p)
        assert img.shape == (2, 2, 3)
        assert np.all(img == 0.0)

    def test_gradient_matches_independent_decoder(self, tmp_path):
        cv2 = pytest.importorskip("cv2")
        vals = np.arange(64, dtype=np.uint8).reshape(8, 8)
        arr = np.stack([vals, vals[::-1], vals.T], axis=2)
        p = tmp_path / "g.png"
        _write_png(p, arr)
        img = load_image(p)
        # oracle 1: the exact encoded bytes divided by 255
        assert np.array_equal(img, arr.astype(np.float64) / 255.0)
        # oracle 2: an independent decoder on the same file
        bgr = cv2.imread(str(p), cv2.IMREAD_COLOR)
        assert np.array_equal(img, bgr[:, :, ::-1].astype(np.float64) / 255.0)

    def test_grayscale_replicated(self, tmp_path):
        p = tmp_path / "gray.png"
        Image.fromarray(np.full((4, 4), 128, dtype=np.uint8), mode="L").save(p)
        img = load_image(p)
        assert img.shape == (4, 4, 3)
        assert np.all(img[:, :, 0] == img[:, :, 1])
        assert np.all(img[:, :, 1] == img[:, :, 2])

    def test_jpeg_and_webp_supported(self, tmp_path):
        arr = np.full((8, 8, 3), 100, dtype=np.uint8)
        for fmt, name in [("JPEG", "a.jpg"), ("WEBP", "a.webp")]:
            p = tmp_path / name
            Image.fromarray(arr).save(p, format=fmt)
            img = load_image(p)
            assert img.shape == (8, 8, 3)
            assert np.all((img >= 0) & (img <= 1))

    def test_unsupported_format(self, tmp_path):
        p = tmp_path / "a.bmp"
        Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(p, format="BMP")
        with pytest.raises(UnsupportedFormat):
            load_image(p)

    def test_truncated_file(self, tmp_path):
        p = tmp_path / "broken.png"
        p.write_bytes(b"\x89PNG\r\n\x1a\n___not_a_png___")
        with pytest.raises(DecodeError):
            load_image(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DecodeError):
            load_image(tmp_path / "nope.png")


class TestPreprocess:
    def test_identity_resize_bitwise(self, rng):
        x = rng.uniform(0, 1, (224, 224, 3))
        out = preprocess(x, PreprocessSpec(target_size=224))
        assert np.array_equal(out, x)
        assert out is not x

    def test_constant_invariance(self):
        x = np.full((448, 448, 3), 0.5)
        out = preprocess(x, PreprocessSpec(target_size=224))
        assert out.shape == (224, 224, 3)
        assert np.allclose(out, 0.5, atol=1e-7)

    def test_mean_preserved_within_1pct(self, rng):
        x = rng.uniform(0, 1, (100, 300, 3))
        out = preprocess(x, PreprocessSpec(target_size=224))
        assert out.shape == (224, 224, 3)
        assert abs(out.mean() - x.mean()) <= 0.01 * x.mean()

    def test_idempotent(self, rng):
        x = rng.uniform(0, 1, (97, 41, 3))
        spec = PreprocessSpec(target_size=112)
        once = preprocess(x, spec)
        twice = preprocess(once, spec)
        assert np.array_equal(once, twice)

    def test_deterministic(self, rng):
        x = rng.uniform(0, 1, (97, 41, 3))
        spec = PreprocessSpec(target_size=112, resample="bicubic")
        assert np.array_equal(preprocess(x, spec), preprocess(x, spec))

    def test_range_clipped(self, rng):
        x = rng.uniform(0, 1, (61, 61, 3))
        out = preprocess(x, PreprocessSpec(target_size=112, resample="bicubic"))
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_single_channel_replicated(self, rng):
        x = rng.uniform(0, 1, (56, 56, 1))
        out = preprocess(x, PreprocessSpec(target_size=56))
        assert out.shape == (56, 56, 3)

    def test_rejects_bad_shapes(self):
        with pytest.raises(DimensionError):
            preprocess(np.zeros((10, 10)), PreprocessSpec())
        with pytest.raises(DimensionError):
            preprocess(np.zeros((10, 10, 4)), PreprocessSpec())
        with pytest.raises(DimensionError):
            preprocess(np.full((4, 4, 3), np.nan), PreprocessSpec())


class TestManifest:
    def _write(self, tmp_path, lines):
        p = tmp_path / "m.jsonl"
        p.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return p

    def test_two_entries(self, tmp_path):
        p = self._write(tmp_path, [
            json.dumps({"path": "a.png", "label": "real", "generator": "real"}),
            json.dumps({"path": "b.png", "label": "fake", "generator": "sd"}),
        ])
        m = load_manifest(p)
        assert len(m) == 2
        assert len(m.reals) == 1 and len(m.fakes) == 1

    def test_unknown_label_names_line(self, tmp_path):
        p = self._write(tmp_path, [
            json.dumps({"path": "a.png", "label": "real"}),
            json.dumps({"path": "b.png", "label": "synthetic", "generator": "x"}),
        ])
        with pytest.raises(ParseError) as exc:
            load_manifest(p)
        assert exc.value.line == 2

    def test_generator_grouping(self, tmp_path):
        lines = [json.dumps({"path": f"r{i}.png", "label": "real"}) for i in range(2)]
        for gen, n in [("g1", 3), ("g2", 1), ("g3", 2)]:
            lines += [json.dumps({"path": f"{gen}_{i}.png", "label": "fake", "generator": gen})
                      for i in range(n)]
        m = load_manifest(self._write(tmp_path, lines))
        groups = m.by_generator()
        assert {g: len(v) for g, v in groups.items()} == {"g1": 3, "g2": 1, "g3": 2}

    def test_round_trip(self, tmp_path):
        p = self._write(tmp_path, [
            json.dumps({"path": "a.png", "label": "real", "generator": "real"}),
            json.dumps({"path": "b.png", "label": "fake", "generator": "sd"}),
        ])
        m = load_manifest(p)
        out = tmp_path / "copy.jsonl"
        dump_manifest(m, out)
        assert load_manifest(out) == m

    def test_empty_manifest(self, tmp_path):
        p = tmp_path / "e.jsonl"
        p.write_text("", encoding="utf-8")
        with pytest.raises(EmptyManifest):
            load_manifest(p)

    def test_bad_json_line(self, tmp_path):
        p = self._write(tmp_path, ['{"path": "a.png", "label": "real"}', "{oops"])
        with pytest.raises(ParseError) as exc:
            load_manifest(p)
        assert exc.value.line == 2

    def test_fake_requires_generator(self, tmp_path):
        p = self._write(tmp_path, [json.dumps({"path": "b.png", "label": "fake"})])
        with pytest.raises(ParseError):
            load_manifest(p)

    def test_real_generator_defaults(self, tmp_path):
        p = self._write(tmp_path, [json.dumps({"path": "a.png", "label": "real"})])
        m = load_manifest(p)
        assert m.entries[0].generator == "real"

    def test_missing_path_field(self, tmp_path):
        p = self._write(tmp_path, [json.dumps({"label": "real"})])
        with pytest.raises(ParseError):
            load_manifest(p)
