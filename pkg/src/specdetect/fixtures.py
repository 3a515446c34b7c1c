"""Synthetic evaluation fixtures: textured originals and low-passed copies.

The generated dataset stands in for real-vs-generated benchmarks at desk
scale.  "Real" images are smooth random color fields (natural-image-like
low-frequency bases) carrying a broadband noise texture; "fake" images are
the same images with all spectral content above a radial cutoff removed,
mimicking the band-limited character of synthetic imagery.  Everything is
derived from counter-based streams keyed by image index, so a fixture is
reproducible file-for-file from (seed, size, counts).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .imaging import DatasetManifest, ManifestEntry, dump_manifest
from .perturb import signed_frequencies
from .rng import DOMAIN_FIXTURE, philox_stream

DEFAULT_LOWPASS_RADIUS = 0.35
_TEXTURE_AMP = (0.10, 0.22)
_BASE_CUTOFF = (0.03, 0.06)


def _radial_grid(size: int) -> np.ndarray:
    f = signed_frequencies(size)
    return np.hypot(f[:, None], f[None, :])


def lowpass_filter(img: np.ndarray, radius: float) -> np.ndarray:
    """Zero all full-frame DFT coefficients with radial frequency > radius."""
    arr = np.asarray(img, dtype=np.float64)
    keep = (_radial_grid(arr.shape[0]) <= radius).astype(np.float64)
    out = np.empty_like(arr)
    for c in range(arr.shape[2]):
        out[:, :, c] = np.fft.ifft2(np.fft.fft2(arr[:, :, c]) * keep).real
    return np.clip(out, 0.0, 1.0)


def make_textured_image(seed: int, image_index: int, size: int = 224) -> np.ndarray:
    """One broadband-textured image over a smooth random base, in [0, 1]."""
    rng = philox_stream(seed, domain=DOMAIN_FIXTURE, image_index=image_index)
    radius = _radial_grid(size)
    cutoff = rng.uniform(*_BASE_CUTOFF)
    base_mask = (radius <= cutoff).astype(np.float64)
    x = np.empty((size, size, 3))
    for c in range(3):
        field = np.fft.ifft2(np.fft.fft2(rng.standard_normal((size, size))) * base_mask).real
        span = np.ptp(field)
        field = (field - field.min()) / (span if span > 0 else 1.0)
        x[:, :, c] = 0.2 + 0.6 * field
    amp = rng.uniform(*_TEXTURE_AMP)
    x += amp * rng.standard_normal((size, size, 3))
    return np.clip(x, 0.0, 1.0)


def save_png(img: np.ndarray, path: Path) -> None:
    u8 = np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(u8).save(path, format="PNG")


@dataclass(frozen=True)
class FixtureSpec:
    n_real: int = 200
    n_fake: int = 200
    size: int = 224
    seed: int = 0
    lowpass_radii: tuple[float, ...] = (DEFAULT_LOWPASS_RADIUS,)


def build_fixture(outdir: str | Path, spec: FixtureSpec = FixtureSpec()) -> Path:
    """Write PNG images plus manifest.jsonl under outdir; return manifest path.

    Fakes are the low-passed counterparts of the first ``n_fake`` real
    images, split round-robin over ``lowpass_radii`` (one generator tag per
    radius, e.g. ``lowpass35``).  Paths in the manifest are relative to
    outdir.
    """
    outdir = Path(outdir)
    (outdir / "real").mkdir(parents=True, exist_ok=True)
    (outdir / "fake").mkdir(parents=True, exist_ok=True)
    entries: list[ManifestEntry] = []
    reals: list[np.ndarray] = []
    for i in range(spec.n_real):
        img = make_textured_image(spec.seed, i, spec.size)
        rel = f"real/{i:04d}.png"
        save_png(img, outdir / rel)
        reals.append(img)
        entries.append(ManifestEntry(path=rel, label="real", generator="real"))
    for i in range(spec.n_fake):
        source = reals[i % len(reals)]
        radius = spec.lowpass_radii[i % len(spec.lowpass_radii)]
        tag = f"lowpass{round(radius * 100):02d}"
        rel = f"fake/{i:04d}.png"
        save_png(lowpass_filter(source, radius), outdir / rel)
        entries.append(ManifestEntry(path=rel, label="fake", generator=tag))
    manifest_path = outdir / "manifest.jsonl"
    dump_manifest(DatasetManifest(entries=entries), manifest_path)
    return manifest_path
