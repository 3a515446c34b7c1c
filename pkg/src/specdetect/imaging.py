"""Image ingestion, deterministic preprocessing, and dataset manifests.

Images are plain numpy arrays of shape (H, W, 3), float64, channel-last,
with decoded values in [0, 1].  Perturbed images may leave that range; the
helpers here never clip values that later stages are entitled to see.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, DimensionError, EmptyManifest, ParseError, UnsupportedFormat

logger = logging.getLogger(__name__)

SUPPORTED_FORMATS = {"PNG", "JPEG", "WEBP"}

_RESAMPLE = {
    "bilinear": Image.Resampling.BILINEAR,
    "bicubic": Image.Resampling.BICUBIC,
}


@dataclass(frozen=True)
class PreprocessSpec:
    """Deterministic resize policy for model input geometry."""

    target_size: int = 224
    resample: str = "bilinear"

    def __post_init__(self):
        if self.target_size <= 0:
            raise DimensionError(f"target_size must be positive, got {self.target_size}")
        if self.resample not in _RESAMPLE:
            raise ValueError(f"resample must be one of {sorted(_RESAMPLE)}, got {self.resample!r}")


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check (H, W, C) layout, C in {1, 3}, finite values; return float64 view."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise DimensionError(f"expected (H, W, 1|3) array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"empty image: shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError("image contains non-finite values")
    return arr.astype(np.float64, copy=False)


def load_image(path: str | Path) -> np.ndarray:
    """Decode a PNG/JPEG/WebP file into an (H, W, 3) float64 array in [0, 1].

    Grayscale inputs are replicated to three channels; alpha is dropped.

    Raises:
        DecodeError: the file is unreadable or truncated.
        UnsupportedFormat: the file decodes to a format outside the codec set.
    """
    path = Path(path)
    if not path.is_file():
        raise DecodeError(f"no such file: {path}")
    try:
        with Image.open(path) as im:
            fmt = im.format
            if fmt not in SUPPORTED_FORMATS:
                raise UnsupportedFormat(f"{path}: format {fmt!r} not in {sorted(SUPPORTED_FORMATS)}")
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float64) / 255.0
    except UnsupportedFormat:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    return arr


def preprocess(img: np.ndarray, spec: PreprocessSpec = PreprocessSpec()) -> np.ndarray:
    """Resize to (target_size, target_size, 3); idempotent and deterministic.

    An input already at target geometry is returned as an unchanged copy,
    which makes the operation exactly idempotent.  Aspect ratio is not
    preserved.  Output values are clipped to [0, 1] (bicubic may overshoot).
    """
    arr = validate_image(img)
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    size = spec.target_size
    if arr.shape[0] == size and arr.shape[1] == size:
        return arr.copy()
    resample = _RESAMPLE[spec.resample]
    out = np.empty((size, size, 3), dtype=np.float64)
    for c in range(3):
        plane = Image.fromarray(arr[:, :, c].astype(np.float32), mode="F")
        out[:, :, c] = np.asarray(plane.resize((size, size), resample), dtype=np.float64)
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str | None = None  # "real" | "fake"; None only for ad-hoc scoring
    generator: str | None = None


@dataclass
class DatasetManifest:
    """Labeled image records driving evaluation."""

    entries: list[ManifestEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def reals(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.label == "real"]

    @property
    def fakes(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.label == "fake"]

    def by_generator(self) -> dict[str, list[ManifestEntry]]:
        """Fake entries grouped by generator tag, insertion-ordered."""
        groups: dict[str, list[ManifestEntry]] = {}
        for e in self.fakes:
            groups.setdefault(e.generator, []).append(e)
        return groups

    def resolve_path(self, entry: ManifestEntry, root: Path | None = None) -> Path:
        p = Path(entry.path)
        if not p.is_absolute() and root is not None:
            p = root / p
        return p


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse a line-delimited JSON manifest.

    Each line is one object {"path": str, "label": "real"|"fake",
    "generator": str}.  The generator field may be omitted for real entries
    (it defaults to "real") but is required for fakes.

    Raises:
        ParseError: malformed line, with its 1-based number.
        EmptyManifest: no records.
    """
    path = Path(path)
    entries: list[ManifestEntry] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno) from exc
            if not isinstance(obj, dict):
                raise ParseError("record is not a JSON object", lineno)
            if "path" not in obj or not isinstance(obj["path"], str):
                raise ParseError("missing or non-string 'path'", lineno)
            label = obj.get("label")
            if label not in ("real", "fake"):
                raise ParseError(f"unknown label {label!r} (expected 'real' or 'fake')", lineno)
            generator = obj.get("generator")
            if generator is None:
                if label == "fake":
                    raise ParseError("fake entry missing 'generator'", lineno)
                generator = "real"
            elif not isinstance(generator, str):
                raise ParseError("non-string 'generator'", lineno)
            entries.append(ManifestEntry(path=obj["path"], label=label, generator=generator))
    if not entries:
        raise EmptyManifest(f"{path}: no entries")
    return DatasetManifest(entries=entries)


def dump_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Serialize a manifest back to line-delimited JSON (UTF-8, LF)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in manifest.entries:
            fh.write(json.dumps({"path": e.path, "label": e.label, "generator": e.generator}) + "\n")
