"""Detection scores: cosine similarity between clean and perturbed embeddings.

Orientation is fixed package-wide: higher score means more likely fake.
Images whose embedding barely moves under structured high-frequency
perturbation score near 1; images rich in genuine high-frequency structure
respond more and score lower.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DecodeError, DimMismatch, EmptyManifest, UnsupportedFormat, ZeroVector
from .imaging import DatasetManifest, PreprocessSpec, load_image, preprocess
from .perturb import HighPassMask, PerturbConfig, make_highpass_mask, perturb_image

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoreRecord:
    """One scored (or skipped) image."""

    image_id: str
    score: float | None
    label: str | None = None
    generator: str | None = None
    skip_reason: str | None = None

    @property
    def skipped(self) -> bool:
        return self.score is None

    def to_dict(self) -> dict:
        d = {"id": self.image_id, "score": self.score, "label": self.label, "generator": self.generator}
        if self.skip_reason is not None:
            d["skip_reason"] = self.skip_reason
        return d


@dataclass(frozen=True)
class DecisionPolicy:
    """Threshold rule: score >= threshold means fake."""

    threshold: float

    def __post_init__(self):
        if not np.isfinite(self.threshold):
            raise ValueError(f"threshold must be finite, got {self.threshold}")


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """a.b / (|a||b|), clamped to [-1, 1].

    Bit-identical inputs return exactly 1.0 (the mathematical value), which
    keeps the zero-strength perturbation case exact.

    Raises:
        DimMismatch: different lengths.
        ZeroVector: either vector has zero norm.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimMismatch(f"dim {a.shape[0]} vs {b.shape[0]}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity undefined for zero vectors")
    if np.array_equal(a, b):
        return 1.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def score_image(
    x: np.ndarray,
    cfg: PerturbConfig,
    handle,
    image_id: str = "",
    label: str | None = None,
    generator: str | None = None,
    image_index: int = 0,
    mask: HighPassMask | None = None,
) -> ScoreRecord:
    """Score one preprocessed image: SIM(f(x), f(x + delta))."""
    clean = handle.embed(x)
    perturbed = handle.embed(perturb_image(x, cfg, image_index=image_index, mask=mask))
    s = cosine_similarity(clean, perturbed)
    return ScoreRecord(image_id=image_id, score=s, label=label, generator=generator)


def _score_chunk(
    entries,
    indices,
    cfg: PerturbConfig,
    handle,
    pre: PreprocessSpec,
    mask: HighPassMask,
    root: Path | None,
    transform: Callable[[np.ndarray, int], np.ndarray] | None,
) -> list[ScoreRecord]:
    imgs, kept, records = [], [], {}
    for entry, idx in zip(entries, indices):
        path = Path(entry.path) if root is None or Path(entry.path).is_absolute() else root / entry.path
        try:
            img = preprocess(load_image(path), pre)
        except (DecodeError, UnsupportedFormat) as exc:
            logger.warning("skipping %s: %s", entry.path, exc)
            records[idx] = ScoreRecord(
                image_id=entry.path, score=None, label=entry.label,
                generator=entry.generator, skip_reason=str(exc),
            )
            continue
        if transform is not None:
            img = transform(img, idx)
        imgs.append((entry, idx, img))
        kept.append(img)
    if imgs:
        clean = handle.embed_batch(kept)
        perturbed = handle.embed_batch(
            [perturb_image(im, cfg, image_index=idx, mask=mask) for _, idx, im in imgs]
        )
        for (entry, idx, _), ce, pe in zip(imgs, clean, perturbed):
            records[idx] = ScoreRecord(
                image_id=entry.path,
                score=cosine_similarity(ce, pe),
                label=entry.label,
                generator=entry.generator,
            )
    return [records[i] for i in sorted(records)]


def score_batch(
    manifest: DatasetManifest,
    cfg: PerturbConfig,
    handle,
    batch_size: int = 8,
    workers: int = 1,
    pre: PreprocessSpec = PreprocessSpec(),
    root: str | Path | None = None,
    transform: Callable[[np.ndarray, int], np.ndarray] | None = None,
) -> list[ScoreRecord]:
    """Score every manifest entry, in manifest order.

    Per-image random streams are keyed by manifest index, so the output is
    independent of batch_size and worker count.  Undecodable entries become
    skip records rather than failures.  ``transform`` (if given) is applied
    after preprocessing and before perturbation, keyed by manifest index.
    """
    if len(manifest) == 0:
        raise EmptyManifest("cannot score an empty manifest")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    root = Path(root) if root is not None else None
    mask = make_highpass_mask(cfg.patch_size, cfg.tau)
    chunks = []
    for start in range(0, len(manifest), batch_size):
        entries = manifest.entries[start : start + batch_size]
        indices = list(range(start, start + len(entries)))
        chunks.append((entries, indices))
    if workers <= 1:
        results = [
            _score_chunk(entries, indices, cfg, handle, pre, mask, root, transform)
            for entries, indices in chunks
        ]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(
                    lambda c: _score_chunk(c[0], c[1], cfg, handle, pre, mask, root, transform),
                    chunks,
                )
            )
    return [rec for chunk in results for rec in chunk]


def classify(records: list[ScoreRecord], policy: DecisionPolicy) -> list[str | None]:
    """Map records to decisions; skipped records yield None."""
    return [
        None if r.skipped else ("fake" if r.score >= policy.threshold else "real")
        for r in records
    ]


def records_to_jsonl(records: list[ScoreRecord]) -> str:
    """One JSON object per line, trailing newline included."""
    return "".join(json.dumps(r.to_dict()) + "\n" for r in records)
