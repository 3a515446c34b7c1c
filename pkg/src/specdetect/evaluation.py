"""Evaluation protocol: per-generator AUC, ROC curves, corruption robustness,
hyperparameter sweeps, and runtime benchmarking.

AUC uses the rank (Mann-Whitney) formulation with half credit for ties:
the probability that a uniformly random fake score strictly exceeds a random
real score, plus half the probability of a tie.  Fake is the positive class.
"""

from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.ndimage
from PIL import Image
from scipy.stats import rankdata

from . import __version__
from .detector import ScoreRecord, cosine_similarity, score_batch
from .errors import EmptyClass
from .imaging import DatasetManifest, PreprocessSpec, load_image, preprocess
from .perturb import PerturbConfig, make_highpass_mask, perturb_image
from .rng import DOMAIN_CORRUPT, philox_stream


def auc(real_scores, fake_scores) -> float:
    """Mann-Whitney AUC of fake-vs-real separation, ties counted half.

    Raises:
        EmptyClass: either score list is empty.
    """
    real = np.asarray(real_scores, dtype=np.float64).ravel()
    fake = np.asarray(fake_scores, dtype=np.float64).ravel()
    if real.size == 0 or fake.size == 0:
        raise EmptyClass("AUC requires at least one real and one fake score")
    ranks = rankdata(np.concatenate([real, fake]))
    fake_rank_sum = float(ranks[real.size :].sum())
    n_f, n_r = fake.size, real.size
    return (fake_rank_sum - n_f * (n_f + 1) / 2.0) / (n_f * n_r)


@dataclass(frozen=True)
class RocCurve:
    """Ordered (false positive rate, true positive rate) points."""

    points: tuple[tuple[float, float], ...]

    def area(self) -> float:
        """Trapezoidal area under the curve."""
        pts = np.asarray(self.points, dtype=np.float64)
        return float(np.trapezoid(pts[:, 1], pts[:, 0]))

    def to_csv(self) -> str:
        lines = ["fpr,tpr"]
        lines += [f"{fpr!r},{tpr!r}" for fpr, tpr in self.points]
        return "\n".join(lines) + "\n"


def roc_curve(real_scores, fake_scores) -> RocCurve:
    """ROC curve from sweeping the threshold over all distinct scores.

    The curve starts at (0, 0), ends at (1, 1), and its trapezoidal area
    equals :func:`auc` (tied scores produce diagonal segments carrying the
    half-credit convention).
    """
    real = np.asarray(real_scores, dtype=np.float64).ravel()
    fake = np.asarray(fake_scores, dtype=np.float64).ravel()
    if real.size == 0 or fake.size == 0:
        raise EmptyClass("ROC requires at least one real and one fake score")
    scores = np.concatenate([real, fake])
    labels = np.concatenate([np.zeros(real.size), np.ones(fake.size)])
    order = np.argsort(-scores, kind="stable")
    scores, labels = scores[order], labels[order]
    # one point after each group of equal scores
    boundary = np.flatnonzero(np.diff(scores)) if scores.size > 1 else np.array([], dtype=int)
    cut = np.concatenate([boundary, [scores.size - 1]])
    tp = np.cumsum(labels)[cut]
    fp = np.cumsum(1.0 - labels)[cut]
    pts = [(0.0, 0.0)]
    pts += [(float(f / real.size), float(t / fake.size)) for f, t in zip(fp, tp)]
    return RocCurve(points=tuple(pts))


@dataclass
class EvalReport:
    """Evaluation artifact: one AUC row per generator plus their mean.

    ``runtime_seconds`` is wall clock and deliberately excluded from the
    canonical JSON serialization so that identical runs produce byte
    identical report files.
    """

    per_generator_auc: dict[str, float]
    average_auc: float
    roc: dict[str, RocCurve]
    n_scored: int
    n_skipped: int
    missing_generators: list[str]
    config: dict
    runtime_seconds: float = 0.0
    records: list[ScoreRecord] = field(default_factory=list, repr=False)

    def to_json(self) -> str:
        doc = {
            "version": __version__,
            "config": self.config,
            "per_generator_auc": self.per_generator_auc,
            "average_auc": self.average_auc,
            "n_scored": self.n_scored,
            "n_skipped": self.n_skipped,
            "missing_generators": sorted(self.missing_generators),
            "roc": {g: [list(p) for p in c.points] for g, c in self.roc.items()},
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def evaluate(
    manifest: DatasetManifest,
    cfg: PerturbConfig,
    backend,
    pre: PreprocessSpec = PreprocessSpec(),
    batch_size: int = 8,
    workers: int = 1,
    root: str | Path | None = None,
    transform=None,
    extra_config: dict | None = None,
) -> EvalReport:
    """Score the manifest once and compute per-generator AUC.

    Each generator's fakes are ranked against the full real pool; the
    average is the unweighted mean over generators.  Generators whose scored
    fakes are empty are reported as missing rather than failing the run.

    Raises:
        EmptyClass: the manifest has no real or no fake entries.
    """
    if not manifest.reals or not manifest.fakes:
        raise EmptyClass("evaluation requires at least one real and one fake entry")
    t0 = time.perf_counter()
    records = score_batch(
        manifest, cfg, backend,
        batch_size=batch_size, workers=workers, pre=pre, root=root, transform=transform,
    )
    real_scores = [r.score for r in records if not r.skipped and r.label == "real"]
    if not real_scores:
        raise EmptyClass("no real image could be scored")
    by_gen: dict[str, list[float]] = {}
    for r in records:
        if not r.skipped and r.label == "fake":
            by_gen.setdefault(r.generator or "unknown", []).append(r.score)
    per_gen, rocs, missing = {}, {}, []
    for gen in sorted(set(e.generator for e in manifest.fakes)):
        scores = by_gen.get(gen, [])
        if not scores:
            missing.append(gen)
            continue
        per_gen[gen] = auc(real_scores, scores)
        rocs[gen] = roc_curve(real_scores, scores)
    if not per_gen:
        raise EmptyClass("no fake image could be scored")
    # Execution-context values (worker count, output locations) are kept out
    # of the report so identical runs serialize byte-identically; the CLI
    # records them separately in run_config.json.
    config = {
        "perturb": {"lambda": cfg.lam, "tau": cfg.tau, "patch_size": cfg.patch_size, "seed": cfg.seed},
        "backend": backend.describe(),
        "preprocess": {"target_size": pre.target_size, "resample": pre.resample},
        "batch_size": batch_size,
    }
    if extra_config:
        config.update(extra_config)
    return EvalReport(
        per_generator_auc=per_gen,
        average_auc=float(np.mean(list(per_gen.values()))),
        roc=rocs,
        n_scored=sum(1 for r in records if not r.skipped),
        n_skipped=sum(1 for r in records if r.skipped),
        missing_generators=missing,
        config=config,
        runtime_seconds=time.perf_counter() - t0,
        records=records,
    )


# Corruption severity tables: level 1..3, mild to severe.
CORRUPTION_LEVELS: dict[str, dict[int, float]] = {
    "gaussian_blur": {1: 1.0, 2: 2.0, 3: 3.0},      # sigma, pixels
    "gaussian_noise": {1: 0.02, 2: 0.05, 3: 0.10},  # sigma, [0,1] units
    "jpeg": {1: 90.0, 2: 70.0, 3: 50.0},            # encoder quality
    "center_crop": {1: 0.9, 2: 0.8, 3: 0.7},        # retained side fraction
}


@dataclass(frozen=True)
class CorruptionSpec:
    """One corruption kind at one severity level.

    ``param`` defaults from :data:`CORRUPTION_LEVELS`; passing it explicitly
    permits identity-level settings (blur sigma 0, crop fraction 1) in tests.
    """

    kind: str
    level: int
    param: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.kind not in CORRUPTION_LEVELS:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if self.param is None:
            table = CORRUPTION_LEVELS[self.kind]
            if self.level not in table:
                raise ValueError(f"{self.kind}: level must be in {sorted(table)}, got {self.level}")
            object.__setattr__(self, "param", table[self.level])

    def key(self) -> str:
        return f"{self.kind}@{self.level}"


def apply_corruption(
    img: np.ndarray,
    spec: CorruptionSpec,
    image_index: int = 0,
    seed: int = 0,
    pre: PreprocessSpec = PreprocessSpec(),
) -> np.ndarray:
    """Corrupt one preprocessed [0, 1] image; geometry is restored afterwards.

    JPEG goes through a real encode/decode cycle.  Noise draws come from a
    dedicated stream keyed by (seed, image_index), so corrupted evaluations
    stay deterministic and order independent.
    """
    arr = np.asarray(img, dtype=np.float64)
    if spec.kind == "gaussian_blur":
        if spec.param == 0:
            return arr.copy()
        return scipy.ndimage.gaussian_filter(arr, sigma=(spec.param, spec.param, 0), mode="reflect")
    if spec.kind == "gaussian_noise":
        stream = philox_stream(seed, domain=DOMAIN_CORRUPT, image_index=image_index)
        noisy = arr + spec.param * stream.standard_normal(arr.shape)
        return np.clip(noisy, 0.0, 1.0)
    if spec.kind == "jpeg":
        u8 = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(u8).save(buf, format="JPEG", quality=int(spec.param))
        buf.seek(0)
        return np.asarray(Image.open(buf).convert("RGB"), dtype=np.float64) / 255.0
    if spec.kind == "center_crop":
        side = arr.shape[0]
        keep = int(round(side * spec.param))
        keep = max(1, min(side, keep))
        if keep == side:
            return arr.copy()
        off = (side - keep) // 2
        cropped = arr[off : off + keep, off : off + keep, :]
        return preprocess(cropped, PreprocessSpec(target_size=side, resample=pre.resample))
    raise ValueError(f"unknown corruption kind {spec.kind!r}")  # pragma: no cover


def robustness_grid(
    manifest: DatasetManifest,
    cfg: PerturbConfig,
    backend,
    specs: list[CorruptionSpec],
    **eval_kwargs,
) -> dict[CorruptionSpec, EvalReport]:
    """Run evaluate once per corruption spec, corrupting reals and fakes alike."""
    base_extra = eval_kwargs.pop("extra_config", None) or {}
    out: dict[CorruptionSpec, EvalReport] = {}
    for spec in specs:
        transform = lambda img, idx, _s=spec: apply_corruption(img, _s, image_index=idx, seed=cfg.seed)
        extra = dict(base_extra)
        extra["corruption"] = {"kind": spec.kind, "level": spec.level, "param": spec.param}
        out[spec] = evaluate(manifest, cfg, backend, transform=transform, extra_config=extra, **eval_kwargs)
    return out


SWEEP_AXES = ("lambda", "patch_size", "layer")


@dataclass(frozen=True)
class SweepRow:
    value: float
    average_auc: float


def sweep(
    manifest: DatasetManifest,
    backend,
    axis: str,
    values,
    cfg: PerturbConfig = PerturbConfig(),
    **eval_kwargs,
) -> list[SweepRow]:
    """Evaluate once per value of one hyperparameter, all else at defaults.

    Axes: "lambda" (noise variance), "patch_size", "layer" (requires a
    backend exposing that many layers).
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    rows = []
    for v in values:
        run_cfg, run_backend = cfg, backend
        if axis == "lambda":
            run_cfg = PerturbConfig(lam=float(v), tau=cfg.tau, patch_size=cfg.patch_size, seed=cfg.seed)
        elif axis == "patch_size":
            run_cfg = PerturbConfig(lam=cfg.lam, tau=cfg.tau, patch_size=int(v), seed=cfg.seed)
        else:
            run_backend = backend.with_layer(int(v))
        report = evaluate(manifest, run_cfg, run_backend, **eval_kwargs)
        rows.append(SweepRow(value=float(v), average_auc=report.average_auc))
    return rows


def sweep_to_csv(rows: list[SweepRow]) -> str:
    lines = ["axis_value,average_auc"]
    lines += [f"{r.value!r},{r.average_auc!r}" for r in rows]
    return "\n".join(lines) + "\n"


def robustness_to_csv(grid: dict[CorruptionSpec, EvalReport]) -> str:
    lines = ["corruption,level,average_auc"]
    lines += [f"{s.kind},{s.level},{rep.average_auc!r}" for s, rep in grid.items()]
    return "\n".join(lines) + "\n"


@dataclass
class BenchResult:
    """Runtime measurement covering perturbation, embedding, and scoring.

    Decode and resize are excluded; the first batch is a discarded warm-up.
    """

    total_seconds: float
    per_image_seconds: float
    perturb_seconds: float
    embed_seconds: float
    n_images: int
    batch_size: int
    workers: int = 1

    @property
    def empty(self) -> bool:
        return self.n_images == 0

    def to_dict(self) -> dict:
        return {
            "total_seconds": self.total_seconds,
            "per_image_seconds": self.per_image_seconds,
            "perturb_seconds": self.perturb_seconds,
            "embed_seconds": self.embed_seconds,
            "n_images": self.n_images,
            "batch_size": self.batch_size,
            "workers": self.workers,
            "empty": self.empty,
        }


def bench_runtime(
    manifest: DatasetManifest,
    cfg: PerturbConfig,
    backend,
    batch_size: int = 8,
    pre: PreprocessSpec = PreprocessSpec(),
    root: str | Path | None = None,
) -> BenchResult:
    """Time the scoring pipeline from model input to score output.

    Images are decoded and preprocessed up front (untimed).  Undecodable
    entries are dropped; an all-skip manifest yields an explicit empty
    result rather than an error.
    """
    root = Path(root) if root is not None else None
    imgs = []
    for entry in manifest.entries:
        path = Path(entry.path) if root is None or Path(entry.path).is_absolute() else root / entry.path
        try:
            imgs.append(preprocess(load_image(path), pre))
        except Exception:
            continue
    if not imgs:
        return BenchResult(0.0, 0.0, 0.0, 0.0, 0, batch_size)
    mask = make_highpass_mask(cfg.patch_size, cfg.tau)

    def run_batch(batch, base_index):
        t0 = time.perf_counter()
        perturbed = [
            perturb_image(im, cfg, image_index=base_index + i, mask=mask)
            for i, im in enumerate(batch)
        ]
        t1 = time.perf_counter()
        clean_e = backend.embed_batch(batch)
        pert_e = backend.embed_batch(perturbed)
        scores = [cosine_similarity(a, b) for a, b in zip(clean_e, pert_e)]
        t2 = time.perf_counter()
        return t1 - t0, t2 - t1, scores

    run_batch(imgs[:batch_size], 0)  # warm-up, discarded
    perturb_s = embed_s = 0.0
    for start in range(0, len(imgs), batch_size):
        tp, te, _ = run_batch(imgs[start : start + batch_size], start)
        perturb_s += tp
        embed_s += te
    total = perturb_s + embed_s
    return BenchResult(
        total_seconds=total,
        per_image_seconds=total / len(imgs),
        perturb_seconds=perturb_s,
        embed_seconds=embed_s,
        n_images=len(imgs),
        batch_size=batch_size,
    )
