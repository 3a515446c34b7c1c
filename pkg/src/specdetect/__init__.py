"""specdetect: training-free synthetic-image detection via embedding
sensitivity to structured high-frequency perturbations."""

__version__ = "0.1.0"

from .backends import BackendDescriptor, SpectralBackend, TorchVitBackend, open_backend
from .detector import DecisionPolicy, ScoreRecord, classify, cosine_similarity, score_batch, score_image
from .evaluation import (
    CorruptionSpec,
    EvalReport,
    RocCurve,
    apply_corruption,
    auc,
    bench_runtime,
    evaluate,
    robustness_grid,
    roc_curve,
    sweep,
)
from .imaging import (
    DatasetManifest,
    ManifestEntry,
    PreprocessSpec,
    dump_manifest,
    load_image,
    load_manifest,
    preprocess,
)
from .perturb import (
    HighPassMask,
    PerturbConfig,
    gen_patch_noise,
    generate_delta,
    make_highpass_mask,
    perturb_image,
    perturbation_cost_profile,
)

__all__ = [
    "__version__",
    "CorruptionSpec",
    "EvalReport",
    "RocCurve",
    "apply_corruption",
    "auc",
    "bench_runtime",
    "evaluate",
    "robustness_grid",
    "roc_curve",
    "sweep",
    "BackendDescriptor",
    "SpectralBackend",
    "TorchVitBackend",
    "open_backend",
    "DecisionPolicy",
    "ScoreRecord",
    "classify",
    "cosine_similarity",
    "score_batch",
    "score_image",
    "DatasetManifest",
    "ManifestEntry",
    "PreprocessSpec",
    "dump_manifest",
    "load_image",
    "load_manifest",
    "preprocess",
    "HighPassMask",
    "PerturbConfig",
    "gen_patch_noise",
    "generate_delta",
    "make_highpass_mask",
    "perturb_image",
    "perturbation_cost_profile",
]
