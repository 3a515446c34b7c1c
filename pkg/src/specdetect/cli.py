"""Command-line entry point: score, evaluate, robustness, sweep, and bench.

Configuration is resolved as defaults <- config file <- flags.  The resolved
configuration and the tool version are echoed into every output artifact so
runs are self-describing.  Defaults correspond to the standard operating
point: 224 input, patch size 14, tau 0.5, lambda 0.01, layer 13, batch 8,
fixed seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .backends import BackendDescriptor, open_backend
from .detector import records_to_jsonl, score_batch
from .errors import (
    BundleLoadError,
    ConfigError,
    DecodeError,
    DimensionError,
    EmptyClass,
    EmptyManifest,
    LayerOutOfRange,
    ParseError,
)
from .evaluation import (
    CORRUPTION_LEVELS,
    CorruptionSpec,
    bench_runtime,
    evaluate,
    robustness_grid,
    robustness_to_csv,
    sweep,
    sweep_to_csv,
)
from .imaging import DatasetManifest, ManifestEntry, PreprocessSpec, load_manifest
from .perturb import PerturbConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_EMPTY = 4

BUNDLE_ENV = "SPECDETECT_BUNDLE"

DEFAULTS = {
    "manifest": None,
    "backend": "spectral",
    "bundle": None,
    "layer": 13,
    "lambda": 0.01,
    "tau": 0.5,
    "patch_size": 14,
    "batch_size": 8,
    "seed": 0,
    "workers": 1,
    "target_size": 224,
    "resample": "bilinear",
    "root": None,
    "out": None,
}

_CONFIG_KEYS = set(DEFAULTS)


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", help="line-delimited JSON manifest")
    p.add_argument("--backend", choices=["spectral", "vit"], help="embedding backend kind")
    p.add_argument("--bundle", help=f"model bundle directory (or ${BUNDLE_ENV})")
    p.add_argument("--layer", type=int, help="transformer layer for CLS extraction")
    p.add_argument("--lambda", dest="lam", type=float, help="perturbation noise variance")
    p.add_argument("--tau", type=float, help="radial frequency threshold")
    p.add_argument("--patch-size", type=int, help="perturbation patch size in pixels")
    p.add_argument("--batch-size", type=int, help="embedding batch size")
    p.add_argument("--seed", type=int, help="base random seed")
    p.add_argument("--workers", type=int, help="parallel scoring workers")
    p.add_argument("--target-size", type=int, help="preprocessing target size")
    p.add_argument("--root", help="base directory for relative manifest paths")
    p.add_argument("--out", help="output directory for artifacts")
    p.add_argument("--config", help="JSON config file (flags override it)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specdetect",
        description="Training-free synthetic-image detection and evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"specdetect {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_score = sub.add_parser("score", help="score images or a manifest")
    p_score.add_argument("images", nargs="*", help="image files to score")
    _add_common_flags(p_score)

    p_eval = sub.add_parser("evaluate", help="per-generator AUC report")
    _add_common_flags(p_eval)

    p_rob = sub.add_parser("robustness", help="corruption robustness grid")
    p_rob.add_argument("--kinds", default=",".join(CORRUPTION_LEVELS),
                       help="comma-separated corruption kinds")
    p_rob.add_argument("--levels", default="1,2,3", help="comma-separated severity levels")
    _add_common_flags(p_rob)

    p_sweep = sub.add_parser("sweep", help="hyperparameter sweep")
    p_sweep.add_argument("--axis", required=True, choices=["lambda", "patch_size", "layer"])
    p_sweep.add_argument("--values", required=True, help="comma-separated axis values")
    _add_common_flags(p_sweep)

    p_bench = sub.add_parser("bench", help="runtime benchmark")
    _add_common_flags(p_bench)

    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults, config file, and flags into one resolved dict."""
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg_path = Path(args.config)
        try:
            file_cfg = json.loads(cfg_path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {cfg_path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {cfg_path} is not valid JSON: {exc}") from exc
        unknown = set(file_cfg) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    flag_map = {
        "manifest": "manifest", "backend": "backend", "bundle": "bundle",
        "layer": "layer", "lam": "lambda", "tau": "tau",
        "patch_size": "patch_size", "batch_size": "batch_size",
        "seed": "seed", "workers": "workers", "target_size": "target_size",
        "root": "root", "out": "out",
    }
    for attr, key in flag_map.items():
        val = getattr(args, attr, None)
        if val is not None:
            merged[key] = val
    if merged["backend"] == "vit" and not merged["bundle"]:
        merged["bundle"] = os.environ.get(BUNDLE_ENV) or None
        if not merged["bundle"]:
            raise ConfigError(f"backend 'vit' needs --bundle or ${BUNDLE_ENV}")
    if merged["target_size"] % merged["patch_size"] != 0:
        raise ConfigError(
            f"patch_size {merged['patch_size']} does not divide target_size {merged['target_size']}"
        )
    return merged


def _perturb_config(cfg: dict) -> PerturbConfig:
    try:
        return PerturbConfig(
            lam=cfg["lambda"], tau=cfg["tau"], patch_size=cfg["patch_size"], seed=cfg["seed"]
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _backend_descriptor(cfg: dict) -> BackendDescriptor:
    kind = "spectral-reference" if cfg["backend"] == "spectral" else "serialized-vit"
    return BackendDescriptor(
        kind=kind, layer=cfg["layer"], bundle=cfg["bundle"], input_size=cfg["target_size"]
    )


def _preprocess_spec(cfg: dict) -> PreprocessSpec:
    return PreprocessSpec(target_size=cfg["target_size"], resample=cfg["resample"])


def _load_manifest_for(cfg: dict) -> tuple[DatasetManifest, Path | None]:
    if not cfg["manifest"]:
        raise ConfigError("--manifest is required")
    manifest_path = Path(cfg["manifest"])
    manifest = load_manifest(manifest_path)
    root = Path(cfg["root"]) if cfg["root"] else manifest_path.parent
    return manifest, root


def _out_dir(cfg: dict) -> Path | None:
    if cfg["out"] is None:
        return None
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _csv_header(cfg: dict) -> str:
    return f"# version={__version__}\n# config={json.dumps(cfg, sort_keys=True)}\n"


def _report_config(cfg: dict) -> dict:
    """Resolved config minus execution-context keys, for report embedding.

    Worker count and output location do not influence scores; leaving them
    out keeps report files byte-identical across equivalent runs.
    """
    return {k: v for k, v in cfg.items() if k not in ("workers", "out")}


def _write_run_config(out: Path, cfg: dict) -> None:
    doc = {"version": __version__, "config": cfg}
    (out / "run_config.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def cmd_score(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    if args.images and cfg["manifest"]:
        raise ConfigError("give image paths or --manifest, not both")
    if args.images:
        manifest = DatasetManifest(entries=[ManifestEntry(path=p) for p in args.images])
        root = None
    else:
        manifest, root = _load_manifest_for(cfg)
    handle = open_backend(_backend_descriptor(cfg))
    records = score_batch(
        manifest, _perturb_config(cfg), handle,
        batch_size=cfg["batch_size"], workers=cfg["workers"],
        pre=_preprocess_spec(cfg), root=root,
    )
    text = records_to_jsonl(records)
    out = _out_dir(cfg)
    if out is None:
        sys.stdout.write(text)
    else:
        (out / "scores.jsonl").write_text(text, encoding="utf-8")
        _write_run_config(out, cfg)
        print(f"wrote {out / 'scores.jsonl'} ({len(records)} records)")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    manifest, root = _load_manifest_for(cfg)
    handle = open_backend(_backend_descriptor(cfg))
    report = evaluate(
        manifest, _perturb_config(cfg), handle,
        pre=_preprocess_spec(cfg), batch_size=cfg["batch_size"],
        workers=cfg["workers"], root=root, extra_config={"run": _report_config(cfg)},
    )
    out = _out_dir(cfg)
    if out is not None:
        (out / "eval_report.json").write_text(report.to_json(), encoding="utf-8")
        for gen, curve in report.roc.items():
            (out / f"roc_{gen}.csv").write_text(_csv_header(cfg) + curve.to_csv(), encoding="utf-8")
        _write_run_config(out, cfg)
    print(f"average_auc={report.average_auc!r}")
    return EXIT_OK


def cmd_robustness(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    manifest, root = _load_manifest_for(cfg)
    handle = open_backend(_backend_descriptor(cfg))
    try:
        kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
        levels = [int(v) for v in args.levels.split(",") if v.strip()]
        specs = [CorruptionSpec(kind=k, level=lv) for k in kinds for lv in levels]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    grid = robustness_grid(
        manifest, _perturb_config(cfg), handle, specs,
        pre=_preprocess_spec(cfg), batch_size=cfg["batch_size"],
        workers=cfg["workers"], root=root, extra_config={"run": _report_config(cfg)},
    )
    out = _out_dir(cfg)
    if out is not None:
        (out / "robustness.csv").write_text(_csv_header(cfg) + robustness_to_csv(grid), encoding="utf-8")
        combined = {s.key(): json.loads(rep.to_json()) for s, rep in grid.items()}
        doc = {"version": __version__, "config": cfg, "reports": combined}
        (out / "robustness_report.json").write_text(
            json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        _write_run_config(out, cfg)
    for spec, rep in grid.items():
        print(f"{spec.kind} level={spec.level} average_auc={rep.average_auc!r}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    manifest, root = _load_manifest_for(cfg)
    handle = open_backend(_backend_descriptor(cfg))
    try:
        if args.axis == "layer":
            values = [int(v) for v in args.values.split(",") if v.strip()]
        else:
            values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --values: {exc}") from exc
    rows = sweep(
        manifest, handle, args.axis, values, cfg=_perturb_config(cfg),
        pre=_preprocess_spec(cfg), batch_size=cfg["batch_size"],
        workers=cfg["workers"], root=root,
    )
    out = _out_dir(cfg)
    if out is not None:
        (out / "sweep.csv").write_text(_csv_header(cfg) + sweep_to_csv(rows), encoding="utf-8")
        _write_run_config(out, cfg)
    for row in rows:
        print(f"{args.axis}={row.value!r} average_auc={row.average_auc!r}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    manifest, root = _load_manifest_for(cfg)
    handle = open_backend(_backend_descriptor(cfg))
    result = bench_runtime(
        manifest, _perturb_config(cfg), handle,
        batch_size=cfg["batch_size"], pre=_preprocess_spec(cfg), root=root,
    )
    out = _out_dir(cfg)
    if out is not None:
        doc = {"version": __version__, "config": cfg, "result": result.to_dict()}
        (out / "bench.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        _write_run_config(out, cfg)
    print(
        f"runtime_seconds={result.total_seconds!r} per_image_seconds={result.per_image_seconds!r} "
        f"n_images={result.n_images} batch_size={result.batch_size}"
    )
    return EXIT_OK


_COMMANDS = {
    "score": cmd_score,
    "evaluate": cmd_evaluate,
    "robustness": cmd_robustness,
    "sweep": cmd_sweep,
    "bench": cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DimensionError, LayerOutOfRange, BundleLoadError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, EmptyManifest, DecodeError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except EmptyClass as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY


if __name__ == "__main__":
    sys.exit(main())
