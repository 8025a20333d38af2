"""Command-line entry point: parse config, run the pipeline, export.

Exit codes: 0 success, 1 pipeline failure (stage-tagged message on
stderr), 2 invalid configuration or flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backends import BackendSet, RemoteInpaint, make_synthetic_backends
from .blend import run_pipeline
from .config import (
    EXPORT_FORMATS,
    PipelineConfig,
    config_from_mapping,
    load_config_file,
)
from .core import PipelineError
from .meshio import save_mesh


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="roomblend",
        description="Blend photographs of distinct rooms into one unified 3D mesh.",
    )
    p.add_argument("--config", help="config file (key = value lines)")
    p.add_argument("--images", help="comma-separated input image paths")
    p.add_argument("--diameter", type=float, help="layout circle diameter in meters (default 6.0)")
    p.add_argument("--seed", type=int, help="run seed (default 0)")
    p.add_argument("--weights", help="conditioning weights as L,D,S (default 0.6,0.3,0.0)")
    p.add_argument("--backend", choices=["synthetic", "remote"], help="backend mode")
    p.add_argument("--endpoint", help="remote inpainting endpoint URL")
    p.add_argument("--theme", help="theme passed to the region-prompt request")
    p.add_argument("--out", help="output mesh path (default scene.ply)")
    p.add_argument("--format", choices=list(EXPORT_FORMATS), help="export format")
    p.add_argument("--debug-dir", help="write per-iteration debug artifacts here")
    return p


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    mapping = load_config_file(args.config) if args.config else {}
    cfg = config_from_mapping(mapping)
    if args.images is not None:
        cfg.input_paths = [s for s in args.images.split(",") if s]
    if args.diameter is not None:
        cfg.diameter_m = args.diameter
    if args.seed is not None:
        cfg.seed = args.seed
    if args.weights is not None:
        parts = args.weights.split(",")
        if len(parts) != 3:
            raise ValueError("weights must be three comma-separated values")
        cfg.weights = tuple(float(x) for x in parts)
    if args.backend is not None:
        cfg.backend_mode = args.backend
    if args.endpoint is not None:
        cfg.endpoint = args.endpoint
    if args.theme is not None:
        cfg.theme = args.theme
    if args.out is not None:
        cfg.output_path = args.out
        suffix = Path(args.out).suffix.lstrip(".").lower()
        if args.format is None and suffix in EXPORT_FORMATS:
            cfg.export_format = suffix
    if args.format is not None:
        cfg.export_format = args.format
    if args.debug_dir is not None:
        cfg.debug_dir = args.debug_dir
        cfg.debug_dump = True
    return cfg


def _build_backends(cfg: PipelineConfig) -> BackendSet:
    base = make_synthetic_backends()
    if cfg.backend_mode == "remote":
        # inpainting is the decoupled model server; the rest stay local
        return BackendSet(
            depth=base.depth,
            inpaint=RemoteInpaint(endpoint=cfg.endpoint),
            seg=base.seg,
            vlm=base.vlm,
            llm=base.llm,
        )
    return base


def _write_manifest(cfg: PipelineConfig, backends: BackendSet, out_path: str) -> str:
    manifest = {
        "seed": cfg.seed,
        "config_hash": cfg.content_hash(),
        "backends": backends.identities(),
        "weights": list(cfg.weights),
        "diameter_m": cfg.diameter_m,
        "inputs": list(cfg.input_paths),
        "output": str(out_path),
        "format": cfg.export_format,
    }
    manifest_path = str(Path(out_path).with_suffix(".manifest.json"))
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return manifest_path


def run_command(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = _config_from_args(args)
        cfg.validate()
        if not cfg.input_paths:
            raise ValueError("no input images given (use --images or a config file)")
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    backends = _build_backends(cfg)
    try:
        mesh = run_pipeline(cfg, backends)
        save_mesh(cfg.output_path, mesh, cfg.export_format)
        _write_manifest(cfg, backends, cfg.output_path)
    except PipelineError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
