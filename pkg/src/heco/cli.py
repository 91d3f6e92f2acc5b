"""Command-line front end.

    heco run --config PATH [--out DIR] [--threads N] [--seed U64]
    heco reproduce FIG_ID [--out DIR] [--threads N] [--seed U64]

Output directory precedence: ``--out`` > ``HECO_OUT`` > ``[run] out_dir``.
Exit codes: 0 success, 2 validation error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np
import scipy
from scipy import fft as sfft

from . import __version__
from .config import U64_MAX, RunConfig, config_hash, dump_config, parse_config
from .errors import ConfigError, HecoError
from .io import sha256_file
from .pipelines import PIPELINES, Artifacts

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

FIGURES = ("fig2a", "fig2b", "fig4a", "fig4b", "fig4c", "fig4d", "fig5", "fig7", "fig9",
           "fig10")

logger = logging.getLogger("heco")


def bundled_config_text(figure_id: str) -> str:
    if figure_id not in FIGURES:
        raise ConfigError(f"unknown figure id {figure_id!r}; available: {', '.join(FIGURES)}")
    return resources.files("heco").joinpath("configs", f"{figure_id}.cfg").read_text()


def resolve_out_dir(cli_out, cfg: RunConfig) -> Path:
    if cli_out:
        return Path(cli_out)
    env = os.environ.get("HECO_OUT")
    if env:
        return Path(env)
    return Path(cfg["run", "out_dir"])


def execute(cfg: RunConfig, out: Path, threads: int = 1, label: str = "") -> dict:
    """Run the pipeline for ``cfg`` into ``out`` and write ``manifest.json``."""
    out.mkdir(parents=True, exist_ok=True)
    art = Artifacts(out)
    config_text = dump_config(cfg)
    (out / "config.cfg").write_text(config_text)
    art.add(out / "config.cfg")
    start = time.perf_counter()
    with sfft.set_workers(threads):
        summary = PIPELINES[cfg.kind](cfg, art)
    wall = time.perf_counter() - start
    manifest = {
        "tool": "heco",
        "version": __version__,
        "run_kind": cfg.kind,
        "label": label,
        "inputs_sha256": config_hash(cfg),
        "seed": cfg["run", "seed"],
        "threads": threads,
        "versions": {"python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "wall_time_s": wall,
        "artifacts": [{"path": str(p.relative_to(out)), "bytes": p.stat().st_size,
                       "sha256": sha256_file(p)} for p in art.paths],
        "summary": summary,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_json_default)
                                       + "\n")
    return manifest


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    return str(obj)


def _u64(text):
    v = int(text)
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heco", description="He scattering off an adsorbate on a "
                                "flat surface: rays, hard-wall optics, classical and quantum "
                                "trajectories.")
    p.add_argument("--version", action="version", version=f"heco {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (overrides HECO_OUT and the config)")
    common.add_argument("--threads", type=_positive, default=None, help="FFT worker threads")
    common.add_argument("--seed", type=_u64, default=None, help="random seed (unsigned 64-bit)")
    common.add_argument("-v", "--verbose", action="store_true")
    r = sub.add_parser("run", parents=[common], help="execute a config file")
    r.add_argument("--config", required=True, help="INI run configuration")
    f = sub.add_parser("reproduce", parents=[common], help="run a bundled figure recipe")
    f.add_argument("figure_id", help=f"one of: {', '.join(FIGURES)}")
    sub.add_parser("figures", help="list bundled figure recipes")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "figures":
        print("\n".join(FIGURES))
        return EXIT_OK
    try:
        if args.command == "run":
            cfg = parse_config(Path(args.config))
            label = str(args.config)
        else:
            cfg = parse_config(bundled_config_text(args.figure_id))
            label = args.figure_id
        if args.seed is not None:
            cfg = cfg.replace(run__seed=args.seed)
        threads = args.threads if args.threads is not None else cfg["run", "threads"]
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"heco: config error: {problem}", file=sys.stderr)
        return EXIT_VALIDATION
    out = resolve_out_dir(args.out, cfg)
    try:
        manifest = execute(cfg, out, threads, label)
    except (HecoError, ValueError, ArithmeticError, OSError) as exc:
        print(f"heco: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{cfg.kind}: {len(manifest['artifacts'])} artifacts in {out} "
          f"({manifest['wall_time_s']:.1f} s)")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
