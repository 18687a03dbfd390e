"""Command line interface: ``stochnls {simulate,stationary,sweep,verify} --config FILE`` and
``stochnls report MANIFEST``.

Exit codes: 0 success, 1 a verify criterion failed (or a manifest file no longer matches its
checksum), 2 config parse error, 3 config validation error, 4 output I/O error, 5 numerical abort.
"""

import argparse
import logging
import os
from pathlib import Path
import sys
import warnings

from . import __version__
from .config import EXIT_IO, EXIT_OK, ConfigError, ConfigValidationError, load_config
from .output import OutputError, file_sha256, read_manifest

__all__ = ["main", "build_parser", "OUT_ENV"]

OUT_ENV = "STOCHNLS_OUT"
DEFAULT_OUT = "stochnls-out"

log = logging.getLogger("stochnls")


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stochnls",
        description="Damped, stochastically forced fractional NLS: ensembles, stationary "
                    "statistics and the vanishing-damping limit.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("simulate", "integrate trajectories and write observable series"),
        ("stationary", "stationary statistics at one damping value"),
        ("sweep", "stationary statistics along a decreasing list of gamma"),
        ("verify", "evaluate every acceptance criterion and write a pass/fail table"),
    ]:
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", required=True, help="JSON experiment configuration")
        p.add_argument("--seed", type=_u64, help="override integrator.seed")
        p.add_argument("--out", help=f"output directory (default: output.directory, ${OUT_ENV}, ./{DEFAULT_OUT})")
        p.add_argument("--threads", type=_positive_int, default=1, help="worker threads (results do not depend on it)")
        p.add_argument("--quiet", action="store_true", help="only print errors")
    p = sub.add_parser("report", help="summarize a run manifest and check file checksums")
    p.add_argument("manifest", help="path to manifest.json or its directory")
    p.add_argument("--quiet", action="store_true", help="only print errors")
    return parser


def _out_dir(args, cfg):
    if args.out:
        return Path(args.out)
    if cfg.output["directory"]:
        return Path(cfg.output["directory"])
    return Path(os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _report(args):
    path = Path(args.manifest)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        man = read_manifest(path)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read manifest {path}: {exc}", file=sys.stderr)
        return EXIT_IO
    base = path.parent
    bad = []
    for f in man["files"]:
        p = base / f["path"]
        if not p.exists() or file_sha256(p) != f["sha256"]:
            bad.append(f["path"])
    if not args.quiet:
        print(f"kind        {man.get('kind')}")
        print(f"seed        {man.get('seed')}")
        print(f"config      {man['config_sha256']}")
        print(f"version     {man['code_version']}")
        print(f"wall time   {man['wall_time_s']} s")
        print(f"exit code   {man.get('exit_code')}")
        if man.get("certified_G") is not None:
            print(f"certified G {man['certified_G']:.6g}")
        print(f"||Phi||^2   H: {man['hs_norm_h_sq']:.6g}  V: {man['hs_norm_v_sq']:.6g}")
        print(f"files       {len(man['files'])} ({len(bad)} modified or missing)")
        for name in bad:
            print(f"  changed: {name}")
        table = base / "verify_table.txt"
        if table.exists():
            print()
            print(table.read_text(), end="")
    return 1 if bad else EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    if args.quiet:
        warnings.simplefilter("ignore")
    if args.command == "report":
        return _report(args)

    from .experiment import run_experiment

    try:
        cfg = load_config(args.config)
    except ConfigValidationError as exc:
        print(f"error: invalid config {args.config}:", file=sys.stderr)
        for path, msg in exc.errors:
            print(f"  {path}: {msg}", file=sys.stderr)
        return exc.exit_code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    if cfg.experiment["kind"] != args.command:
        log.info("running kind=%s (config says %s)", args.command, cfg.experiment["kind"])
    try:
        cfg = cfg.replace("experiment", kind=args.command)
    except ConfigValidationError as exc:
        print(f"error: config is not valid for {args.command}:", file=sys.stderr)
        for path, msg in exc.errors:
            print(f"  {path}: {msg}", file=sys.stderr)
        return exc.exit_code
    try:
        result = run_experiment(cfg, _out_dir(args, cfg), seed=args.seed, threads=args.threads)
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if result.exit_code and "error" in result.summary:
        print(f"error: numerical abort: {result.summary['error']}", file=sys.stderr)
    if not args.quiet:
        print(f"wrote {result.manifest}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
