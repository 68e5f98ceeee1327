"""Run every config in configs/ through the CLI, one output directory per config.

    python3 scripts/run_configs.py [--out results] [--only decay_squares ...] [-- extra flags]

Each config file name starts with the command it drives (``bn_norm_*`` runs
``bn-norm``). Extra flags after ``--`` are appended to every run, so
``-- --threads 4`` or ``-- --format json`` apply everywhere.
"""
import argparse
import sys
import time
from pathlib import Path

from horolab import cli

ROOT = Path(__file__).resolve().parent.parent


def command_for(path: Path) -> str:
    stem = path.stem.replace("_", "-")
    for cmd in sorted(cli.OPTIONS, key=len, reverse=True):
        if stem.startswith(cmd):
            return cmd
    raise SystemExit(f"cannot tell which command {path.name} is for")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--configs", type=Path, default=ROOT / "configs")
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--only", nargs="*", default=None, help="config stems to run")
    ap.add_argument("extra", nargs=argparse.REMAINDER)
    args = ap.parse_args(argv)
    extra = args.extra[1:] if args.extra[:1] == ["--"] else args.extra

    status = 0
    for path in sorted(args.configs.glob("*.conf")):
        if args.only and path.stem not in args.only:
            continue
        cmd = command_for(path)
        t0 = time.perf_counter()
        rc = cli.main([cmd, "--config", str(path), "--out", str(args.out / path.stem), *extra])
        print(f"{path.stem:<20} {cmd:<10} exit {rc}  {time.perf_counter() - t0:7.1f}s", file=sys.stderr)
        status = status or rc
    return status


if __name__ == "__main__":
    sys.exit(main())
