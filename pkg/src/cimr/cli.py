"""``cimr`` command line: experiment runs and the fusion gradient check."""

from __future__ import annotations

import argparse
import logging
import sys
import time

from .backends import resolve_backend_url
from .engine import VARIANTS
from .errors import BackendError, ConfigError, TraceIOError
from .fusion import gradcheck_suite
from .harness import load_config, run_experiment, with_overrides

EXIT_OK, EXIT_CONFIG, EXIT_BACKEND = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cimr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment sweep")
    run.add_argument("--config", required=True)
    run.add_argument("--variant", action="append", choices=VARIANTS, dest="variants")
    run.add_argument("--episodes", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--backend-url")
    run.add_argument("--out", required=True)
    run.add_argument("--traces", required=True)
    run.add_argument("--triplets")
    run.add_argument("--format", choices=("csv", "markdown"))
    run.add_argument("--workers", type=int, default=1)

    gc = sub.add_parser("gradcheck", help="verify fusion gradients by finite differences")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--instances", type=int, default=100)
    return p


def _run(args) -> int:
    try:
        config = load_config(args.config)
        config = with_overrides(
            config,
            variants=tuple(args.variants) if args.variants else None,
            episodes=args.episodes,
            base_seed=args.seed,
            backend_url=resolve_backend_url(args.backend_url, config.backend_url),
            out=args.out,
            traces=args.traces,
            triplets=args.triplets,
            format=args.format,
        )
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_experiment(config, workers=args.workers)
    except BackendError as e:
        print(f"backend error: {e}", file=sys.stderr)
        return EXIT_BACKEND
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except TraceIOError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 1
    print(result.table.to_markdown() if config.format == "markdown" else result.table.to_csv(),
          end="")
    return EXIT_OK


def _gradcheck(args) -> int:
    start = time.perf_counter()
    results = gradcheck_suite(args.seed, args.instances)
    worst = max(err for _, _, err in results)
    print(f"instances: {len(results)}")
    print(f"max relative error: {worst:.3e}")
    print(f"elapsed: {time.perf_counter() - start:.2f}s")
    return EXIT_OK if worst < 1e-4 else 1


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _run(args)
    return _gradcheck(args)


if __name__ == "__main__":
    sys.exit(main())
