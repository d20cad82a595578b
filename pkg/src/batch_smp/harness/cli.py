"""Command-line entry point: ``batch-smp {solve,study,compare,hjb} --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..optim import DivergenceError
from .config import ConfigError, load_config
from .runner import compare_methods, convergence_study, hjb_train, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="batch-smp", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "run one configuration for every seed"),
        ("study", "convergence study over N_list with a log-log rate fit"),
        ("compare", "plain SGD vs batch SGD vs damped contraction"),
        ("hjb", "train the randomized-network feedback control"),
    ):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", required=True, type=Path)
        s.add_argument("--out", required=True, type=Path)
        s.add_argument("--seed-offset", type=int, default=0)
        if name == "compare":
            s.add_argument("--contraction-k", default="710", help="iterations for the contraction row")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "solve":
            s = run_experiment(cfg, args.out, args.seed_offset)
            print(f"{s.method} N={s.N} M={s.M} K={s.K}: mean rel err {s.mean_rel_err:.5g} "
                  f"(std {s.std_rel_err:.3g}), {s.mean_time_s:.3g} s/run")
        elif args.command == "study":
            fit, summaries = convergence_study(cfg, args.out, args.seed_offset)
            for s in summaries:
                print(f"N={s.N}: mean rel err {s.mean_rel_err:.5g}")
            print(f"decay order {fit.order:.3f} (r2 {fit.r2:.3f})")
        elif args.command == "compare":
            for s in compare_methods(cfg, out=args.out, seed_offset=args.seed_offset, contraction_K=args.contraction_k):
                print(f"{s.method:12s} M={s.M:<6d} K={s.K:<7d} N={s.N}: {s.mean_time_s:.3g} s, rel err {s.mean_rel_err:.5g}")
        else:
            for r in hjb_train(cfg, args.out, args.seed_offset):
                print(f"{r.optimizer} d={r.d} lam={r.lam}: v={r.value:.5f} ref={r.reference:.5f} "
                      f"rel err {100 * r.rel_error:.3f}%")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
