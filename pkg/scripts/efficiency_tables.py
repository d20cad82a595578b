"""Plain SGD vs batch SGD vs damped contraction at N = 40 for Examples 1 and 2."""

import argparse
from pathlib import Path

from batch_smp.harness.config import load_config
from batch_smp.harness.runner import compare_methods

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", type=Path, default=ROOT / "runs" / "tables")
    p.add_argument("--seeds", type=int, default=20, help="seeds per method")
    p.add_argument("--contraction-k", default="710")
    args = p.parse_args()
    for name in ("example1", "example2"):
        cfg = load_config(ROOT / "configs" / f"{name}_compare.cfg").with_overrides(seeds=list(range(args.seeds)))
        print(f"{name}:")
        print(f"  {'method':12s} {'M':>6s} {'K':>7s} {'N':>4s} {'time (s)':>9s} {'rel err':>9s}")
        for s in compare_methods(cfg, out=args.out / name, contraction_K=args.contraction_k):
            print(f"  {s.method:12s} {s.M:6d} {s.K:7d} {s.N:4d} {s.mean_time_s:9.3f} {s.mean_rel_err:9.5f}")


if __name__ == "__main__":
    main()
