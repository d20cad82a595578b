"""Log-log error decay in N for the batch projection method.

Runs the K = N^2 studies for both examples and the K = 10 N study for
Example 1, then prints the fitted decay orders.
"""

import argparse
from pathlib import Path

from batch_smp.harness.config import load_config
from batch_smp.harness.runner import convergence_study

ROOT = Path(__file__).resolve().parents[1]
STUDIES = ("example2_rate", "example1_rate", "example1_half_order")


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", type=Path, default=ROOT / "runs" / "studies")
    p.add_argument("--only", choices=STUDIES)
    args = p.parse_args()
    for name in [args.only] if args.only else STUDIES:
        fit, summaries = convergence_study(load_config(ROOT / "configs" / f"{name}.cfg"), args.out / name)
        errs = "  ".join(f"N={s.N}: {s.mean_rel_err:.5f}" for s in summaries)
        print(f"{name:20s} {errs}  order {fit.order:.3f} (r2 {fit.r2:.3f})")


if __name__ == "__main__":
    main()
