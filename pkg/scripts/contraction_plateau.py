"""Damped contraction on Example 1 with N = floor(1 / rho^K).

With M = N the error stops improving as K (and N) grow because the
Monte-Carlo term N/M does not shrink; M = N^2 removes that floor.
"""

import argparse
from pathlib import Path

from batch_smp.harness.config import load_config
from batch_smp.harness.runner import contraction_preset_N, solve, write_csv

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--K", type=int, nargs="+", default=[500, 600, 700, 800, 900])
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--square-seeds", type=int, default=4, help="seeds for the M = N^2 runs")
    p.add_argument("--out", type=Path, default=ROOT / "runs" / "contraction_plateau.csv")
    args = p.parse_args()
    base = load_config(ROOT / "configs" / "example1_contraction.cfg")
    rows = []
    for K in args.K:
        N = contraction_preset_N(K, base.rho)
        for M, seeds in (("N", args.seeds), ("N^2", args.square_seeds)):
            s = solve(base.with_overrides(N=N, M=M, K=str(K), seeds=list(range(seeds))))
            rows.append((K, N, s.M, s.mean_rel_err, s.std_rel_err, s.mean_time_s))
            print(f"K={K:4d} N={N:3d} M={s.M:5d}: rel err {s.mean_rel_err:.5f} ({s.mean_time_s:.2f} s/run)", flush=True)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(args.out, ["K", "N", "M", "mean_rel_err", "std_rel_err", "mean_time_s"], rows)


if __name__ == "__main__":
    main()
