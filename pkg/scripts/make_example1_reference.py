"""Regenerate the shipped Example 1 reference control table (t, u1, u2 on N = 320)."""

import argparse
from pathlib import Path

from batch_smp.problems import example1


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", type=Path, default=example1.DATA_FILE)
    p.add_argument("--N", type=int, default=example1.DATA_N)
    args = p.parse_args()
    example1.write_reference_data(args.out, args.N)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
