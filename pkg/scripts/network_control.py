"""Randomized-network feedback control: optimizer comparison and a lambda sweep."""

import argparse
from pathlib import Path

from batch_smp.harness.config import load_config
from batch_smp.harness.runner import hjb_train

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", type=Path, default=ROOT / "configs" / "hjb_d10.cfg")
    p.add_argument("--optimizers", nargs="+", default=["adam", "adagrad", "param_sgd"])
    p.add_argument("--lams", type=float, nargs="+", default=[0.5, 1.0, 5.0])
    p.add_argument("--out", type=Path, default=ROOT / "runs" / "network")
    args = p.parse_args()
    cfg = load_config(args.config)
    for opt in args.optimizers:
        (r,) = hjb_train(cfg.with_overrides(method=opt), args.out / opt)
        print(f"{opt:10s} lam={r.lam}: v={r.value:.5f} ref={r.reference:.5f} rel err {100 * r.rel_error:.3f}%", flush=True)
    for lam in args.lams:
        (r,) = hjb_train(cfg.with_overrides(method="adam", lam=lam), args.out / f"lam{lam:g}")
        print(f"adam       lam={lam}: v={r.value:.5f} ref={r.reference:.5f} rel err {100 * r.rel_error:.3f}%", flush=True)


if __name__ == "__main__":
    main()
