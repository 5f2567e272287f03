#!/usr/bin/env python3
"""Replicate study: hierarchical prediction vs ordinary kriging.

Draws worlds with a planted nonstationary covariance (smooth warp of the
plane plus heterogeneous site variances), runs both prediction routes on
each, and tabulates MSPE and interval coverage per replicate.

    python scripts/method_comparison.py --seeds 10 --warp 2.2
"""

import argparse
import sys

import numpy as np

from stfield.evaluate import SynthConfig, synth_generate
from stfield.ingest import SplitSpec
from stfield.pipeline import fit_bsp, predict_bsp, prepare_trend, run_kriging


def run_once(seed: int, args) -> tuple:
    cfg = SynthConfig(
        p=args.stations,
        g=args.gauged,
        n=args.days,
        delta=20.0 * args.stations,
        c=0.0,
        seed=seed,
        box_km=420.0,
        phi_km=args.phi,
        nugget_frac=0.03,
        warp_strength=args.warp,
        warp_scale_km=90.0,
        sd_range=(0.6, 2.2),
        layout="clustered",
    )
    world = synth_generate(cfg)
    split = SplitSpec(world.split_train_ids, world.split_valid_ids, seed)
    prepared = prepare_trend(world.obs, world.stations, split, "interaction")
    fit = fit_bsp(prepared)
    bayes = predict_bsp(fit, method_label="hierarchical")
    krige = run_kriging(prepared, method_label="ordinary kriging")
    return bayes.metrics, krige.metrics


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--stations", type=int, default=48)
    parser.add_argument("--gauged", type=int, default=32)
    parser.add_argument("--days", type=int, default=300)
    parser.add_argument("--warp", type=float, default=2.2)
    parser.add_argument("--phi", type=float, default=80.0)
    args = parser.parse_args(argv)

    wins = 0
    bayes_mspe, ok_mspe, bayes_cov, ok_cov = [], [], [], []
    for seed in range(args.seeds):
        b, k = run_once(seed, args)
        win = b.overall_mspe < k.overall_mspe and k.coverage < b.coverage
        wins += int(win)
        bayes_mspe.append(b.overall_mspe)
        ok_mspe.append(k.overall_mspe)
        bayes_cov.append(b.coverage)
        ok_cov.append(k.coverage)
        print(
            f"seed {seed:3d}  mspe {b.overall_mspe:7.3f} vs {k.overall_mspe:7.3f}  "
            f"coverage {b.coverage:.3f} vs {k.coverage:.3f}  "
            f"{'both orderings hold' if win else '--'}"
        )
    print()
    print(f"orderings held in {wins}/{args.seeds} replicates")
    print(
        f"median mspe: hierarchical {np.median(bayes_mspe):.3f}, "
        f"kriging {np.median(ok_mspe):.3f}"
    )
    print(
        f"median coverage: hierarchical {np.median(bayes_cov):.3f}, "
        f"kriging {np.median(ok_cov):.3f}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
