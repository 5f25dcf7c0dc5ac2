#!/usr/bin/env python3
"""Sweep token budgets and feature-grid resolutions on one synthetic scene.

Reports achieved sequence length, compression ratio against the raw patch
count, and compile time: the two knobs that trade accuracy for complexity.

Usage: python3 scripts/budget_sweep.py [--seed 5] [--frames 32]
"""

import argparse
import time

from px3d.pipeline import CompressConfig, compress_bundle
from px3d.synth import SceneSpec, generate_scene

GRIDS = [(16, 21), (32, 42)]
BUDGETS = [450, 700, 1000]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--frames", type=int, default=32)
    ap.add_argument("--channels", type=int, default=64)
    ap.add_argument("--objects", type=int, default=10)
    args = ap.parse_args()

    print(f"{'grid':>7} {'L':>7} {'K req':>6} {'K':>5} {'ratio':>7} {'time':>8}")
    for ph, pw in GRIDS:
        spec = SceneSpec(seed=args.seed, frames=args.frames, patch_h=ph,
                         patch_w=pw, channels=args.channels,
                         objects=args.objects)
        bundle, _ = generate_scene(spec)
        total = args.frames * ph * pw
        for budget in BUDGETS:
            start = time.perf_counter()
            seq = compress_bundle(bundle, CompressConfig(tokens=budget))
            elapsed = time.perf_counter() - start
            print(f"{f'{ph}x{pw}':>7} {total:>7} {budget:>6} {seq.k:>5} "
                  f"{1 - seq.k / total:>6.2%} {elapsed:>7.3f}s")


if __name__ == "__main__":
    main()
