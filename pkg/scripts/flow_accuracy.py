"""Endpoint error of the dense flow on synthetic translations.

    python scripts/flow_accuracy.py --pairs 10 --max-shift 8
"""
import argparse
import time

import numpy as np

from hdrfuse.fixtures import textured_image
from hdrfuse.flow import FlowField, compute_flow, warp


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=10)
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--max-shift", type=float, default=8.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    m = int(np.ceil(args.max_shift))
    print("   dx     dy   median    mean     p95   seconds")
    for i in range(args.pairs):
        img = textured_image(args.size, args.size, seed=args.seed * 1000 + i)
        dx, dy = rng.uniform(-args.max_shift, args.max_shift, size=2)
        moved = warp(img, FlowField.constant(img.shape, dx, dy))
        t0 = time.perf_counter()
        flow = compute_flow(moved, img)
        dt = time.perf_counter() - t0
        epe = flow.endpoint_error(FlowField.constant(img.shape, -dx, -dy))
        if m:
            epe = epe[m:-m, m:-m]
        print(f"{dx:6.2f} {dy:6.2f}  {np.median(epe):7.3f} {epe.mean():7.3f} "
              f"{np.percentile(epe, 95):7.3f}  {dt:7.2f}")


if __name__ == "__main__":
    main()
