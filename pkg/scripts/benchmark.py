"""Per-stage pipeline timing over a range of image sizes.

    python scripts/benchmark.py --sizes 300x200 600x400 900x600 1500x1000
"""
import argparse
import time

from hdrfuse.fixtures import moving_square_spec, synthesize_stack
from hdrfuse.pipeline import STAGES, PipelineConfig, process


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", nargs="+", default=["300x200", "600x400", "900x600"])
    ap.add_argument("--frames", type=int, default=3)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    gains = [0.5 * 1.6 ** i for i in range(args.frames)]
    # warm the numba cache so the first row is not dominated by compilation
    warm, _ = synthesize_stack(moving_square_spec(96, 96, square=16, motion=10))
    process(warm, PipelineConfig(n_superpixels=16))

    print("size        N_s  " + "  ".join(f"{s[:8]:>8}" for s in STAGES) + "     total")
    for size in args.sizes:
        w, h = (int(v) for v in size.lower().split("x"))
        spec = moving_square_spec(h, w, motion=min(60, w // 6), gains=gains)
        stack, _ = synthesize_stack(spec)
        cfg = PipelineConfig(threads=args.threads)
        t0 = time.perf_counter()
        res = process(stack, cfg)
        total = time.perf_counter() - t0
        cols = "  ".join(f"{res.timing[s]:8.2f}" for s in STAGES)
        print(f"{size:<10} {res.superpixels.count:4d}  {cols}  {total:8.2f}")


if __name__ == "__main__":
    main()
