"""``hdrfuse`` command line: fuse, align, score and synth subcommands.

Exit codes: 0 success, 2 bad arguments, 3 I/O failure, 4 pipeline stage failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .imgio import UnsupportedImageError, load_image, load_stack, save_image
from .pipeline import PipelineConfig, PipelineError, dump, load_config, process, align_stack

log = logging.getLogger("hdrfuse")

EXIT_OK = 0
EXIT_ARGS = 2
EXIT_IO = 3
EXIT_STAGE = 4


class _ArgError(Exception):
    pass


def _add_pipeline_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("images", nargs="+", help="input exposures, darkest first")
    p.add_argument("--ref", type=int, default=None, help="reference index (default: middle image)")
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--threads", type=int, default=None, help="max inputs aligned in parallel")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-superpixels", type=int, default=None)
    p.add_argument("--no-feather", action="store_true", help="paste corrected superpixels without blending")
    p.add_argument("--check-order", action="store_true",
                   help="warn when mean luminance does not increase with argument order")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdrfuse", description="Ghost-free multi-exposure fusion.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fuse", help="align and fuse an exposure stack")
    _add_pipeline_args(p)
    p.add_argument("--out", required=True, help="fused image path (.png/.ppm)")
    p.add_argument("--dump-dir", help="write intermediate products here")

    p = sub.add_parser("align", help="align a stack to its reference without fusing")
    _add_pipeline_args(p)
    p.add_argument("--out-dir", required=True, help="directory for aligned_k.png")
    p.add_argument("--dump-dir", help="write intermediate products here")

    p = sub.add_parser("score", help="Q_S quality of a fused image")
    p.add_argument("images", nargs="+", help="input exposures, darkest first")
    p.add_argument("--fused", required=True)

    p = sub.add_parser("synth", help="write a synthetic stack with ground truth")
    p.add_argument("--spec", required=True, help="JSON stack description")
    p.add_argument("--out-dir", required=True)
    return parser


def _config_from_args(args) -> PipelineConfig:
    try:
        cfg = load_config(args.config) if args.config else PipelineConfig()
        return cfg.updated(threads=args.threads, seed=args.seed, n_superpixels=args.n_superpixels,
                           feather=0 if args.no_feather else None)
    except ValueError as exc:
        raise _ArgError(str(exc)) from exc


def _load(args):
    if len(args.images) < 2:
        raise _ArgError("need at least two input images")
    ref = len(args.images) // 2 if args.ref is None else args.ref
    if not 0 <= ref < len(args.images):
        raise _ArgError(f"--ref {ref} out of range for {len(args.images)} images")
    stack = load_stack(args.images, ref)
    if args.check_order and not stack.is_monotone():
        lum = ", ".join(f"{m:.3f}" for m in stack.mean_luminances())
        log.warning("mean luminances are not increasing in argument order: %s", lum)
    return stack


def _cmd_fuse(args) -> int:
    cfg = _config_from_args(args)
    stack = _load(args)
    result = process(stack, cfg, args.dump_dir)
    save_image(result.fused, args.out)
    log.info("wrote %s", args.out)
    return EXIT_OK


def _cmd_align(args) -> int:
    cfg = _config_from_args(args)
    stack = _load(args)
    result = align_stack(stack, cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k, im in enumerate(result.aligned):
        save_image(im, out / f"aligned_{k}.png")
    if args.dump_dir:
        dump(result, args.dump_dir, with_fused=False)
    return EXIT_OK


def _cmd_score(args) -> int:
    from .metrics import q_s_stack

    images = [load_image(p) for p in args.images]
    fused = load_image(args.fused)
    try:
        report = q_s_stack(images, fused)
    except ValueError as exc:
        raise _ArgError(str(exc)) from exc
    if report.pairs > 1:
        print(f"# Q_S averaged over {report.pairs} consecutive exposure pairs", file=sys.stderr)
    print(report.line())
    return EXIT_OK


def _cmd_synth(args) -> int:
    from .fixtures import spec_from_dict, synthesize_stack, write_stack

    text = Path(args.spec).read_text(encoding="utf-8")
    try:
        spec = spec_from_dict(json.loads(text))
        stack, truth = synthesize_stack(spec)
    except (ValueError, KeyError, TypeError) as exc:
        raise _ArgError(f"bad synth spec: {exc}") from exc
    write_stack(stack, truth, args.out_dir)
    return EXIT_OK


COMMANDS = {"fuse": _cmd_fuse, "align": _cmd_align, "score": _cmd_score, "synth": _cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except _ArgError as exc:
        print(f"hdrfuse: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except PipelineError as exc:
        print(f"hdrfuse: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (OSError, UnsupportedImageError) as exc:
        print(f"hdrfuse: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # e.g. mismatched image sizes caught while building the stack
        print(f"hdrfuse: error: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
