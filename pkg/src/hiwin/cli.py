"""Command-line surface.

Subcommands: ``pretrain-vdim``, ``build-isp``, ``compress``, ``pipeline``,
``visualize``, ``selftest``.  Configuration is flags-only; the single
environment input is ``HIWIN_SEED``, overridden by ``--seed``.

Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numerical
failure.  Diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .autodiff import NumericalError
from .checkpoint import load_checkpoint, save_checkpoint
from .encoder import EncoderSpec, encode, load_features, save_features
from .formats import DataFormatError
from .image_io import Image, build_image_pyramid, load_ppm, resize_to_patch_multiple, save_ppm, synth_corpus
from .numerics import pca_rgb
from .pipeline import PROJECTORS, PipelineConfig, init_mlp_weight, run_pipeline
from .selfcheck import run_all
from .token_org import flatten, save_index, save_tokens
from .vdim import DownsamplerParams, VdimParams, build_isp, pretrain_vdim
from .window_attn import AttnParams, HiwinConfig

__all__ = ["main", "main_entry"]


def _default_seed() -> int:
    raw = os.environ.get("HIWIN_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        return 0


def _add_seed(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--seed",
        type=int,
        default=_default_seed(),
        help="deterministic seed (default: HIWIN_SEED env var, else 0)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiwin",
        description="Guided feature-pyramid construction and window-attention token compression.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain-vdim", help="train the detail-injection weights")
    p.add_argument("--corpus", required=True, help='"synthetic" or a directory of .ppm files')
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--count", type=int, default=32, help="synthetic corpus size")
    p.add_argument("--size", type=int, default=112, help="synthetic image side")
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--d-proj", type=int, default=32)
    p.add_argument("--out", required=True, help="checkpoint path")
    _add_seed(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("build-isp", help="write the three feature-pyramid levels as ISPF files")
    p.add_argument("--image", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out-prefix", required=True)
    _add_seed(p)
    p.set_defaults(func=cmd_build_isp)

    p = sub.add_parser("compress", help="compress an image into visual tokens")
    p.add_argument("--image", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--projector", choices=PROJECTORS, default="hiwin")
    p.add_argument("--out", required=True, help="TOKS output path")
    p.add_argument("--threads", type=int, default=1)
    _add_seed(p)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("pipeline", help="full run; prints layout, grid, token count")
    p.add_argument("--image", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="TOKS output path")
    p.add_argument("--threads", type=int, default=1)
    _add_seed(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("visualize", help="render an ISPF feature file to PPM via PCA")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("selftest", help="run the built-in oracle and gradient checks")
    _add_seed(p)
    p.set_defaults(func=cmd_selftest)

    return parser


def _load_corpus(args) -> list[Image]:
    if args.corpus == "synthetic":
        return synth_corpus(args.seed, args.count, args.size)
    root = Path(args.corpus)
    paths = sorted(root.glob("*.ppm"))
    if not paths:
        raise DataFormatError(f"no .ppm files in {root}")
    return [resize_to_patch_multiple(load_ppm(p)) for p in paths]


def cmd_pretrain(args) -> int:
    corpus = _load_corpus(args)
    spec = EncoderSpec(channels=args.channels, seed=args.seed)
    vdim = VdimParams.init(d_proj=args.d_proj, seed=args.seed)
    down = DownsamplerParams.init(args.channels, seed=args.seed)
    result = pretrain_vdim(corpus, spec, vdim, down, steps=args.steps, lr=args.lr, batch=args.batch)
    config = HiwinConfig(channels=args.channels)
    attn = AttnParams.init(config, seed=args.seed)
    save_checkpoint(args.out, result.vdim, result.down, attn=attn, heads=config.heads)
    start = 1 if args.steps > 0 else 0
    for i, loss in enumerate(result.losses, start=start):
        print(f"{i} {loss:.10g}")
    return 0


def _load_setup(args):
    ckpt = load_checkpoint(args.ckpt)
    config = PipelineConfig(
        encoder=EncoderSpec(channels=ckpt.channels, seed=args.seed),
        hiwin=HiwinConfig(channels=ckpt.channels, heads=ckpt.heads),
        threads=getattr(args, "threads", 1),
    )
    attn = ckpt.attn
    if attn is None:
        attn = AttnParams.init(config.hiwin, seed=args.seed)
    return ckpt, config, attn


def cmd_build_isp(args) -> int:
    ckpt, config, _ = _load_setup(args)
    image = resize_to_patch_multiple(load_ppm(args.image))
    pyramid = build_image_pyramid(image, patch=config.encoder.patch)
    f0 = encode(image, config.encoder)
    isp = build_isp(f0, pyramid, ckpt.vdim)
    for level, fmap in enumerate(isp.levels):
        path = f"{args.out_prefix}.l{level}.ispf"
        save_features(fmap, path)
        print(f"level{level}: {fmap.width}x{fmap.height}x{fmap.channels} -> {path}")
    return 0


def _run_and_save(args, projector: str) -> int:
    ckpt, config, attn = _load_setup(args)
    image = load_ppm(args.image)
    mlp_weight = init_mlp_weight(config.hiwin.channels, seed=args.seed)
    result = run_pipeline(image, ckpt.vdim, attn, config, projector=projector, mlp_weight=mlp_weight)
    save_tokens(result.tokens, args.out)
    sequence = flatten(result.tokens)
    save_index(sequence, f"{args.out}.idx")
    if projector == "hiwin" and getattr(args, "command", "") == "pipeline":
        print(f"layout: {result.layout.cols}x{result.layout.rows}")
        print(f"grid: {result.grid[0]}x{result.grid[1]}")
    print(f"tokens: {sequence.tokens.shape[0]}")
    return 0


def cmd_compress(args) -> int:
    return _run_and_save(args, args.projector)


def cmd_pipeline(args) -> int:
    return _run_and_save(args, "hiwin")


def cmd_visualize(args) -> int:
    fmap = load_features(args.features)
    rendered = pca_rgb(fmap.data)
    save_ppm(Image(rendered), args.out)
    print(f"{fmap.width}x{fmap.height} -> {args.out}")
    return 0


def cmd_selftest(args) -> int:
    failures = 0
    for name, ok, detail in run_all(seed=args.seed):
        status = "ok" if ok else "FAIL"
        print(f"{status} {name}: {detail}")
        if not ok:
            failures += 1
    return 0 if failures == 0 else 4


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    try:
        return args.func(args)
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 4
    except (DataFormatError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
