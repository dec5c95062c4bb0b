"""Command-line entry point: gen-data, train, infer, eval, motion-labels, gradcheck."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from typing import List, Optional

import numpy as np

THREADS_ENV = "MAMNET_THREADS"
log = logging.getLogger("mamnet")


def _int_tuple(text: str):
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _global_args(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="random seed (default 0)")
    p.add_argument("--threads", type=int, default=d(None),
                   help=f"BLAS/OpenMP thread cap; overrides ${THREADS_ENV}")
    p.add_argument("--size", type=int, default=d(64), help="square frame size, divisible by 32")


def _model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--no-ffs", action="store_true", help="concat fusion instead of FFS")
    p.add_argument("--no-astm", action="store_true", help="temporal branch reuses spatial features")
    p.add_argument("--no-motion", action="store_true", help="drop the motion loss term")
    p.add_argument("--decoder-width", type=int, default=32)
    p.add_argument("--channels", type=_int_tuple, default=(16, 24, 32, 48, 64),
                   help="encoder widths of the five levels, comma separated")
    p.add_argument("--blocks", type=int, default=2, help="conv blocks per encoder level")
    p.add_argument("--memory-frames", type=int, default=2, choices=(2, 4))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mamnet", description=__doc__)
    _global_args(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_args(p, suppress=True)
        return p

    p = add("gen-data", "write a synthetic video dataset")
    p.add_argument("--videos", type=int, default=40)
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--shift-prob", type=float, default=0.0)
    p.add_argument("--distractors", type=int, default=2)
    p.add_argument("--out", required=True)

    p = add("train", "train stage 1 or stage 2")
    p.add_argument("--stage", type=int, choices=(1, 2), default=2)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--halving-period", type=int, default=8)
    p.add_argument("--clip-len", type=int, default=4)
    p.add_argument("--clip-grad", type=float, default=None)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--data", required=True, help="dataset root with <video>/frames and <video>/masks")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to resume or to start stage 2 from")
    _model_args(p)

    p = add("infer", "write saliency maps for every video")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--videos", required=True, help="root with <video>/frames")
    p.add_argument("--out", required=True)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--emit-motion", action="store_true")
    _model_args(p)

    p = add("eval", "score predicted maps against ground truth")
    p.add_argument("--pred", required=True, help="root with <video>/%%05d.pgm")
    p.add_argument("--gt", required=True, help="root with <video>/masks/%%05d.pgm")
    p.add_argument("--out", default=None, help="CSV path (default stdout)")

    p = add("motion-labels", "write XOR motion labels of consecutive masks")
    p.add_argument("--masks", required=True, help="root with <video>/masks")
    p.add_argument("--out", required=True)

    add("gradcheck", "finite-difference check of every op and the full model")
    return parser


def _model_config(args):
    from .config import BackboneConfig, ModelConfig
    return ModelConfig(backbone=BackboneConfig(input_size=(args.size, args.size), channels=args.channels,
                                               blocks_per_level=args.blocks),
                       decoder_width=args.decoder_width, memory_frames=args.memory_frames,
                       use_ffs=not args.no_ffs, use_astm=not args.no_astm, use_motion=not args.no_motion)


def _threads(args) -> Optional[int]:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    return int(env) if env else None


def _show(resolved: dict) -> None:
    print("config " + json.dumps(resolved, sort_keys=True, default=list), file=sys.stderr, flush=True)


# ---------------------------------------------------------------- commands

def cmd_gen_data(args) -> int:
    from .data.synthetic import SyntheticConfig, gen_synthetic_dataset
    cfg = SyntheticConfig(videos=args.videos, frames_per_video=args.frames, size=(args.size, args.size),
                          distractors=args.distractors, shift_prob=args.shift_prob, seed=args.seed)
    _show({"command": "gen-data", "out": args.out, **asdict(cfg)})
    videos = gen_synthetic_dataset(cfg, args.out)
    print(f"wrote {len(videos)} videos to {args.out}")
    return 0


def cmd_train(args) -> int:
    from .data.synthetic import load_dataset
    from .infer import save_model_config
    from .train import TrainConfig, train
    mc = _model_config(args)
    tc = TrainConfig(stage=args.stage, epochs=args.epochs, batch_size=args.batch, lr=args.lr,
                     halving_period=args.halving_period, seed=args.seed, clip_len=args.clip_len,
                     augment=not args.no_augment, clip_grad=args.clip_grad, out_dir=args.out,
                     resume=args.resume)
    _show({"command": "train", "data": args.data, "threads": _threads(args),
           "train": asdict(tc), "model": asdict(mc)})
    videos = load_dataset(args.data)
    if not videos:
        raise FileNotFoundError(f"no videos under {args.data}")
    save_model_config(mc, args.out)
    res = train(tc, mc, videos)
    last = res.history[-1] if res.history else {}
    print(f"checkpoint {res.checkpoint_path} after {len(res.history)} steps; last loss "
          f"{last.get('l_total', float('nan')):.4f}")
    return 0


def cmd_infer(args) -> int:
    from .infer import infer_dir, load_model, load_model_config
    mc = load_model_config(args.checkpoint) or _model_config(args)
    _show({"command": "infer", "checkpoint": args.checkpoint, "videos": args.videos, "out": args.out,
           "batch": args.batch, "emit_motion": args.emit_motion, "threads": _threads(args),
           "model": asdict(mc)})
    params, mc = load_model(args.checkpoint, mc)
    written = infer_dir(args.videos, args.out, params, mc, args.batch, args.emit_motion)
    print(f"wrote {sum(written.values())} maps for {len(written)} videos to {args.out}")
    return 0


def cmd_eval(args) -> int:
    from .data.pnm import read_pnm
    from .data.synthetic import list_videos, load_video
    from .metrics import evaluate
    _show({"command": "eval", "pred": args.pred, "gt": args.gt, "out": args.out})
    preds, gts, ids = [], [], []
    for vid in list_videos(args.gt):
        gt = load_video(args.gt, vid).masks
        for t in range(gt.shape[0]):
            path = os.path.join(args.pred, vid, f"{t + 1:05d}.pgm")
            if not os.path.exists(path):
                raise FileNotFoundError(f"missing prediction {path}")
            preds.append(read_pnm(path).astype(np.float64))
            gts.append(gt[t])
            ids.append((vid, t + 1))
    if not preds:
        raise FileNotFoundError(f"no ground-truth videos under {args.gt}")
    text = evaluate(preds, gts, ids).to_csv()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_motion_labels(args) -> int:
    from .data.pnm import read_pnm, write_mask
    from .motion import motion_label
    _show({"command": "motion-labels", "masks": args.masks, "out": args.out})
    vids = sorted(d for d in os.listdir(args.masks) if os.path.isdir(os.path.join(args.masks, d, "masks")))
    if not vids:
        raise FileNotFoundError(f"no <video>/masks directories under {args.masks}")
    total = 0
    for vid in vids:
        mdir = os.path.join(args.masks, vid, "masks")
        names = sorted(n for n in os.listdir(mdir) if n.endswith(".pgm"))
        masks = [(read_pnm(os.path.join(mdir, n)) > 0.5).astype(np.uint8) for n in names]
        for t in range(len(masks) - 1):
            write_mask(os.path.join(args.out, vid, f"{t + 1:05d}.pgm"), motion_label(masks[t], masks[t + 1]))
            total += 1
    print(f"wrote {total} motion labels for {len(vids)} videos to {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradsuite import run_suite
    _show({"command": "gradcheck", "seed": args.seed, "step": 1e-3})
    results = run_suite(args.seed)
    for r in results:
        extra = f" ({r.n_checked} coords, {r.n_skipped} at kinks skipped)" if r.n_skipped else ""
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name:24s} max rel err {r.max_rel_error:.2e} "
              f"< {r.tolerance:g}{extra}")
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "infer": cmd_infer, "eval": cmd_eval,
            "motion-labels": cmd_motion_labels, "gradcheck": cmd_gradcheck}


def _unknown_flags(parser: argparse.ArgumentParser, argv: List[str]) -> List[str]:
    known = set()
    stack = [parser]
    while stack:
        p = stack.pop()
        for action in p._actions:
            known.update(action.option_strings)
            if isinstance(action, argparse._SubParsersAction):
                stack.extend(action.choices.values())
    return [a for a in argv if a.startswith("-") and a.split("=")[0] not in known and not _is_number(a)]


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    unknown = _unknown_flags(parser, argv)
    if unknown:
        parser.print_usage(sys.stderr)
        print(f"mamnet: error: unrecognized arguments: {' '.join(unknown)}", file=sys.stderr)
        return 2
    args = parser.parse_args(argv)   # exits with status 2 on other usage errors
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s", stream=sys.stderr)
    if args.size % 32:
        print(f"mamnet: error: --size {args.size} must be divisible by 32", file=sys.stderr)
        return 2
    threads = _threads(args)
    try:
        if threads is not None:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=threads):
                return COMMANDS[args.command](args)
        return COMMANDS[args.command](args)
    except (OSError, ValueError, FloatingPointError) as exc:
        print(f"mamnet: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
