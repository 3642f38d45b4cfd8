"""``cospeech`` command line.

Exit codes: 0 success, 2 validation failure (bad config, missing or
malformed inputs, checkpoint mismatch), 3 runtime error.
"""

import argparse
import logging
import sys

from . import pipeline
from .config import load_config
from .exceptions import CoSpeechError

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3


def _common(p):
    p.add_argument("--config", help="INI run configuration")
    p.add_argument("--seed", type=int, help="overrides [run] seed")
    p.add_argument("--out", required=True, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="cospeech", description="Co-speech face and gesture synthesis")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a procedural corpus")
    _common(p)

    p = sub.add_parser("preprocess", help="raw clips to processed windows")
    _common(p)
    p.add_argument("--corpus", help="raw corpus root (default: [data] corpus)")

    for name in ("train", "train-phoneme"):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} from processed windows")
        _common(p)
        p.add_argument("--data", help="processed corpus file or directory (default: [data] processed)")
        p.add_argument("--epochs", type=int, help="overrides [optim] epochs")
        if name == "train":
            p.add_argument("--resume", action="store_true", help="continue from latest.ckpt in --out")

    p = sub.add_parser("synthesize", help="audio to an animation file")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--audio", required=True, help="16-bit PCM wav")
    p.add_argument("--transcript", help="word/start_frame/end_frame TSV")
    p.add_argument("--speaker", type=int, default=0)
    p.add_argument("--seed-motion", help="raw clip directory whose first frames seed the motion")
    p.add_argument("--phoneme", help="phoneme predictor checkpoint for the lips")

    p = sub.add_parser("evaluate", help="metric report on a processed split")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="processed corpus file or directory (default: [data] processed)")
    p.add_argument("--split", default="test")
    p.add_argument("--identity", action="store_true", help="score ground truth against itself")
    return parser


def _pick(value, fallback, what):
    v = value or fallback
    if not v:
        raise CoSpeechError(f"no {what} given on the command line or in the config")
    return v


def run(args):
    cfg = load_config(args.config).with_seed(args.seed)
    seed = cfg.run.seed
    if args.command == "gen-synthetic":
        pipeline.cmd_gen_synthetic(cfg, args.out)
    elif args.command == "preprocess":
        pipeline.cmd_preprocess(cfg, _pick(args.corpus, cfg.data.corpus, "corpus"), args.out)
    elif args.command == "train":
        pipeline.cmd_train(cfg, _pick(args.data, cfg.data.processed, "processed corpus"), args.out,
                           resume=args.resume, epochs=args.epochs)
    elif args.command == "train-phoneme":
        pipeline.cmd_train_phoneme(cfg, _pick(args.data, cfg.data.processed, "processed corpus"), args.out,
                                   epochs=args.epochs)
    elif args.command == "synthesize":
        pipeline.cmd_synthesize(cfg, args.checkpoint, args.audio, args.out, transcript=args.transcript,
                                speaker=args.speaker, seed_motion=args.seed_motion, phoneme=args.phoneme,
                                seed=seed, check_plan=args.config is not None)
    elif args.command == "evaluate":
        report = pipeline.cmd_evaluate(cfg, args.checkpoint, _pick(args.data, cfg.data.processed, "processed corpus"),
                                       args.out, split=args.split, identity=args.identity)
        print(report.to_csv(), end="")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (CoSpeechError, FileNotFoundError, NotADirectoryError) as exc:
        if isinstance(exc, RuntimeError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
