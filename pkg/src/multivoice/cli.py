"""Command-line front end.

One verb per pipeline stage. All stages share a working directory,
given by --workdir or the DV2_WORKDIR environment variable.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import PRESET_NAMES, TrainConfig
from .pipeline import (
    ENGINES,
    EVALUABLE,
    TRAINABLE,
    SynthesisRequest,
    cmd_analyze_embeddings,
    cmd_evaluate,
    cmd_prepare,
    cmd_synthesize,
    cmd_train,
    default_workdir,
)


def _workdir(args) -> Path:
    return Path(args.workdir) if args.workdir else default_workdir()


def _load_config(args) -> TrainConfig:
    base = TrainConfig.preset(args.preset)
    if args.config:
        return TrainConfig.load(args.config, base=base)
    return base


def _run_prepare(args) -> int:
    report = cmd_prepare(args.manifest, args.lexicon, _workdir(args))
    if report.oov_words:
        print("words not in lexicon: " + ", ".join(report.oov_words),
              file=sys.stderr)
    for path in report.unreadable:
        print(f"unreadable audio: {path}", file=sys.stderr)
    if not report.ok:
        return 1
    state = "unchanged, skipped" if report.skipped else "prepared"
    print(f"{report.utterances} utterances from {report.speakers} "
          f"speakers {state}")
    return 0


def _run_train(args) -> int:
    report = cmd_train(args.model, _load_config(args), _workdir(args),
                       seed=args.seed)
    print(f"{report.model}: {report.iterations} iterations, loss "
          f"{report.first_loss:.4f} -> {report.last_loss:.4f}")
    print(f"checkpoint: {report.checkpoint}")
    print(f"log: {report.log_path}")
    return 0


def _run_synthesize(args) -> int:
    request = SynthesisRequest(args.text, args.speaker, args.engine,
                               args.seed, Path(args.out))
    report = cmd_synthesize(request, _workdir(args))
    print(f"wrote {report.wav_path} ({report.seconds:.2f} s, "
          f"{report.frames} frames)")
    if report.attention_flagged:
        print("warning: attention never focused; output is suspect",
              file=sys.stderr)
    return 0


def _run_evaluate(args) -> int:
    for row in cmd_evaluate(_workdir(args), args.which):
        print(row)
    return 0


def _run_analyze(args) -> int:
    work = _workdir(args)
    checkpoint = Path(args.checkpoint) if args.checkpoint \
        else work / "checkpoints" / "char2spec.ckpt"
    out_dir = Path(args.out) if args.out else work / "plots"
    tsv, png, _ = cmd_analyze_embeddings(checkpoint, args.metadata, out_dir)
    print(f"wrote {tsv}")
    print(f"wrote {png}")
    return 0


def _run_make_corpus(args) -> int:
    from .data.synthetic import generate_corpus
    paths = generate_corpus(args.root, n_speakers=args.speakers,
                            utterances_per_speaker=args.utterances,
                            seed=args.seed)
    print(f"wrote corpus under {paths.root}")
    print(f"manifest: {paths.manifest}")
    print(f"lexicon: {paths.lexicon}")
    print(f"speakers: {paths.speakers_tsv}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multivoice",
        description="Train and run the multi-speaker synthesis pipeline.")
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_workdir(p):
        p.add_argument("--workdir", default=None,
                       help="working directory (default: $DV2_WORKDIR)")

    p = sub.add_parser("prepare", help="extract features from a corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--lexicon", required=True)
    add_workdir(p)
    p.set_defaults(run=_run_prepare)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("model", choices=TRAINABLE)
    p.add_argument("--preset", default="smoke", choices=PRESET_NAMES)
    p.add_argument("--config", default=None,
                   help="config file overriding the preset")
    p.add_argument("--seed", type=int, default=0)
    add_workdir(p)
    p.set_defaults(run=_run_train)

    p = sub.add_parser("synthesize", help="render text to a WAV file")
    p.add_argument("--text", required=True)
    p.add_argument("--speaker", required=True)
    p.add_argument("--engine", default="deep_voice_2", choices=ENGINES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    add_workdir(p)
    p.set_defaults(run=_run_synthesize)

    p = sub.add_parser("evaluate", help="score a trained model")
    p.add_argument("which", choices=EVALUABLE)
    add_workdir(p)
    p.set_defaults(run=_run_evaluate)

    p = sub.add_parser("analyze-embeddings",
                       help="PCA of a checkpoint's speaker table")
    p.add_argument("--checkpoint", default=None,
                   help="default: the char2spec checkpoint in the workdir")
    p.add_argument("--metadata", default=None,
                   help="speaker_id TSV whose last column labels the plot")
    p.add_argument("--out", default=None,
                   help="output directory (default: workdir plots/)")
    add_workdir(p)
    p.set_defaults(run=_run_analyze)

    p = sub.add_parser("make-corpus",
                       help="generate the bundled synthetic corpus")
    p.add_argument("--root", required=True)
    p.add_argument("--speakers", type=int, default=2)
    p.add_argument("--utterances", type=int, default=25)
    p.add_argument("--seed", type=int, default=1234)
    p.set_defaults(run=_run_make_corpus)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except (ValueError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
