"""Command-line interface: sweep, accuracy, and winners subcommands.

Exit codes: 0 success, 1 aborted/failed run, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .consistency import BIN_KEY_HIGH_CONTRAST, BIN_KEY_MIN, MODE_ALL, MODE_GATED
from .contrast import ContrastSchedule, adjust_contrast, default_schedule
from .cpm import load_model_file
from .dataset import decode_image, load_dataset
from .errors import DatasetError, DimensionMismatch, DomainError, ModelFormatError, SweepAborted
from .model_graph import TAP_POST_RELU, TAP_PRE_RELU, execute, prediction_from_scores, relu
from .sweep import (
    SPLIT_BOTH,
    SPLIT_CORRECT,
    SPLIT_INCORRECT,
    SweepOptions,
    emit_reports,
    run_sweep,
)
from .winners import dump_winner_map, winner_map


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contrastprobe",
        description="Probe convolutional networks for contrast robustness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--model", required=True, help="CPM model file")
        p.add_argument("--data", required=True, help="image directory")
        p.add_argument("--labels", required=True, help="filename,class_id CSV")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--levels", default=None,
                       help="comma-separated contrast levels (default 1,3,5,7,10,13,15,30,50,75,100)")
        p.add_argument("--threads", type=int, default=1)

    p_sweep = sub.add_parser("sweep", help="full sweep: accuracy + winner-consistency reports")
    add_common(p_sweep)
    p_sweep.add_argument("--mode", choices=[MODE_GATED, MODE_ALL], default=MODE_GATED,
                         help="restrict pairs to same-prediction images (gated) or keep all")
    p_sweep.add_argument("--tap", choices=[TAP_PRE_RELU, TAP_POST_RELU], default=TAP_PRE_RELU)
    p_sweep.add_argument("--bin-key", choices=[BIN_KEY_HIGH_CONTRAST, BIN_KEY_MIN],
                         default=BIN_KEY_HIGH_CONTRAST)
    p_sweep.add_argument("--split", choices=[SPLIT_BOTH, SPLIT_CORRECT, SPLIT_INCORRECT],
                         default=SPLIT_BOTH)
    p_sweep.add_argument("--dump-winners", action="store_true")

    p_acc = sub.add_parser("accuracy", help="accuracy-vs-contrast curve only")
    add_common(p_acc)

    p_win = sub.add_parser("winners", help="single-image winner-map debug dump")
    p_win.add_argument("--model", required=True)
    p_win.add_argument("--image", required=True)
    p_win.add_argument("--level", type=int, required=True, help="contrast level in [1,100]")
    p_win.add_argument("--layer", required=True, help="Conv node id to probe")
    p_win.add_argument("--tap", choices=[TAP_PRE_RELU, TAP_POST_RELU], default=TAP_PRE_RELU)
    p_win.add_argument("--dump", default=None, help="also write the binary winner map here")
    return parser


def _parse_schedule(parser, text):
    if text is None:
        return default_schedule()
    try:
        return ContrastSchedule.parse(text)
    except ValueError as e:
        parser.error(str(e))


def _cmd_sweep(parser, args, metrics: bool) -> int:
    schedule = _parse_schedule(parser, args.levels)
    try:
        options = SweepOptions(
            schedule=schedule,
            mode=getattr(args, "mode", MODE_GATED),
            tap=getattr(args, "tap", TAP_PRE_RELU),
            bin_key=getattr(args, "bin_key", BIN_KEY_HIGH_CONTRAST),
            split=getattr(args, "split", SPLIT_BOTH),
            threads=args.threads,
            dump_winners=getattr(args, "dump_winners", False),
            metrics=metrics,
        )
    except ValueError as e:
        parser.error(str(e))
    try:
        model = load_model_file(args.model)
        dataset = load_dataset(args.data, args.labels, class_count=model.class_count)
        result = run_sweep(model, dataset, options)
        emit_reports(result, args.out)
    except SweepAborted as e:
        print(f"contrastprobe: sweep aborted: {e}", file=sys.stderr)
        return 1
    except (ModelFormatError, DatasetError, DimensionMismatch, DomainError, OSError) as e:
        print(f"contrastprobe: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    if result.failures:
        print(f"contrastprobe: {len(result.failures)} image(s) failed; see failures.csv",
              file=sys.stderr)
    return 0


def _cmd_winners(parser, args) -> int:
    if not 1 <= args.level <= 100:
        parser.error(f"--level must be in [1, 100], got {args.level}")
    try:
        model = load_model_file(args.model)
    except ModelFormatError as e:
        print(f"contrastprobe: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    if args.layer not in model.conv_ids():
        parser.error(f"--layer {args.layer!r} is not a Conv node of the model "
                     f"(conv nodes: {', '.join(model.conv_ids())})")
    try:
        from .model_graph import preprocess_image

        decoded = decode_image(args.image)
        adjusted = adjust_contrast(decoded, args.level)
        prepared = preprocess_image(model, adjusted)
        values = execute(model, prepared)
    except (DatasetError, DimensionMismatch, DomainError, OSError) as e:
        print(f"contrastprobe: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    tapped = values[args.layer]
    if args.tap == TAP_POST_RELU:
        tapped = relu(tapped)
    wmap = winner_map(tapped)
    sink = model.node(model.sink_id)
    logits = values[sink.inputs[0]].data
    probabilities = values[model.sink_id].data
    pred = prediction_from_scores(probabilities, model.class_count)
    doc = {
        "layer": args.layer,
        "level": args.level,
        "tap": args.tap,
        "height": wmap.height,
        "width": wmap.width,
        "winners": [[int(v) for v in row] for row in wmap.winners.tolist()],
        "prediction": {"class_id": pred.class_id, "confidence": pred.confidence},
        "logits": [float(v) for v in logits],
        "probabilities": [float(v) for v in probabilities],
    }
    if args.dump:
        with open(args.dump, "wb") as f:
            f.write(dump_winner_map(wmap))
    print(json.dumps(doc, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "sweep":
        return _cmd_sweep(parser, args, metrics=True)
    if args.command == "accuracy":
        return _cmd_sweep(parser, args, metrics=False)
    if args.command == "winners":
        return _cmd_winners(parser, args)
    parser.error(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
