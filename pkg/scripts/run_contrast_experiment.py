#!/usr/bin/env python3
"""Run the contrast sweep on the toy assets and print the headline tables:
accuracy per contrast level and per-layer identical-winner aggregates, for
the invariant model and its bias-broken twin.

Usage:
  python3 scripts/make_toy_assets.py --out assets/
  python3 scripts/run_contrast_experiment.py --assets assets/ --out results/
"""

import argparse
import os
import sys

from contrastprobe import SweepOptions, emit_reports, load_dataset, load_model_file, run_sweep


def show(tag, result):
    print(f"\n== {tag} ==")
    print("accuracy by contrast level:")
    print("  " + "  ".join(f"{a.level}%:{a.accuracy:.2f}" for a in result.accuracy))
    print("identical-winner aggregate per probed layer (mean over level pairs):")
    for lid in result.report.layer_ids:
        v = result.aggregates[lid]
        print(f"  {lid}: {'n/a' if v is None else f'{v:.3f}'}")
    print(f"reference curve vs {result.reference}% contrast:")
    for lid, curve in result.curves.items():
        cells = "  ".join("n/a" if v is None else f"{v:.2f}" for v in curve)
        print(f"  {lid}: {cells}")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--assets", required=True, help="directory from make_toy_assets.py")
    ap.add_argument("--out", required=True, help="report output directory")
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--mode", choices=["gated", "all"], default="gated")
    args = ap.parse_args(argv)

    options = SweepOptions(threads=args.threads, mode=args.mode)
    for tag in ("invariant", "biased"):
        model = load_model_file(os.path.join(args.assets, f"{tag}.cpm"))
        data_dir = os.path.join(args.assets, "images")
        dataset = load_dataset(data_dir, os.path.join(data_dir, "labels.csv"),
                               class_count=model.class_count)
        result = run_sweep(model, dataset, options)
        out_dir = os.path.join(args.out, tag)
        emit_reports(result, out_dir)
        show(tag, result)
        print(f"reports written to {out_dir}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
