#!/usr/bin/env python3
"""Build desk-scale experiment assets: a small CPM model and a synthetic
PPM dataset labeled by the model's own full-contrast predictions.

Two model flavors:
  invariant  - zero-sum first-layer kernels, no bias anywhere; predictions
               are provably unchanged by the contrast remap.
  biased     - same weights plus a constant first-layer bias, which breaks
               the invariance at low contrast.

Usage:
  python3 scripts/make_toy_assets.py --out assets/ [--images 100] [--seed 7]
"""

import argparse
import os
import sys

import numpy as np

from contrastprobe import (
    ConvWeights,
    DenseParams,
    LayerNode,
    MaxPoolParams,
    ModelGraph,
    Preprocess,
    Tensor,
    execute,
    save_model_file,
)


def zero_sum_rows(rng, rows, n, span):
    """Integer rows summing to exactly zero: shuffled (+k, -k) pairs."""
    out = np.zeros((rows, n), dtype=np.int64)
    half = n // 2
    for r in range(rows):
        vals = rng.integers(-span, span + 1, size=half)
        flat = np.concatenate([vals, -vals, [0]] if n % 2 else [vals, -vals])
        rng.shuffle(flat)
        out[r] = flat
    return out


def grid_values(rng, shape, grid, span):
    return (rng.integers(-span, span + 1, size=shape) / grid).astype(np.float32)


def build_model(seed=7, first_bias=0.0, input_hw=20, classes=10) -> ModelGraph:
    rng = np.random.default_rng(seed)
    c1 = ConvWeights(kh=3, kw=3, cin=3, cout=6,
                     weights=(zero_sum_rows(rng, 6, 27, 8).T.reshape(3, 3, 3, 6) / 16)
                     .astype(np.float32),
                     bias=np.full(6, first_bias, dtype=np.float32))
    c2 = ConvWeights(kh=3, kw=3, cin=6, cout=8,
                     weights=grid_values(rng, (3, 3, 6, 8), 16, 8),
                     bias=np.zeros(8, dtype=np.float32))
    pooled = (input_hw - 4) // 2
    d = DenseParams(weights=(zero_sum_rows(rng, classes, pooled * pooled * 8, 8) / 64)
                    .astype(np.float32),
                    bias=np.zeros(classes, dtype=np.float32))
    nodes = [
        LayerNode(id="conv1", kind="Conv", inputs=(), params=c1),
        LayerNode(id="relu1", kind="ReLU", inputs=("conv1",)),
        LayerNode(id="conv2", kind="Conv", inputs=("relu1",), params=c2),
        LayerNode(id="relu2", kind="ReLU", inputs=("conv2",)),
        LayerNode(id="pool", kind="MaxPool", inputs=("relu2",), params=MaxPoolParams(2, 2)),
        LayerNode(id="flat", kind="Flatten", inputs=("pool",)),
        LayerNode(id="fc", kind="Dense", inputs=("flat",), params=d),
        LayerNode(id="prob", kind="Softmax", inputs=("fc",)),
    ]
    return ModelGraph(nodes=nodes, input_shape=(input_hw, input_hw, 3), class_count=classes,
                      probe_ids=("conv1", "conv2"), preprocess=Preprocess())


def write_ppm(path, u8):
    h, w, _ = u8.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(u8.tobytes())


def build_dataset(model: ModelGraph, out_dir, n_images=100, seed=11):
    """Random byte images filtered for safe activation margins; labels are the
    model's own full-contrast predictions, so the invariant model scores 1.0."""
    rng = np.random.default_rng(seed)
    h, w, _ = model.input_shape
    first = model.conv_ids()[0]
    os.makedirs(out_dir, exist_ok=True)
    rows, made = [], 0
    while made < n_images:
        u8 = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
        decoded = Tensor(u8.astype(np.float32) / np.float32(255.0))
        values = execute(model, decoded)
        top2 = np.sort(values[first].arr.astype(np.float64), axis=2)[:, :, -2:]
        if np.min(top2[:, :, 1] - top2[:, :, 0]) < 1e-3 or np.min(np.abs(top2[:, :, 1])) < 1e-3:
            continue
        logits = np.sort(values["fc"].data.astype(np.float64))
        if logits[-1] - logits[-2] < 0.05:
            continue
        name = f"img{made:03d}.ppm"
        write_ppm(os.path.join(out_dir, name), u8)
        rows.append(f"{name},{int(np.argmax(values[model.sink_id].data))}")
        made += 1
    labels = os.path.join(out_dir, "labels.csv")
    with open(labels, "w") as f:
        f.write("\n".join(rows) + "\n")
    return labels


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", required=True, help="asset directory to create")
    ap.add_argument("--images", type=int, default=100)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--bias", type=float, default=0.5, help="first-layer bias of the biased model")
    args = ap.parse_args(argv)

    os.makedirs(args.out, exist_ok=True)
    invariant = build_model(seed=args.seed)
    biased = build_model(seed=args.seed, first_bias=args.bias)
    save_model_file(invariant, os.path.join(args.out, "invariant.cpm"))
    save_model_file(biased, os.path.join(args.out, "biased.cpm"))
    labels = build_dataset(invariant, os.path.join(args.out, "images"),
                           n_images=args.images, seed=args.seed + 4)
    print(f"wrote {args.out}/invariant.cpm, {args.out}/biased.cpm")
    print(f"wrote {args.images} images and {labels}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
