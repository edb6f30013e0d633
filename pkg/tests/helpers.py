"""Shared fixture builders: dyadic random data, toy networks, synthetic
datasets, random graphs for serialization tests, and tiny image encoders.

Values are drawn on dyadic grids (k/16, k/64): float rounding is monotone, so
grid-separated activations can never swap order under contrast scaling, which
keeps exact-match assertions exact instead of flaky.
"""

import os
import struct
import zlib

import numpy as np

from contrastprobe import (
    AffineParams,
    ConvWeights,
    DenseParams,
    LayerNode,
    MaxPoolParams,
    ModelGraph,
    Preprocess,
    Tensor,
    execute,
)


def rel_err(got, want) -> float:
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    scale = max(float(np.max(np.abs(want))), 1e-30)
    return float(np.max(np.abs(got - want))) / scale


def grid_values(rng, shape, grid=64, span=512):
    """Random dyadic floats k/grid with |k| <= span, exactly f32-representable."""
    k = rng.integers(-span, span + 1, size=shape)
    return (k / grid).astype(np.float32)


def grid_tensor(rng, h, w, c, grid=64, span=512) -> Tensor:
    return Tensor(grid_values(rng, (h, w, c), grid, span))


def _zero_sum_rows(rng, rows, n, span):
    """Integer rows that each sum to exactly zero: paired (+k, -k) slots plus
    one zero slot when n is odd, shuffled."""
    out = np.zeros((rows, n), dtype=np.int64)
    half = n // 2
    for r in range(rows):
        vals = rng.integers(-span, span + 1, size=half)
        flat = np.concatenate([vals, -vals, [0]] if n % 2 else [vals, -vals])
        rng.shuffle(flat)
        out[r] = flat
    return out


def zero_sum_kernel(rng, kh, kw, cin, cout, grid=16, span=8):
    """Per-output-channel kernels whose weights sum to exactly zero.

    Integer pair construction makes the cancellation bitwise exact in f32.
    """
    w = _zero_sum_rows(rng, cout, kh * kw * cin, span)
    w32 = (w.T.reshape(kh, kw, cin, cout) / grid).astype(np.float32)
    assert all(abs(w32[..., co].astype(np.float64).sum()) == 0.0 for co in range(cout))
    return w32


def toy_invariant_net(seed=7, first_bias=0.0, input_hw=20, classes=10) -> ModelGraph:
    """Zero-sum first conv, no bias or shift anywhere: predictions and
    first-layer winners are provably contrast invariant. first_bias breaks it."""
    rng = np.random.default_rng(seed)
    c1 = ConvWeights(
        kh=3, kw=3, cin=3, cout=6,
        weights=zero_sum_kernel(rng, 3, 3, 3, 6),
        bias=np.full(6, first_bias, dtype=np.float32),
    )
    c2 = ConvWeights(
        kh=3, kw=3, cin=6, cout=8,
        weights=grid_values(rng, (3, 3, 6, 8), grid=16, span=8),
        bias=np.zeros(8, dtype=np.float32),
    )
    pooled = (input_hw - 4) // 2
    # Zero-sum dense rows cancel the common-mode (all-positive) component of
    # the pooled activations, so class predictions spread instead of piling
    # onto one row; homogeneity is untouched (still bias-free).
    d = DenseParams(
        weights=(_zero_sum_rows(rng, classes, pooled * pooled * 8, 8) / 64).astype(np.float32),
        bias=np.zeros(classes, dtype=np.float32),
    )
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
    return ModelGraph(
        nodes=nodes,
        input_shape=(input_hw, input_hw, 3),
        class_count=classes,
        probe_ids=("conv1", "conv2"),
        preprocess=Preprocess(resize=0, crop="center",
                              mean=np.zeros(3, np.float32), scale=np.ones(3, np.float32)),
    )


def with_first_conv_bias(g: ModelGraph, bias_value: float) -> ModelGraph:
    """Copy of the graph with a constant bias injected into its first conv."""
    first = g.conv_ids()[0]
    nodes = []
    for n in g.nodes:
        if n.id == first:
            p = n.params
            nodes.append(LayerNode(id=n.id, kind=n.kind, inputs=n.inputs, params=ConvWeights(
                kh=p.kh, kw=p.kw, cin=p.cin, cout=p.cout, weights=p.weights,
                bias=np.full(p.cout, bias_value, dtype=np.float32),
                stride=p.stride, padding=p.padding,
            )))
        else:
            nodes.append(n)
    return ModelGraph(nodes=nodes, input_shape=g.input_shape, class_count=g.class_count,
                      probe_ids=g.probe_ids, preprocess=g.preprocess)


def write_ppm(path, u8):
    h, w, c = u8.shape
    assert c == 3 and u8.dtype == np.uint8
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(u8.tobytes())


def _png_chunk(ctype: bytes, body: bytes) -> bytes:
    return (struct.pack(">I", len(body)) + ctype + body
            + struct.pack(">I", zlib.crc32(ctype + body) & 0xFFFFFFFF))


def write_png(path, u8, row_filters=None):
    """Minimal PNG encoder (8-bit gray or RGB) with selectable row filters."""
    h, w = u8.shape[:2]
    channels = 1 if u8.ndim == 2 or u8.shape[2] == 1 else 3
    pixels = u8.reshape(h, w * channels).astype(np.int32)
    filters = row_filters if row_filters is not None else [0] * h
    raw = bytearray()
    for y in range(h):
        ftype = filters[y]
        raw.append(ftype)
        line = pixels[y]
        prev = pixels[y - 1] if y else np.zeros_like(line)
        for i in range(w * channels):
            a = int(line[i - channels]) if i >= channels else 0
            b = int(prev[i])
            c = int(prev[i - channels]) if (y and i >= channels) else 0
            if ftype == 0:
                v = line[i]
            elif ftype == 1:
                v = line[i] - a
            elif ftype == 2:
                v = line[i] - b
            elif ftype == 3:
                v = line[i] - (a + b) // 2
            else:
                p = a + b - c
                pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
                pred = a if (pa <= pb and pa <= pc) else (b if pb <= pc else c)
                v = line[i] - pred
            raw.append(v & 0xFF)
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 0 if channels == 1 else 2, 0, 0, 0)
    data = (b"\x89PNG\r\n\x1a\n" + _png_chunk(b"IHDR", ihdr)
            + _png_chunk(b"IDAT", zlib.compress(bytes(raw))) + _png_chunk(b"IEND", b""))
    with open(path, "wb") as f:
        f.write(data)


def synth_margin_dataset(g: ModelGraph, out_dir, n_images=100, seed=11):
    """Write n synthetic PPMs whose clean activations keep safe margins.

    Accepted images satisfy, on the unadjusted (100% contrast) forward pass:
    first-conv top-2 gap >= 1e-3 and |max| >= 1e-3 at every position, and
    logits top-2 gap >= 0.05. Margins dwarf float32 rounding, so scale
    invariance assertions are exact. Labels are the clean-net predictions.
    """
    rng = np.random.default_rng(seed)
    h, w, _ = g.input_shape
    first = g.conv_ids()[0]
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    made = 0
    while made < n_images:
        u8 = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
        decoded = Tensor(u8.astype(np.float32) / np.float32(255.0))
        values = execute(g, decoded)
        acts = values[first].arr.astype(np.float64)
        top2 = np.sort(acts, axis=2)[:, :, -2:]
        if np.min(top2[:, :, 1] - top2[:, :, 0]) < 1e-3:
            continue
        if np.min(np.abs(top2[:, :, 1])) < 1e-3:
            continue
        logits = np.sort(values["fc"].data.astype(np.float64))
        if logits[-1] - logits[-2] < 0.05:
            continue
        name = f"img{made:03d}.ppm"
        write_ppm(os.path.join(out_dir, name), u8)
        label = int(np.argmax(values[g.sink_id].data))
        rows.append(f"{name},{label}")
        made += 1
    with open(os.path.join(out_dir, "labels.csv"), "w") as f:
        f.write("\n".join(rows) + "\n")
    return os.path.join(out_dir, "labels.csv")


def diamond_graph(seed=3) -> ModelGraph:
    """Executable diamond DAG: source conv fans out to two branches that merge."""
    rng = np.random.default_rng(seed)

    def conv(cin, cout, k=1):
        return ConvWeights(kh=k, kw=k, cin=cin, cout=cout,
                           weights=grid_values(rng, (k, k, cin, cout), grid=16, span=8),
                           bias=grid_values(rng, (cout,), grid=16, span=8))

    nodes = [
        LayerNode(id="stem", kind="Conv", inputs=(), params=conv(3, 4, k=3)),
        LayerNode(id="a1", kind="Conv", inputs=("stem",), params=conv(4, 4)),
        LayerNode(id="b1", kind="ReLU", inputs=("stem",)),
        LayerNode(id="b2", kind="Conv", inputs=("b1",), params=conv(4, 4)),
        LayerNode(id="merge", kind="Add", inputs=("a1", "b2")),
        LayerNode(id="cat", kind="Concat", inputs=("merge", "stem")),
        LayerNode(id="flat", kind="Flatten", inputs=("cat",)),
        LayerNode(id="fc", kind="Dense", inputs=("flat",), params=DenseParams(
            weights=grid_values(rng, (5, 6 * 6 * 8), grid=64, span=8),
            bias=grid_values(rng, (5,), grid=16, span=8))),
        LayerNode(id="prob", kind="Softmax", inputs=("fc",)),
    ]
    return ModelGraph(nodes=nodes, input_shape=(8, 8, 3), class_count=5,
                      probe_ids=("stem", "a1", "b2"))


def random_graph(rng) -> ModelGraph:
    """Structurally valid random graph (never executed; serialization fodder)."""
    nodes = [LayerNode(id="n0", kind="Conv", inputs=(), params=_rand_conv(rng))]
    tips = ["n0"]
    for i in range(1, int(rng.integers(2, 9))):
        nid = f"n{i}"
        roll = rng.integers(0, 10)
        if roll < 3:
            node = LayerNode(id=nid, kind="Conv", inputs=(tips[-1],), params=_rand_conv(rng))
        elif roll < 5:
            node = LayerNode(id=nid, kind="ReLU", inputs=(tips[-1],))
        elif roll < 6:
            node = LayerNode(id=nid, kind="MaxPool", inputs=(tips[-1],),
                             params=MaxPoolParams(int(rng.integers(1, 4)), int(rng.integers(1, 4))))
        elif roll < 7:
            node = LayerNode(id=nid, kind="AffineChannel", inputs=(tips[-1],), params=AffineParams(
                scale=rng.standard_normal(4).astype(np.float32),
                shift=rng.standard_normal(4).astype(np.float32)))
        elif roll < 8 and len(tips) >= 2:
            node = LayerNode(id=nid, kind=str(rng.choice(["Add", "Concat"])), inputs=tuple(tips[-2:]))
            tips = tips[:-2] + [None]
        else:
            node = LayerNode(id=nid, kind="Flatten", inputs=(tips[-1],))
        nodes.append(node)
        if tips and tips[-1] is None:
            tips[-1] = nid
        elif rng.integers(0, 4) == 0:
            tips.append(nid)  # leave a dangling branch tip to merge later
        else:
            tips[-1] = nid
    # Merge any extra tips so exactly one sink remains.
    while len(tips) > 1:
        nid = f"m{len(nodes)}"
        nodes.append(LayerNode(id=nid, kind="Concat", inputs=tuple(tips[-2:])))
        tips = tips[:-2] + [nid]
    out_dim = int(rng.integers(2, 6))
    nodes.append(LayerNode(id="fc", kind="Dense", inputs=(tips[0],), params=DenseParams(
        weights=rng.standard_normal((out_dim, int(rng.integers(4, 40)))).astype(np.float32),
        bias=rng.standard_normal(out_dim).astype(np.float32))))
    nodes.append(LayerNode(id="prob", kind="Softmax", inputs=("fc",)))
    conv_ids = [n.id for n in nodes if n.kind == "Conv"]
    keep = [cid for cid in conv_ids if rng.integers(0, 2)][:5]
    return ModelGraph(
        nodes=nodes,
        input_shape=(int(rng.integers(1, 33)), int(rng.integers(1, 33)), int(rng.integers(1, 5))),
        class_count=out_dim,
        probe_ids=tuple(keep),
        preprocess=Preprocess(
            resize=int(rng.integers(0, 64)), crop=str(rng.choice(["center", "none"])),
            mean=rng.standard_normal(3).astype(np.float32),
            scale=rng.standard_normal(3).astype(np.float32)),
    )


def random_conv_case(rng, max_hw=16, max_c=8):
    """A random (input, weights) pair whose output dims tile exactly."""
    kh, kw = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    stride = int(rng.integers(1, 4))
    padding = int(rng.integers(0, 3))
    cin, cout = int(rng.integers(1, max_c + 1)), int(rng.integers(1, max_c + 1))
    max_oh = max(1, (max_hw + 2 * padding - kh) // stride + 1)
    oh = int(rng.integers(1, max_oh + 1))
    ow = int(rng.integers(1, max_oh + 1))
    h = stride * (oh - 1) + kh - 2 * padding
    w = stride * (ow - 1) + kw - 2 * padding
    if h < 1 or w < 1:
        return random_conv_case(rng, max_hw, max_c)
    x = Tensor(rng.standard_normal((h, w, cin)).astype(np.float32))
    cw = ConvWeights(
        kh=kh, kw=kw, cin=cin, cout=cout,
        weights=rng.standard_normal((kh, kw, cin, cout)).astype(np.float32),
        bias=rng.standard_normal(cout).astype(np.float32),
        stride=stride, padding=padding,
    )
    return x, cw


def random_pool_case(rng, max_hw=16, max_c=8):
    window = int(rng.integers(1, 5))
    stride = int(rng.integers(1, 4))
    oh = int(rng.integers(1, max(2, (max_hw - window) // stride + 2)))
    ow = int(rng.integers(1, max(2, (max_hw - window) // stride + 2)))
    h = stride * (oh - 1) + window
    w = stride * (ow - 1) + window
    c = int(rng.integers(1, max_c + 1))
    x = Tensor(rng.standard_normal((h, w, c)).astype(np.float32))
    return x, window, stride


def _rand_conv(rng) -> ConvWeights:
    kh, kw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    cin, cout = int(rng.integers(1, 4)), int(rng.integers(1, 5))
    return ConvWeights(
        kh=kh, kw=kw, cin=cin, cout=cout,
        weights=rng.standard_normal((kh, kw, cin, cout)).astype(np.float32),
        bias=rng.standard_normal(cout).astype(np.float32),
        stride=int(rng.integers(1, 3)), padding=int(rng.integers(0, 3)),
    )


def graphs_equal(g1: ModelGraph, g2: ModelGraph) -> bool:
    if (g1.input_shape != g2.input_shape or g1.class_count != g2.class_count
            or g1.probe_ids != g2.probe_ids):
        return False
    p1, p2 = g1.preprocess, g2.preprocess
    if (p1.resize, p1.crop) != (p2.resize, p2.crop):
        return False
    if p1.mean.tobytes() != p2.mean.tobytes() or p1.scale.tobytes() != p2.scale.tobytes():
        return False
    if len(g1.nodes) != len(g2.nodes):
        return False
    for a, b in zip(g1.nodes, g2.nodes):
        if (a.id, a.kind, a.inputs) != (b.id, b.kind, b.inputs):
            return False
        if a.kind == "Conv":
            pa, pb = a.params, b.params
            if (pa.kh, pa.kw, pa.cin, pa.cout, pa.stride, pa.padding) != \
               (pb.kh, pb.kw, pb.cin, pb.cout, pb.stride, pb.padding):
                return False
            if pa.weights.tobytes() != pb.weights.tobytes() or pa.bias.tobytes() != pb.bias.tobytes():
                return False
        elif a.kind == "MaxPool":
            if (a.params.window, a.params.stride) != (b.params.window, b.params.stride):
                return False
        elif a.kind == "AffineChannel":
            if a.params.scale.tobytes() != b.params.scale.tobytes() or \
               a.params.shift.tobytes() != b.params.shift.tobytes():
                return False
        elif a.kind == "Dense":
            if a.params.weights.tobytes() != b.params.weights.tobytes() or \
               a.params.bias.tobytes() != b.params.bias.tobytes():
                return False
    return True
