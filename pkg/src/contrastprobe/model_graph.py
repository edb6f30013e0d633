"""DAG model representation, forward execution with activation taps, classification.

A graph is a list of layer nodes already in topological order, with exactly one
source (the node that consumes the preprocessed image) and one sink (a Softmax
node producing class scores). Up to five Conv nodes are designated as probe
points whose raw outputs are captured during a forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CyclicGraph, DimensionMismatch, ShapeMismatch
from .tensor_ops import (
    ConvWeights,
    Tensor,
    affine_channel,
    conv2d,
    dense,
    maxpool2d,
    relu,
    softmax,
)

KINDS = ("Conv", "ReLU", "MaxPool", "AffineChannel", "Dense", "Softmax", "Concat", "Add", "Flatten")

TAP_PRE_RELU = "pre-relu"
TAP_POST_RELU = "post-relu"


@dataclass(frozen=True, eq=False)
class MaxPoolParams:
    window: int
    stride: int


@dataclass(frozen=True, eq=False)
class AffineParams:
    scale: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scale", np.ascontiguousarray(self.scale, dtype=np.float32).reshape(-1))
        object.__setattr__(self, "shift", np.ascontiguousarray(self.shift, dtype=np.float32).reshape(-1))
        if self.scale.size != self.shift.size:
            raise ShapeMismatch("affine scale and shift lengths differ")


@dataclass(frozen=True, eq=False)
class DenseParams:
    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float32)
        if w.ndim != 2:
            raise ShapeMismatch(f"dense weights must be 2-d, got {w.shape}")
        b = np.ascontiguousarray(self.bias, dtype=np.float32).reshape(-1)
        if b.size != w.shape[0]:
            raise ShapeMismatch(f"dense bias length {b.size} != out dim {w.shape[0]}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True, eq=False)
class LayerNode:
    id: str
    kind: str
    inputs: tuple[str, ...] = ()
    params: object = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        object.__setattr__(self, "inputs", tuple(self.inputs))


@dataclass(frozen=True, eq=False)
class Preprocess:
    """Model-specific input preparation, stored in the model file.

    resize: shortest-side bilinear target in pixels, 0 to skip.
    crop: "center" crops to the graph input shape, "none" requires exact dims.
    mean/scale: per-channel normalization, out = (in - mean) * scale.
    """

    resize: int = 0
    crop: str = "center"
    mean: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.float32))
    scale: np.ndarray = field(default_factory=lambda: np.ones(3, dtype=np.float32))

    def __post_init__(self):
        if self.crop not in ("center", "none"):
            raise ValueError(f"unknown crop policy {self.crop!r}")
        if self.resize < 0:
            raise ValueError("resize target must be >= 0")
        object.__setattr__(self, "mean", np.ascontiguousarray(self.mean, dtype=np.float32).reshape(-1))
        object.__setattr__(self, "scale", np.ascontiguousarray(self.scale, dtype=np.float32).reshape(-1))


@dataclass(frozen=True, eq=False)
class Prediction:
    class_id: int
    confidence: float


@dataclass(eq=False)
class ModelGraph:
    nodes: list[LayerNode]
    input_shape: tuple[int, int, int]  # (H, W, C)
    class_count: int
    probe_ids: tuple[str, ...] = ()
    preprocess: Preprocess = field(default_factory=Preprocess)

    def __post_init__(self):
        self.probe_ids = tuple(self.probe_ids)
        validate_graph(self)

    def node(self, node_id: str) -> LayerNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def conv_ids(self) -> list[str]:
        return [n.id for n in self.nodes if n.kind == "Conv"]

    @property
    def source_id(self) -> str:
        return next(n.id for n in self.nodes if not n.inputs)

    @property
    def sink_id(self) -> str:
        referenced = {i for n in self.nodes for i in n.inputs}
        return next(n.id for n in self.nodes if n.id not in referenced)


def validate_graph(g: ModelGraph) -> None:
    """Structural invariants: unique ids, DAG in topological order, one source,
    one Softmax sink, probe ids are Conv nodes listed in topological order."""
    if not g.nodes:
        raise CyclicGraph("graph has no nodes")
    ids = [n.id for n in g.nodes]
    if len(set(ids)) != len(ids):
        raise CyclicGraph("duplicate node ids")
    position = {nid: i for i, nid in enumerate(ids)}
    for i, n in enumerate(g.nodes):
        for ref in n.inputs:
            if ref not in position:
                raise CyclicGraph(f"node {n.id!r} references unknown node {ref!r}")
            if position[ref] >= i:
                # A forward or self reference in a declared-topological list is
                # either a cycle or an invalid linearization; both are rejected.
                raise CyclicGraph(f"node {n.id!r} references {ref!r} out of topological order")
    sources = [n for n in g.nodes if not n.inputs]
    if len(sources) != 1:
        raise CyclicGraph(f"graph must have exactly one source, found {len(sources)}")
    referenced = {i for n in g.nodes for i in n.inputs}
    sinks = [n for n in g.nodes if n.id not in referenced]
    if len(sinks) != 1:
        raise CyclicGraph(f"graph must have exactly one sink, found {len(sinks)}")
    if sinks[0].kind != "Softmax":
        raise CyclicGraph(f"sink must be a Softmax node, got {sinks[0].kind}")
    if len(g.input_shape) != 3 or any(d < 1 for d in g.input_shape):
        raise ShapeMismatch(f"input shape must be positive (H, W, C), got {g.input_shape}")
    if g.class_count < 1:
        raise ShapeMismatch("class_count must be >= 1")
    conv_ids = [n.id for n in g.nodes if n.kind == "Conv"]
    if len(g.probe_ids) > 5:
        raise ShapeMismatch("at most 5 probe ids allowed")
    conv_set = set(conv_ids)
    for pid in g.probe_ids:
        if pid not in conv_set:
            raise ShapeMismatch(f"probe id {pid!r} is not a Conv node")
    order = {nid: position[nid] for nid in g.probe_ids}
    if list(g.probe_ids) != sorted(g.probe_ids, key=order.get):
        raise ShapeMismatch("probe ids must be listed in topological order")
    for n in g.nodes:
        _check_params(n)


def _check_params(n: LayerNode) -> None:
    expect = {
        "Conv": ConvWeights,
        "MaxPool": MaxPoolParams,
        "AffineChannel": AffineParams,
        "Dense": DenseParams,
    }
    if n.kind in expect:
        if not isinstance(n.params, expect[n.kind]):
            raise ShapeMismatch(f"node {n.id!r} ({n.kind}) needs {expect[n.kind].__name__} params")
    elif n.params is not None:
        raise ShapeMismatch(f"node {n.id!r} ({n.kind}) takes no params")
    if n.kind in ("Concat", "Add") and len(n.inputs) < 2:
        raise ShapeMismatch(f"node {n.id!r} ({n.kind}) needs >= 2 inputs")
    if n.kind not in ("Concat", "Add") and len(n.inputs) > 1:
        raise ShapeMismatch(f"node {n.id!r} ({n.kind}) takes a single input")


def node_depths(g: ModelGraph) -> dict[str, int]:
    """Longest-path depth from the source (source = 0)."""
    depth: dict[str, int] = {}
    for n in g.nodes:
        depth[n.id] = 0 if not n.inputs else 1 + max(depth[i] for i in n.inputs)
    return depth


def default_probe_ids(g: ModelGraph) -> list[str]:
    """The first min(5, #Conv) Conv nodes ordered by depth from the source,
    declaration order breaking ties at equal depth."""
    convs = g.conv_ids()
    if not convs:
        raise ShapeMismatch("graph has no Conv nodes to probe")
    depth = node_depths(g)
    decl = {n.id: i for i, n in enumerate(g.nodes)}
    ranked = sorted(convs, key=lambda nid: (depth[nid], decl[nid]))
    return ranked[:5]


def _apply_node(n: LayerNode, ins: list[Tensor]) -> Tensor:
    try:
        if n.kind == "Conv":
            return conv2d(ins[0], n.params)
        if n.kind == "ReLU":
            return relu(ins[0])
        if n.kind == "MaxPool":
            return maxpool2d(ins[0], n.params.window, n.params.stride)
        if n.kind == "AffineChannel":
            return affine_channel(ins[0], n.params.scale, n.params.shift)
        if n.kind == "Dense":
            out = dense(ins[0], n.params.weights, n.params.bias)
            return Tensor(out.reshape(1, 1, -1))
        if n.kind == "Softmax":
            return Tensor(softmax(ins[0].data).reshape(1, 1, -1))
        if n.kind == "Flatten":
            return Tensor(ins[0].data.reshape(1, 1, -1).copy())
        if n.kind == "Concat":
            h, w = ins[0].height, ins[0].width
            for t in ins[1:]:
                if (t.height, t.width) != (h, w):
                    raise ShapeMismatch("concat inputs disagree on height/width")
            return Tensor(np.concatenate([t.arr for t in ins], axis=2))
        if n.kind == "Add":
            shape = ins[0].arr.shape
            for t in ins[1:]:
                if t.arr.shape != shape:
                    raise ShapeMismatch("add inputs disagree on dims")
            acc = ins[0].arr.astype(np.float64)
            for t in ins[1:]:
                acc += t.arr
            return Tensor(acc.astype(np.float32))
    except DimensionMismatch as e:
        if isinstance(e, ShapeMismatch):
            raise
        raise ShapeMismatch(f"node {n.id!r}: {e}") from e
    raise ShapeMismatch(f"unknown kind {n.kind!r}")


def execute(g: ModelGraph, image: Tensor) -> dict[str, Tensor]:
    """Run every node in topological order; returns all node outputs by id."""
    if image.arr.shape != g.input_shape:
        raise ShapeMismatch(
            f"image shape {image.arr.shape} != model input shape {g.input_shape}"
        )
    values: dict[str, Tensor] = {}
    for n in g.nodes:
        ins = [values[i] for i in n.inputs] if n.inputs else [image]
        values[n.id] = _apply_node(n, ins)
    return values


def prediction_from_scores(scores: np.ndarray, class_count: int) -> Prediction:
    flat = np.asarray(scores, dtype=np.float32).reshape(-1)
    if flat.size != class_count:
        raise ShapeMismatch(f"sink produced {flat.size} scores, class_count is {class_count}")
    # np.argmax returns the first maximum: ties break to the lowest class index.
    cid = int(np.argmax(flat))
    return Prediction(class_id=cid, confidence=float(flat[cid]))


def forward_with_taps(
    g: ModelGraph,
    image: Tensor,
    tap: str = TAP_PRE_RELU,
    probe_ids: "tuple[str, ...] | None" = None,
) -> tuple[Prediction, dict[str, Tensor]]:
    """Classify one preprocessed image, capturing probed Conv outputs.

    Taps are the raw conv outputs (bias included, before any nonlinearity);
    tap="post-relu" applies ReLU to the tapped copy instead.
    """
    if tap not in (TAP_PRE_RELU, TAP_POST_RELU):
        raise ValueError(f"unknown tap mode {tap!r}")
    probes = g.probe_ids if probe_ids is None else tuple(probe_ids)
    values = execute(g, image)
    taps = {}
    for pid in probes:
        t = values[pid]
        taps[pid] = relu(t) if tap == TAP_POST_RELU else t
    pred = prediction_from_scores(values[g.sink_id].data, g.class_count)
    return pred, taps


def _resize_bilinear(arr: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Half-pixel-center bilinear resampling, float64 weights, float32 out."""
    h, w, c = arr.shape
    if (new_h, new_w) == (h, w):
        return arr.copy()
    src = arr.astype(np.float64)

    def axis_coords(n_out, n_in):
        coords = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        lo = np.floor(coords).astype(np.int64)
        frac = coords - lo
        lo0 = np.clip(lo, 0, n_in - 1)
        lo1 = np.clip(lo + 1, 0, n_in - 1)
        return lo0, lo1, frac

    y0, y1, fy = axis_coords(new_h, h)
    x0, x1, fx = axis_coords(new_w, w)
    top = src[y0][:, x0] * (1 - fx)[None, :, None] + src[y0][:, x1] * fx[None, :, None]
    bot = src[y1][:, x0] * (1 - fx)[None, :, None] + src[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    return out.astype(np.float32)


def preprocess_image(g: ModelGraph, image: Tensor) -> Tensor:
    """Resize, crop, and normalize a decoded image to the graph's input shape."""
    pp = g.preprocess
    arr = image.arr
    if pp.resize > 0:
        short = min(arr.shape[0], arr.shape[1])
        new_h = max(1, int(round(arr.shape[0] * pp.resize / short)))
        new_w = max(1, int(round(arr.shape[1] * pp.resize / short)))
        arr = _resize_bilinear(arr, new_h, new_w)
    th, tw, tc = g.input_shape
    if pp.crop == "center":
        if arr.shape[0] < th or arr.shape[1] < tw:
            raise ShapeMismatch(
                f"image {arr.shape[:2]} smaller than crop target ({th}, {tw})"
            )
        y0 = (arr.shape[0] - th) // 2
        x0 = (arr.shape[1] - tw) // 2
        arr = arr[y0:y0 + th, x0:x0 + tw, :]
    if arr.shape != (th, tw, tc):
        raise ShapeMismatch(f"preprocessed image shape {arr.shape} != input shape {g.input_shape}")
    if pp.mean.size != tc or pp.scale.size != tc:
        raise ShapeMismatch("preprocess mean/scale lengths != input channels")
    out = (arr.astype(np.float64) - pp.mean.astype(np.float64)) * pp.scale.astype(np.float64)
    return Tensor(out.astype(np.float32))
