"""Portable binary model container.

Layout (little-endian): magic "CPMF", u32 version, u64 header length, UTF-8
JSON header, then the raw float32 weight blobs concatenated in header order.
The header names every node, its params, and each blob's offset/length
relative to the start of the blob section. A file is rejected unless its total
length equals header plus declared blobs.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import BadMagic, CorruptHeader, ShapeMismatch, UnsupportedVersion
from .model_graph import (
    AffineParams,
    DenseParams,
    LayerNode,
    MaxPoolParams,
    ModelGraph,
    Preprocess,
)
from .tensor_ops import ConvWeights

MAGIC = b"CPMF"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


def _f32_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _encode_node(n: LayerNode, blobs: list[bytes], offset: int):
    entry: dict = {"id": n.id, "kind": n.kind, "inputs": list(n.inputs)}
    named: list[tuple[str, bytes]] = []
    if n.kind == "Conv":
        p: ConvWeights = n.params
        entry["params"] = {
            "kh": p.kh, "kw": p.kw, "cin": p.cin, "cout": p.cout,
            "stride": p.stride, "padding": p.padding,
        }
        named = [("weights", _f32_bytes(p.weights)), ("bias", _f32_bytes(p.bias))]
    elif n.kind == "MaxPool":
        entry["params"] = {"window": n.params.window, "stride": n.params.stride}
    elif n.kind == "AffineChannel":
        entry["params"] = {"channels": int(n.params.scale.size)}
        named = [("scale", _f32_bytes(n.params.scale)), ("shift", _f32_bytes(n.params.shift))]
    elif n.kind == "Dense":
        entry["params"] = {"out_dim": n.params.out_dim, "in_dim": n.params.in_dim}
        named = [("weights", _f32_bytes(n.params.weights)), ("bias", _f32_bytes(n.params.bias))]
    if named:
        entry["blobs"] = []
        for name, raw in named:
            entry["blobs"].append([name, offset, len(raw)])
            blobs.append(raw)
            offset += len(raw)
    return entry, offset


def save_model(g: ModelGraph) -> bytes:
    """Serialize a graph; the same graph always yields the same bytes."""
    blobs: list[bytes] = []
    offset = 0
    node_entries = []
    for n in g.nodes:
        entry, offset = _encode_node(n, blobs, offset)
        node_entries.append(entry)
    header = {
        "class_count": g.class_count,
        "input_shape": list(g.input_shape),
        "nodes": node_entries,
        "preprocess": {
            "resize": g.preprocess.resize,
            "crop": g.preprocess.crop,
            "mean": [float(v) for v in g.preprocess.mean],
            "scale": [float(v) for v in g.preprocess.scale],
        },
        "probe_ids": list(g.probe_ids),
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(header_bytes)) + header_bytes + b"".join(blobs)


def _take_blob(section: bytes, entry, cursor: int, count: int, what: str) -> tuple[np.ndarray, int]:
    name, off, length = entry
    if off != cursor:
        raise CorruptHeader(f"{what}: blob {name!r} offset {off} breaks header order (expected {cursor})")
    if length != 4 * count:
        raise ShapeMismatch(f"{what}: blob {name!r} length {length} != {4 * count} declared by dims")
    if off + length > len(section):
        raise CorruptHeader(f"{what}: blob {name!r} runs past end of file")
    arr = np.frombuffer(section, dtype="<f4", count=count, offset=off).astype(np.float32)
    return arr, cursor + length


def _decode_node(raw: dict, section: bytes, cursor: int) -> tuple[LayerNode, int]:
    try:
        nid = raw["id"]
        kind = raw["kind"]
        inputs = tuple(raw["inputs"])
    except (KeyError, TypeError) as e:
        raise CorruptHeader(f"node entry missing field: {e}") from None
    blobs = raw.get("blobs", [])
    params = None
    if kind == "Conv":
        try:
            p = raw["params"]
            kh, kw, cin, cout = p["kh"], p["kw"], p["cin"], p["cout"]
            stride, padding = p["stride"], p["padding"]
        except (KeyError, TypeError):
            raise CorruptHeader(f"conv node {nid!r} missing params") from None
        if len(blobs) != 2:
            raise CorruptHeader(f"conv node {nid!r} must declare weights and bias blobs")
        w, cursor = _take_blob(section, blobs[0], cursor, kh * kw * cin * cout, f"node {nid!r}")
        b, cursor = _take_blob(section, blobs[1], cursor, cout, f"node {nid!r}")
        params = ConvWeights(kh=kh, kw=kw, cin=cin, cout=cout, weights=w, bias=b,
                             stride=stride, padding=padding)
    elif kind == "MaxPool":
        try:
            params = MaxPoolParams(window=raw["params"]["window"], stride=raw["params"]["stride"])
        except (KeyError, TypeError):
            raise CorruptHeader(f"maxpool node {nid!r} missing params") from None
    elif kind == "AffineChannel":
        try:
            ch = raw["params"]["channels"]
        except (KeyError, TypeError):
            raise CorruptHeader(f"affine node {nid!r} missing params") from None
        if len(blobs) != 2:
            raise CorruptHeader(f"affine node {nid!r} must declare scale and shift blobs")
        scale, cursor = _take_blob(section, blobs[0], cursor, ch, f"node {nid!r}")
        shift, cursor = _take_blob(section, blobs[1], cursor, ch, f"node {nid!r}")
        params = AffineParams(scale=scale, shift=shift)
    elif kind == "Dense":
        try:
            out_dim, in_dim = raw["params"]["out_dim"], raw["params"]["in_dim"]
        except (KeyError, TypeError):
            raise CorruptHeader(f"dense node {nid!r} missing params") from None
        if len(blobs) != 2:
            raise CorruptHeader(f"dense node {nid!r} must declare weights and bias blobs")
        w, cursor = _take_blob(section, blobs[0], cursor, out_dim * in_dim, f"node {nid!r}")
        b, cursor = _take_blob(section, blobs[1], cursor, out_dim, f"node {nid!r}")
        params = DenseParams(weights=w.reshape(out_dim, in_dim), bias=b)
    elif blobs:
        raise CorruptHeader(f"node {nid!r} ({kind}) declares unexpected blobs")
    try:
        node = LayerNode(id=nid, kind=kind, inputs=inputs, params=params)
    except ValueError as e:
        raise CorruptHeader(str(e)) from None
    return node, cursor


def load_model(data: bytes) -> ModelGraph:
    """Parse CPM bytes back into a validated graph (round-trips save_model bitwise)."""
    if len(data) < 4:
        raise CorruptHeader("file shorter than magic")
    if data[:4] != MAGIC:
        raise BadMagic(f"bad magic {data[:4]!r}")
    if len(data) < _PREFIX.size:
        raise CorruptHeader("file truncated before header length")
    _, version, header_len = _PREFIX.unpack_from(data)
    if version != VERSION:
        raise UnsupportedVersion(f"version {version}, this reader supports {VERSION}")
    if _PREFIX.size + header_len > len(data):
        raise CorruptHeader("declared header length runs past end of file")
    try:
        header = json.loads(data[_PREFIX.size:_PREFIX.size + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptHeader(f"header is not valid JSON: {e}") from None
    if not isinstance(header, dict):
        raise CorruptHeader("header must be a JSON object")
    section = data[_PREFIX.size + header_len:]
    try:
        raw_nodes = header["nodes"]
        class_count = header["class_count"]
        input_shape = tuple(header["input_shape"])
        pp = header["preprocess"]
        probe_ids = tuple(header["probe_ids"])
        preprocess = Preprocess(
            resize=pp["resize"], crop=pp["crop"],
            mean=np.asarray(pp["mean"], dtype=np.float32),
            scale=np.asarray(pp["scale"], dtype=np.float32),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptHeader(f"header missing or malformed field: {e}") from None
    nodes = []
    cursor = 0
    for raw in raw_nodes:
        node, cursor = _decode_node(raw, section, cursor)
        nodes.append(node)
    if cursor != len(section):
        raise CorruptHeader(
            f"file length mismatch: blobs declare {cursor} bytes, section holds {len(section)}"
        )
    return ModelGraph(
        nodes=nodes,
        input_shape=input_shape,
        class_count=class_count,
        probe_ids=probe_ids,
        preprocess=preprocess,
    )


def save_model_file(g: ModelGraph, path) -> None:
    with open(path, "wb") as f:
        f.write(save_model(g))


def load_model_file(path) -> ModelGraph:
    with open(path, "rb") as f:
        return load_model(f.read())
