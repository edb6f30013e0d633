"""Dataset indexing and image decoding (binary PPM P6 and 8-bit PNG)."""

from __future__ import annotations

import csv
import os
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import BadLabel, DatasetError, DecodeError, MissingFile
from .tensor_ops import Tensor

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True)
class DatasetEntry:
    path: str   # resolved path on disk
    label: int
    name: str   # filename as written in the labels CSV (the image id)


@dataclass(frozen=True)
class DatasetIndex:
    entries: tuple[DatasetEntry, ...]
    class_count: int

    def labels_by_name(self) -> dict[str, int]:
        return {e.name: e.label for e in self.entries}


def load_dataset(data_dir, labels_csv, class_count: "int | None" = None) -> DatasetIndex:
    """Index a directory against a `filename,class_id` CSV, preserving row order.

    Existence, label range, and path uniqueness are checked here; decode
    failures surface per image during the sweep.
    """
    rows = []
    with open(labels_csv, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise BadLabel(f"{labels_csv}:{lineno}: expected `filename,class_id`, got {row!r}")
            rows.append((lineno, row[0].strip(), row[1].strip()))

    entries = []
    seen = set()
    for lineno, name, label_text in rows:
        try:
            label = int(label_text)
        except ValueError:
            raise BadLabel(f"{labels_csv}:{lineno}: class id {label_text!r} is not an integer") from None
        if label < 0:
            raise BadLabel(f"{labels_csv}:{lineno}: class id {label} is negative")
        if class_count is not None and label >= class_count:
            raise BadLabel(f"{labels_csv}:{lineno}: class id {label} >= class count {class_count}")
        if name in seen:
            raise DatasetError(f"{labels_csv}:{lineno}: duplicate path {name!r}")
        seen.add(name)
        path = os.path.join(data_dir, name)
        if not os.path.isfile(path):
            raise MissingFile(f"dataset file does not exist: {path}")
        entries.append(DatasetEntry(path=path, label=label, name=name))

    if class_count is None:
        class_count = max((e.label for e in entries), default=0) + 1
    return DatasetIndex(entries=tuple(entries), class_count=class_count)


def decode_image(path) -> Tensor:
    """Decode to a 3-channel [0,1] float32 tensor (values = byte / 255)."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise MissingFile(f"cannot read {path}: {e}") from None
    if data[:2] == b"P6":
        u8 = _decode_ppm(data, path)
    elif data[:8] == PNG_SIGNATURE:
        u8 = _decode_png(data, path)
    else:
        raise DecodeError(f"{path}: not a binary PPM (P6) or PNG file")
    if u8.shape[2] == 1:
        u8 = np.repeat(u8, 3, axis=2)
    return Tensor(u8.astype(np.float32) / np.float32(255.0))


def _ppm_token(data: bytes, pos: int, path) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos]
        if c in b" \t\r\n":
            pos += 1
        elif c == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos] not in b" \t\r\n":
        pos += 1
    if start == pos:
        raise DecodeError(f"{path}: truncated PPM header")
    return data[start:pos], pos


def _decode_ppm(data: bytes, path) -> np.ndarray:
    pos = 2  # past "P6"
    fields = []
    for _ in range(3):
        tok, pos = _ppm_token(data, pos, path)
        try:
            fields.append(int(tok))
        except ValueError:
            raise DecodeError(f"{path}: non-numeric PPM header field {tok!r}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise DecodeError(f"{path}: bad PPM dims {width}x{height}")
    if maxval != 255:
        raise DecodeError(f"{path}: only maxval 255 PPMs are supported, got {maxval}")
    pos += 1  # exactly one whitespace byte separates header and raster
    need = width * height * 3
    raster = data[pos:pos + need]
    if len(raster) != need:
        raise DecodeError(f"{path}: PPM raster holds {len(raster)} bytes, expected {need}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(raw: bytes, height: int, width: int, channels: int, path) -> np.ndarray:
    stride = width * channels
    if len(raw) != height * (stride + 1):
        raise DecodeError(f"{path}: decompressed PNG data has wrong length")
    out = np.zeros((height, stride), dtype=np.int32)
    pos = 0
    for y in range(height):
        ftype = raw[pos]
        pos += 1
        line = np.frombuffer(raw, np.uint8, stride, pos).astype(np.int32)
        pos += stride
        prev = out[y - 1] if y else np.zeros(stride, dtype=np.int32)
        if ftype == 0:
            out[y] = line
        elif ftype == 2:
            out[y] = (line + prev) & 0xFF
        elif ftype in (1, 3, 4):
            cur = out[y]
            for i in range(stride):
                a = int(cur[i - channels]) if i >= channels else 0
                b = int(prev[i])
                if ftype == 1:
                    v = line[i] + a
                elif ftype == 3:
                    v = line[i] + (a + b) // 2
                else:
                    c = int(prev[i - channels]) if (y and i >= channels) else 0
                    v = line[i] + _paeth(a, b, c)
                cur[i] = v & 0xFF
        else:
            raise DecodeError(f"{path}: unknown PNG filter type {ftype}")
    return out.astype(np.uint8)


def _decode_png(data: bytes, path) -> np.ndarray:
    pos = 8
    ihdr = None
    idat = bytearray()
    seen_end = False
    while pos + 8 <= len(data):
        length = int.from_bytes(data[pos:pos + 4], "big")
        ctype = data[pos + 4:pos + 8]
        body = data[pos + 8:pos + 8 + length]
        if len(body) != length or pos + 12 + length > len(data):
            raise DecodeError(f"{path}: truncated PNG chunk {ctype!r}")
        crc = int.from_bytes(data[pos + 8 + length:pos + 12 + length], "big")
        if zlib.crc32(ctype + body) & 0xFFFFFFFF != crc:
            raise DecodeError(f"{path}: PNG chunk {ctype!r} fails CRC")
        pos += 12 + length
        if ctype == b"IHDR":
            ihdr = body
        elif ctype == b"IDAT":
            idat.extend(body)
        elif ctype == b"IEND":
            seen_end = True
            break
    if ihdr is None or not seen_end:
        raise DecodeError(f"{path}: PNG missing IHDR or IEND")
    if len(ihdr) != 13:
        raise DecodeError(f"{path}: malformed IHDR")
    width = int.from_bytes(ihdr[0:4], "big")
    height = int.from_bytes(ihdr[4:8], "big")
    depth, color, compression, filt, interlace = ihdr[8:13]
    if depth != 8 or color not in (0, 2):
        raise DecodeError(f"{path}: only 8-bit gray or RGB PNGs are supported "
                          f"(depth {depth}, color type {color})")
    if compression != 0 or filt != 0:
        raise DecodeError(f"{path}: unsupported PNG compression/filter method")
    if interlace != 0:
        raise DecodeError(f"{path}: interlaced PNGs are not supported")
    channels = 1 if color == 0 else 3
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as e:
        raise DecodeError(f"{path}: PNG inflate failed: {e}") from None
    grid = _unfilter(raw, height, width, channels, path)
    return grid.reshape(height, width, channels)
