"""Winner-kernel maps: per-position argmax over a layer's channels."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import CorruptHeader, DimensionMismatch
from .tensor_ops import Tensor

DUMP_MAGIC = b"CPWM"
DUMP_VERSION = 1
_DUMP_PREFIX = struct.Struct("<4sIHH")


@dataclass(frozen=True, eq=False)
class WinnerMap:
    """Grid of most-activated kernel indices, one per spatial position."""

    height: int
    width: int
    winners: np.ndarray  # (height, width) uint16

    def __post_init__(self):
        w = np.ascontiguousarray(self.winners, dtype=np.uint16)
        if w.shape != (self.height, self.width):
            raise DimensionMismatch(
                f"winner grid shape {w.shape} != declared ({self.height}, {self.width})"
            )
        object.__setattr__(self, "winners", w)

    def same_as(self, other: "WinnerMap") -> bool:
        return (self.height, self.width) == (other.height, other.width) and np.array_equal(
            self.winners, other.winners
        )


def winner_map(features: Tensor) -> WinnerMap:
    """argmax over channels at each position; ties break to the lowest index."""
    if features.channels > 0x10000:
        raise DimensionMismatch("more than 65536 channels cannot index into uint16 winners")
    idx = np.argmax(features.arr, axis=2).astype(np.uint16)
    return WinnerMap(height=features.height, width=features.width, winners=idx)


def identical_fraction(a: WinnerMap, b: WinnerMap) -> float:
    """Share of positions whose winner index agrees; in [0, 1]."""
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionMismatch(
            f"winner maps {a.height}x{a.width} and {b.height}x{b.width} are not comparable"
        )
    return float(np.count_nonzero(a.winners == b.winners)) / (a.height * a.width)


def dump_winner_map(m: WinnerMap) -> bytes:
    """Binary dump: magic CPWM, u32 version, u16 height, u16 width, u16 indices."""
    if m.height > 0xFFFF or m.width > 0xFFFF:
        raise DimensionMismatch("winner map dims exceed u16 dump fields")
    head = _DUMP_PREFIX.pack(DUMP_MAGIC, DUMP_VERSION, m.height, m.width)
    return head + np.ascontiguousarray(m.winners, dtype="<u2").tobytes()


def load_winner_map(data: bytes) -> WinnerMap:
    if len(data) < _DUMP_PREFIX.size:
        raise CorruptHeader("winner dump shorter than header")
    magic, version, h, w = _DUMP_PREFIX.unpack_from(data)
    if magic != DUMP_MAGIC:
        raise CorruptHeader(f"bad winner dump magic {magic!r}")
    if version != DUMP_VERSION:
        raise CorruptHeader(f"unsupported winner dump version {version}")
    body = data[_DUMP_PREFIX.size:]
    if len(body) != 2 * h * w:
        raise CorruptHeader("winner dump length does not match dims")
    grid = np.frombuffer(body, dtype="<u2").astype(np.uint16).reshape(h, w)
    return WinnerMap(height=h, width=w, winners=grid)
