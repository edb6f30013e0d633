"""Contrast remapping of [0,1] images and the experiment's level schedule.

A level c in [1, 100] rescales pixel deviation from mid-gray:
out = (c/100) * in + (1 - c/100) / 2, applied identically to every channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .tensor_ops import Tensor

DEFAULT_LEVELS = (1, 3, 5, 7, 10, 13, 15, 30, 50, 75, 100)

# Inputs this far outside [0,1] are still accepted (decoder rounding headroom).
RANGE_SLACK = 1e-6

MID_GRAY = 0.5


@dataclass(frozen=True, order=True)
class ContrastLevel:
    percent: int

    def __post_init__(self):
        if not isinstance(self.percent, int) or isinstance(self.percent, bool):
            raise ValueError(f"contrast level must be an integer, got {self.percent!r}")
        if not 1 <= self.percent <= 100:
            raise ValueError(f"contrast level must be in [1, 100], got {self.percent}")


def as_level(level: "ContrastLevel | int") -> ContrastLevel:
    return level if isinstance(level, ContrastLevel) else ContrastLevel(int(level))


@dataclass(frozen=True)
class ContrastSchedule:
    levels: tuple[ContrastLevel, ...]

    def __post_init__(self):
        if not self.levels:
            raise ValueError("schedule must be non-empty")
        pcts = [lv.percent for lv in self.levels]
        if any(b <= a for a, b in zip(pcts, pcts[1:])):
            raise ValueError(f"schedule levels must be strictly increasing, got {pcts}")

    @classmethod
    def of(cls, percents) -> "ContrastSchedule":
        return cls(tuple(ContrastLevel(int(p)) for p in percents))

    @classmethod
    def parse(cls, text: str) -> "ContrastSchedule":
        """Parse a comma-separated level list, e.g. "1,3,5,100"."""
        try:
            percents = [int(tok) for tok in text.split(",") if tok.strip() != ""]
        except ValueError as e:
            raise ValueError(f"cannot parse schedule {text!r}: {e}") from None
        if not percents:
            raise ValueError(f"cannot parse schedule {text!r}: no levels")
        return cls.of(percents)

    def percents(self) -> tuple[int, ...]:
        return tuple(lv.percent for lv in self.levels)

    def __len__(self) -> int:
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)


def default_schedule() -> ContrastSchedule:
    return ContrastSchedule.of(DEFAULT_LEVELS)


def adjust_contrast(image: Tensor, level: "ContrastLevel | int") -> Tensor:
    """Remap a [0,1] image to contrast level c.

    c == 100 returns a bitwise copy (the remap is the identity there); other
    levels compute in float64 and round once to float32. Output values lie in
    [(1-a)/2, (1+a)/2] with a = c/100.
    """
    level = as_level(level)
    lo = float(image.arr.min())
    hi = float(image.arr.max())
    if lo < -RANGE_SLACK or hi > 1.0 + RANGE_SLACK:
        raise DomainError(f"image values must lie in [0, 1], found range [{lo}, {hi}]")
    if level.percent == 100:
        return Tensor(image.arr.copy())
    a = level.percent / 100.0
    out = image.arr.astype(np.float64) * a + (1.0 - a) / 2.0
    return Tensor(out.astype(np.float32))
