"""Consistency metrics over winner maps: pairwise identical fractions across
contrast levels, same-prediction gating, confidence binning, and aggregates.

Aggregation weighting: per-image fraction first, then an unweighted mean over
images, then an unweighted mean over unordered level pairs. Accumulation runs
in first-seen image order so results never depend on thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .contrast import ContrastLevel, ContrastSchedule
from .errors import NoValidCells
from .model_graph import Prediction
from .winners import WinnerMap, identical_fraction

MODE_GATED = "gated"
MODE_ALL = "all"

BIN_KEY_HIGH_CONTRAST = "high-contrast"
BIN_KEY_MIN = "min"

BIN_EDGES = (0.0, 0.2, 0.4, 0.6, 0.8)
BIN_LABELS = ("0.0-0.2", "0.2-0.4", "0.4-0.6", "0.6-0.8", "0.8-1.0")

PairFilter = Callable[["SweepRecord", "SweepRecord"], bool]


@dataclass(frozen=True, eq=False)
class SweepRecord:
    """One image at one contrast level: its prediction and per-layer winner maps."""

    image_id: str
    level: ContrastLevel
    prediction: Prediction
    maps: dict[str, WinnerMap]


@dataclass(eq=False)
class LayerMatrix:
    """Symmetric level-pair matrix of mean identical-winner fractions.

    Cells with no contributing images hold NaN and n_images 0; they are
    reported as absent, never as zero.
    """

    levels: tuple[int, ...]
    fractions: np.ndarray  # (L, L) float64, NaN = no contributing images
    n_images: np.ndarray   # (L, L) int

    def cell(self, c1: int, c2: int) -> Optional[float]:
        i, j = self.levels.index(c1), self.levels.index(c2)
        v = self.fractions[i, j]
        return None if np.isnan(v) else float(v)


@dataclass(eq=False)
class ConsistencyReport:
    layer_ids: tuple[str, ...]
    levels: tuple[int, ...]
    matrices: dict[str, LayerMatrix]
    gating: str
    bin_label: Optional[str] = None


def gate_pair(r1: SweepRecord, r2: SweepRecord, mode: str) -> bool:
    """gated: both levels predicted the same class; all: never excludes."""
    if r1.image_id != r2.image_id:
        raise ValueError(f"gate_pair compares one image, got {r1.image_id!r} and {r2.image_id!r}")
    if mode == MODE_ALL:
        return True
    if mode == MODE_GATED:
        return r1.prediction.class_id == r2.prediction.class_id
    raise ValueError(f"unknown gating mode {mode!r}")


def _by_image(records) -> tuple[list[str], dict[str, dict[int, SweepRecord]]]:
    order: list[str] = []
    images: dict[str, dict[int, SweepRecord]] = {}
    for r in records:
        if r.image_id not in images:
            images[r.image_id] = {}
            order.append(r.image_id)
        per = images[r.image_id]
        pct = r.level.percent
        if pct in per:
            raise ValueError(f"duplicate record for image {r.image_id!r} at level {pct}")
        per[pct] = r
    return order, images


def consistency_matrix(
    records,
    schedule: ContrastSchedule,
    mode: str,
    layer_id: str,
    pair_filter: Optional[PairFilter] = None,
) -> LayerMatrix:
    """Mean identical-winner fraction for one layer over every level pair.

    Pair filters (confidence bins, correctness splits) receive the records as
    (lower-contrast, higher-contrast) and run on top of gating.
    """
    order, images = _by_image(records)
    pcts = schedule.percents()
    n_levels = len(pcts)
    fractions = np.full((n_levels, n_levels), np.nan, dtype=np.float64)
    counts = np.zeros((n_levels, n_levels), dtype=np.int64)
    for i in range(n_levels):
        for j in range(i, n_levels):
            total = 0.0
            count = 0
            for image_id in order:
                per = images[image_id]
                if pcts[i] not in per or pcts[j] not in per:
                    continue
                lo, hi = per[pcts[i]], per[pcts[j]]
                if not gate_pair(lo, hi, mode):
                    continue
                if pair_filter is not None and not pair_filter(lo, hi):
                    continue
                if layer_id not in lo.maps or layer_id not in hi.maps:
                    raise ValueError(f"record for {image_id!r} lacks winner map for layer {layer_id!r}")
                total += identical_fraction(lo.maps[layer_id], hi.maps[layer_id])
                count += 1
            if count:
                fractions[i, j] = fractions[j, i] = total / count
                counts[i, j] = counts[j, i] = count
    return LayerMatrix(levels=pcts, fractions=fractions, n_images=counts)


def build_report(
    records,
    schedule: ContrastSchedule,
    mode: str,
    layer_ids,
    pair_filter: Optional[PairFilter] = None,
    bin_label: Optional[str] = None,
) -> ConsistencyReport:
    layer_ids = tuple(layer_ids)
    matrices = {
        lid: consistency_matrix(records, schedule, mode, lid, pair_filter) for lid in layer_ids
    }
    return ConsistencyReport(
        layer_ids=layer_ids,
        levels=schedule.percents(),
        matrices=matrices,
        gating=mode,
        bin_label=bin_label,
    )


def aggregate_matrix(m: LayerMatrix) -> float:
    """Mean of valid off-diagonal cells, each unordered pair counted once."""
    vals = []
    n = len(m.levels)
    for i in range(n):
        for j in range(i + 1, n):
            v = m.fractions[i, j]
            if not np.isnan(v):
                vals.append(float(v))
    if not vals:
        raise NoValidCells("every off-diagonal cell was gated empty")
    return sum(vals) / len(vals)


def aggregate_table(report: ConsistencyReport) -> dict[str, Optional[float]]:
    """Per-layer scalar aggregates; layers with no valid cells map to None."""
    out: dict[str, Optional[float]] = {}
    any_valid = False
    for lid in report.layer_ids:
        try:
            out[lid] = aggregate_matrix(report.matrices[lid])
            any_valid = True
        except NoValidCells:
            out[lid] = None
    if not any_valid:
        raise NoValidCells("no layer has a valid off-diagonal cell")
    return out


def confidence_bin(confidence: float) -> int:
    """Five half-open bins over [0,1], the last closed at 1.0."""
    idx = len(BIN_EDGES) - 1
    while idx > 0 and confidence < BIN_EDGES[idx]:
        idx -= 1
    return idx


def _pair_confidence(lo: SweepRecord, hi: SweepRecord, bin_key: str) -> float:
    if bin_key == BIN_KEY_HIGH_CONTRAST:
        return hi.prediction.confidence
    if bin_key == BIN_KEY_MIN:
        return min(lo.prediction.confidence, hi.prediction.confidence)
    raise ValueError(f"unknown bin key {bin_key!r}")


def confidence_binned(
    records,
    schedule: ContrastSchedule,
    mode: str,
    layer_ids,
    bin_key: str = BIN_KEY_HIGH_CONTRAST,
    pair_filter: Optional[PairFilter] = None,
) -> dict[int, ConsistencyReport]:
    """One consistency report per confidence bin.

    A level pair lands in the bin of its keyed confidence: the higher-contrast
    member's by default, or the smaller of the two with bin_key="min".
    """
    out = {}
    for b in range(len(BIN_LABELS)):
        def in_bin(lo, hi, _b=b):
            if confidence_bin(_pair_confidence(lo, hi, bin_key)) != _b:
                return False
            return pair_filter is None or pair_filter(lo, hi)

        out[b] = build_report(
            records, schedule, mode, layer_ids, pair_filter=in_bin, bin_label=BIN_LABELS[b]
        )
    return out


def reference_curve(
    records,
    reference: "ContrastLevel | int",
    schedule: ContrastSchedule,
    mode: str,
    layer_ids,
    pair_filter: Optional[PairFilter] = None,
) -> dict[str, list[Optional[float]]]:
    """Per-layer fraction of identical winners between the reference level and
    every schedule level (1.0 at the reference itself)."""
    ref_pct = reference.percent if isinstance(reference, ContrastLevel) else int(reference)
    pcts = schedule.percents()
    if ref_pct not in pcts:
        raise ValueError(f"reference level {ref_pct} is not in the schedule {pcts}")
    ref_idx = pcts.index(ref_pct)
    curves: dict[str, list[Optional[float]]] = {}
    for lid in tuple(layer_ids):
        m = consistency_matrix(records, schedule, mode, lid, pair_filter)
        row = m.fractions[ref_idx]
        curves[lid] = [None if np.isnan(v) else float(v) for v in row]
    return curves
