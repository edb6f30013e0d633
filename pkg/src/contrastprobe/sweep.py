"""End-to-end contrast sweep: render levels, run the network, collect winner
maps, and emit accuracy/consistency reports.

Images are independent work units processed with bounded parallelism; all
aggregation runs afterwards in dataset order, so report bytes are identical
for any thread count.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .consistency import (
    BIN_KEY_HIGH_CONTRAST,
    BIN_KEY_MIN,
    BIN_LABELS,
    MODE_ALL,
    MODE_GATED,
    ConsistencyReport,
    SweepRecord,
    aggregate_matrix,
    build_report,
    confidence_binned,
    reference_curve,
)
from .contrast import ContrastSchedule, adjust_contrast, default_schedule
from .dataset import DatasetIndex, decode_image
from .errors import NoValidCells, SweepAborted
from .model_graph import (
    TAP_POST_RELU,
    TAP_PRE_RELU,
    ModelGraph,
    forward_with_taps,
    preprocess_image,
)
from .winners import dump_winner_map, winner_map

SPLIT_BOTH = "both"
SPLIT_CORRECT = "correct"
SPLIT_INCORRECT = "incorrect"

WEIGHTING_NOTE = (
    "per-image fraction, then unweighted mean over images, then unweighted mean over level pairs"
)


@dataclass(frozen=True)
class SweepOptions:
    schedule: ContrastSchedule = field(default_factory=default_schedule)
    mode: str = MODE_GATED
    tap: str = TAP_PRE_RELU
    bin_key: str = BIN_KEY_HIGH_CONTRAST
    split: str = SPLIT_BOTH
    threads: int = 1
    dump_winners: bool = False
    failure_budget: float = 0.1
    metrics: bool = True

    def __post_init__(self):
        if self.mode not in (MODE_GATED, MODE_ALL):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.tap not in (TAP_PRE_RELU, TAP_POST_RELU):
            raise ValueError(f"unknown tap {self.tap!r}")
        if self.bin_key not in (BIN_KEY_HIGH_CONTRAST, BIN_KEY_MIN):
            raise ValueError(f"unknown bin key {self.bin_key!r}")
        if self.split not in (SPLIT_BOTH, SPLIT_CORRECT, SPLIT_INCORRECT):
            raise ValueError(f"unknown split {self.split!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass(eq=False)
class LevelAccuracy:
    level: int
    n: int
    correct: int

    @property
    def accuracy(self) -> Optional[float]:
        return self.correct / self.n if self.n else None


@dataclass(eq=False)
class SweepResult:
    options: SweepOptions
    probe_ids: tuple[str, ...]
    records: list[SweepRecord]
    failures: list[tuple[str, str]]  # (image name, error)
    n_images: int
    accuracy: list[LevelAccuracy]
    report: Optional[ConsistencyReport] = None
    aggregates: Optional[dict[str, Optional[float]]] = None
    bins: Optional[dict[int, tuple[ConsistencyReport, dict[str, Optional[float]]]]] = None
    reference: Optional[int] = None
    curves: Optional[dict[str, list[Optional[float]]]] = None


def _image_records(g: ModelGraph, name: str, path: str, options: SweepOptions,
                   probe_ids: tuple[str, ...]) -> list[SweepRecord]:
    decoded = decode_image(path)
    records = []
    for level in options.schedule:
        adjusted = adjust_contrast(decoded, level)
        prepared = preprocess_image(g, adjusted)
        pred, taps = forward_with_taps(g, prepared, tap=options.tap, probe_ids=probe_ids)
        maps = {pid: winner_map(t) for pid, t in taps.items()}
        records.append(SweepRecord(image_id=name, level=level, prediction=pred, maps=maps))
    return records


def accuracy_by_contrast(records, dataset: DatasetIndex) -> list[LevelAccuracy]:
    """Top-1 accuracy per contrast level over the recorded images."""
    labels = dataset.labels_by_name()
    per_level: dict[int, LevelAccuracy] = {}
    order: list[int] = []
    for r in records:
        pct = r.level.percent
        if pct not in per_level:
            per_level[pct] = LevelAccuracy(level=pct, n=0, correct=0)
            order.append(pct)
        cell = per_level[pct]
        cell.n += 1
        if r.prediction.class_id == labels[r.image_id]:
            cell.correct += 1
    return [per_level[p] for p in sorted(order)]


def _split_filter(options: SweepOptions, labels: dict[str, int]):
    # Correctness is keyed to the pair's higher-contrast member, like bins.
    if options.split == SPLIT_CORRECT:
        return lambda lo, hi: hi.prediction.class_id == labels[hi.image_id]
    if options.split == SPLIT_INCORRECT:
        return lambda lo, hi: hi.prediction.class_id != labels[hi.image_id]
    return None


def run_sweep(g: ModelGraph, dataset: DatasetIndex, options: SweepOptions) -> SweepResult:
    """Render every image at every schedule level, classify, extract winner
    maps at the probe points, and compute all reports.

    Per-image failures are collected into a manifest; the run aborts only when
    more than the failure budget of images fail.
    """
    probe_ids = g.probe_ids if options.metrics else ()
    entries = list(dataset.entries)
    jobs = [(i, e) for i, e in enumerate(entries)]
    results: list = [None] * len(entries)

    def work(job):
        i, e = job
        try:
            return i, _image_records(g, e.name, e.path, options, probe_ids), None
        except Exception as exc:  # per-image failure, collected below
            return i, None, f"{type(exc).__name__}: {exc}"

    if options.threads == 1:
        done = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=options.threads) as pool:
            done = list(pool.map(work, jobs))
    for i, recs, err in done:
        results[i] = (recs, err)

    records: list[SweepRecord] = []
    failures: list[tuple[str, str]] = []
    for entry, (recs, err) in zip(entries, results):
        if err is not None:
            failures.append((entry.name, err))
        else:
            records.extend(recs)
    if entries and len(failures) > options.failure_budget * len(entries):
        raise SweepAborted(
            f"{len(failures)} of {len(entries)} images failed "
            f"(budget {options.failure_budget:.0%}); first: {failures[0][0]}: {failures[0][1]}"
        )

    result = SweepResult(
        options=options,
        probe_ids=probe_ids,
        records=records,
        failures=failures,
        n_images=len(entries) - len(failures),
        accuracy=accuracy_by_contrast(records, dataset),
    )
    if not options.metrics or not probe_ids:
        return result

    labels = dataset.labels_by_name()
    pair_filter = _split_filter(options, labels)
    result.report = build_report(records, options.schedule, options.mode, probe_ids, pair_filter)
    result.aggregates = _safe_aggregates(result.report)
    binned = confidence_binned(records, options.schedule, options.mode, probe_ids,
                               bin_key=options.bin_key, pair_filter=pair_filter)
    result.bins = {b: (rep, _safe_aggregates(rep)) for b, rep in binned.items()}
    result.reference = max(options.schedule.percents())
    result.curves = reference_curve(records, result.reference, options.schedule,
                                    options.mode, probe_ids, pair_filter)
    return result


def _safe_aggregates(report: ConsistencyReport) -> dict[str, Optional[float]]:
    out: dict[str, Optional[float]] = {}
    for lid in report.layer_ids:
        try:
            out[lid] = aggregate_matrix(report.matrices[lid])
        except NoValidCells:
            out[lid] = None
    return out


def _atomic_write(path: str, data: bytes) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def _csv_bytes(header: list[str], rows: list[list]) -> bytes:
    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return repr(v)
        return str(v)

    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return ("\n".join(lines) + "\n").encode("utf-8")


def _matrix_json(m) -> dict:
    fr = [[None if v != v else float(v) for v in row] for row in m.fractions.tolist()]
    return {"levels": list(m.levels), "fractions": fr,
            "n_images": [[int(v) for v in row] for row in m.n_images.tolist()]}


def emit_reports(result: SweepResult, out_dir, formats=("csv", "json")) -> list[str]:
    """Write report files atomically; re-running on the same result is byte-identical."""
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []

    def emit(name: str, data: bytes):
        path = os.path.join(out_dir, name)
        _atomic_write(path, data)
        written.append(path)

    levels = list(result.options.schedule.percents())
    if "csv" in formats:
        emit("accuracy.csv", _csv_bytes(
            ["level", "n", "correct", "accuracy"],
            [[a.level, a.n, a.correct, a.accuracy] for a in result.accuracy],
        ))
        emit("failures.csv", _csv_bytes(
            ["path", "error"], [[name, err] for name, err in result.failures],
        ))
        if result.report is not None:
            rows = []
            for lid in result.report.layer_ids:
                m = result.report.matrices[lid]
                for i in range(len(levels)):
                    for j in range(i + 1, len(levels)):
                        v = m.fractions[i, j]
                        rows.append([lid, levels[i], levels[j], int(m.n_images[i, j]),
                                     None if v != v else float(v)])
            emit("consistency.csv", _csv_bytes(["layer", "c1", "c2", "n_images", "fraction"], rows))
            emit("aggregate.csv", _csv_bytes(
                ["layer", "mean_fraction"],
                [[lid, result.aggregates[lid]] for lid in result.report.layer_ids
                 if result.aggregates[lid] is not None],
            ))
            curve_rows = []
            for lid in result.report.layer_ids:
                for lv, v in zip(levels, result.curves[lid]):
                    curve_rows.append([lid, lv, v])
            emit("reference_curve.csv", _csv_bytes(["layer", "level", "fraction"], curve_rows))
            bin_rows = []
            for lid in result.report.layer_ids:
                for b, label in enumerate(BIN_LABELS):
                    bin_rows.append([lid, label, result.bins[b][1][lid]])
            emit("confidence_bins.csv", _csv_bytes(["layer", "bin", "mean_fraction"], bin_rows))

    if "json" in formats:
        doc = {
            "schedule": levels,
            "gating": result.options.mode,
            "tap": result.options.tap,
            "bin_key": result.options.bin_key,
            "split": result.options.split,
            "weighting": WEIGHTING_NOTE,
            "probe_ids": list(result.probe_ids),
            "n_images": result.n_images,
            "n_failed": len(result.failures),
            "failures": [{"path": n, "error": e} for n, e in result.failures],
            "accuracy": [
                {"level": a.level, "n": a.n, "correct": a.correct, "accuracy": a.accuracy}
                for a in result.accuracy
            ],
        }
        if result.report is not None:
            doc["consistency"] = {lid: _matrix_json(result.report.matrices[lid])
                                  for lid in result.report.layer_ids}
            doc["aggregate"] = result.aggregates
            doc["reference_curve"] = {"reference": result.reference,
                                      "layers": result.curves}
            doc["confidence_bins"] = {
                BIN_LABELS[b]: {
                    "aggregate": aggs,
                    "matrices": {lid: _matrix_json(rep.matrices[lid]) for lid in rep.layer_ids},
                }
                for b, (rep, aggs) in result.bins.items()
            }
        emit("report.json", (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode("utf-8"))

    if result.options.dump_winners and result.records:
        wdir = os.path.join(out_dir, "winners")
        os.makedirs(wdir, exist_ok=True)
        for r in result.records:
            safe = r.image_id.replace(os.sep, "_").replace(" ", "_")
            for lid, m in r.maps.items():
                name = f"{safe}__c{r.level.percent}__{lid}.cpwm"
                path = os.path.join(wdir, name)
                _atomic_write(path, dump_winner_map(m))
                written.append(path)
    return written
