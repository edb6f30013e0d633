import json
import os

import numpy as np
import pytest

from contrastprobe import (
    ContrastSchedule,
    SweepOptions,
    accuracy_by_contrast,
    build_report,
    decode_image,
    emit_reports,
    forward_with_taps,
    load_dataset,
    load_winner_map,
    preprocess_image,
    run_sweep,
    save_model_file,
)
from contrastprobe.cli import main as cli_main
from contrastprobe.errors import SweepAborted

from helpers import toy_invariant_net, write_ppm

S2 = ContrastSchedule.of([50, 100])


@pytest.fixture(scope="module")
def model():
    return toy_invariant_net(seed=31)


def make_corpus(root, rng, n, corrupt=0):
    os.makedirs(root, exist_ok=True)
    rows = []
    for i in range(n):
        name = f"img{i:02d}.ppm"
        path = os.path.join(root, name)
        if i < corrupt:
            with open(path, "wb") as f:
                f.write(b"not an image at all")
        else:
            write_ppm(path, rng.integers(0, 256, (20, 20, 3), dtype=np.uint8))
        rows.append(f"{name},{int(rng.integers(0, 10))}")
    labels = os.path.join(root, "labels.csv")
    with open(labels, "w") as f:
        f.write("\n".join(rows) + "\n")
    return labels


def read_all(out_dir):
    blobs = {}
    for base, _, files in os.walk(out_dir):
        for name in files:
            p = os.path.join(base, name)
            with open(p, "rb") as f:
                blobs[os.path.relpath(p, out_dir)] = f.read()
    return blobs


def test_sweep_counts_and_reports(model, tmp_path, rng):
    labels = make_corpus(tmp_path / "data", rng, 6)
    ds = load_dataset(tmp_path / "data", labels, class_count=model.class_count)
    result = run_sweep(model, ds, SweepOptions(schedule=S2, threads=2))
    assert len(result.records) == 6 * 2
    assert all(set(r.maps) == {"conv1", "conv2"} for r in result.records)
    assert [a.level for a in result.accuracy] == [50, 100]
    assert all(a.n == 6 for a in result.accuracy)
    assert result.report is not None and result.report.layer_ids == ("conv1", "conv2")


def test_emit_schema_and_determinism(model, tmp_path, rng):
    labels = make_corpus(tmp_path / "data", rng, 5)
    ds = load_dataset(tmp_path / "data", labels, class_count=model.class_count)
    schedule = ContrastSchedule.of([10, 50, 100])
    result = run_sweep(model, ds, SweepOptions(schedule=schedule, dump_winners=True))
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    emit_reports(result, out1)
    emit_reports(result, out2)

    acc = (out1 / "accuracy.csv").read_text().splitlines()
    assert acc[0] == "level,n,correct,accuracy"
    assert len(acc) == 1 + 3

    cons = (out1 / "consistency.csv").read_text().splitlines()
    assert cons[0] == "layer,c1,c2,n_images,fraction"
    assert len(cons) == 1 + 2 * 3  # layers x C(3,2)

    agg = (out1 / "aggregate.csv").read_text().splitlines()
    assert agg[0] == "layer,mean_fraction"

    curve = (out1 / "reference_curve.csv").read_text().splitlines()
    assert curve[0] == "layer,level,fraction"
    assert len(curve) == 1 + 2 * 3

    report = json.loads((out1 / "report.json").read_text())
    assert report["schedule"] == [10, 50, 100]
    assert report["gating"] == "gated"

    assert read_all(out1) == read_all(out2)  # re-emit is byte-identical

    dumps = list((out1 / "winners").iterdir())
    assert len(dumps) == 5 * 3 * 2  # images x levels x layers
    m = load_winner_map(dumps[0].read_bytes())
    assert (m.height, m.width) in {(18, 18), (16, 16)}


def test_thread_count_does_not_change_bytes(model, tmp_path, rng):
    labels = make_corpus(tmp_path / "data", rng, 8)
    ds = load_dataset(tmp_path / "data", labels, class_count=model.class_count)
    outs = []
    for threads, name in ((1, "t1"), (4, "t4")):
        result = run_sweep(model, ds, SweepOptions(schedule=S2, threads=threads))
        out = tmp_path / name
        emit_reports(result, out)
        outs.append(read_all(out))
    assert outs[0] == outs[1]


def test_degenerate_schedule_matches_plain_evaluation(model, tmp_path, rng):
    labels = make_corpus(tmp_path / "data", rng, 6)
    ds = load_dataset(tmp_path / "data", labels, class_count=model.class_count)
    result = run_sweep(model, ds, SweepOptions(schedule=ContrastSchedule.of([100])))

    correct = 0
    for e in ds.entries:
        pred, _ = forward_with_taps(model, preprocess_image(model, decode_image(e.path)))
        correct += pred.class_id == e.label
    assert len(result.accuracy) == 1
    assert result.accuracy[0].correct == correct
    assert result.accuracy[0].n == 6
    for lid in result.report.layer_ids:
        m = result.report.matrices[lid]
        assert m.fractions.shape == (1, 1) and m.fractions[0, 0] == 1.0


def test_union_of_halves_reaggregates_identically(model, tmp_path, rng):
    labels = make_corpus(tmp_path / "data", rng, 10)
    ds = load_dataset(tmp_path / "data", labels, class_count=model.class_count)
    full = run_sweep(model, ds, SweepOptions(schedule=S2))

    import dataclasses
    half1 = dataclasses.replace(ds, entries=ds.entries[:5])
    half2 = dataclasses.replace(ds, entries=ds.entries[5:])
    r1 = run_sweep(model, half1, SweepOptions(schedule=S2))
    r2 = run_sweep(model, half2, SweepOptions(schedule=S2))
    merged = build_report(r1.records + r2.records, S2, "gated", full.report.layer_ids)
    for lid in full.report.layer_ids:
        a, b = full.report.matrices[lid], merged.matrices[lid]
        assert np.array_equal(a.n_images, b.n_images)
        mask = ~np.isnan(a.fractions)
        assert np.array_equal(mask, ~np.isnan(b.fractions))
        assert np.all(np.abs(a.fractions[mask] - b.fractions[mask]) <= 1e-12)


def test_failure_manifest_within_budget(model, tmp_path, rng):
    labels = make_corpus(tmp_path / "data", rng, 10, corrupt=1)
    ds = load_dataset(tmp_path / "data", labels, class_count=model.class_count)
    result = run_sweep(model, ds, SweepOptions(schedule=S2))
    assert len(result.failures) == 1
    assert result.failures[0][0] == "img00.ppm"
    assert "DecodeError" in result.failures[0][1]
    assert result.n_images == 9
    assert all(a.n == 9 for a in result.accuracy)


def test_abort_over_budget(model, tmp_path, rng):
    labels = make_corpus(tmp_path / "data", rng, 10, corrupt=2)
    ds = load_dataset(tmp_path / "data", labels, class_count=model.class_count)
    with pytest.raises(SweepAborted):
        run_sweep(model, ds, SweepOptions(schedule=S2))


def test_split_filters_consistency_not_accuracy(model, tmp_path, rng):
    labels = make_corpus(tmp_path / "data", rng, 6)
    ds = load_dataset(tmp_path / "data", labels, class_count=model.class_count)
    both = run_sweep(model, ds, SweepOptions(schedule=S2, split="both"))
    corr = run_sweep(model, ds, SweepOptions(schedule=S2, split="correct"))
    inc = run_sweep(model, ds, SweepOptions(schedule=S2, split="incorrect"))
    assert [a.correct for a in both.accuracy] == [a.correct for a in corr.accuracy]
    for lid in both.report.layer_ids:
        n_both = both.report.matrices[lid].n_images
        n_sum = corr.report.matrices[lid].n_images + inc.report.matrices[lid].n_images
        assert np.array_equal(n_both, n_sum)


def test_accuracy_by_contrast_counts(model, tmp_path, rng):
    labels = make_corpus(tmp_path / "data", rng, 4)
    ds = load_dataset(tmp_path / "data", labels, class_count=model.class_count)
    result = run_sweep(model, ds, SweepOptions(schedule=S2))
    curve = accuracy_by_contrast(result.records, ds)
    assert [(a.level, a.n) for a in curve] == [(50, 4), (100, 4)]
    for a in curve:
        assert a.accuracy == a.correct / a.n
        assert 0.0 <= a.accuracy <= 1.0


# --- CLI ---

def cli_env(tmp_path, rng, model, n=4, corrupt=0):
    labels = make_corpus(tmp_path / "data", rng, n, corrupt=corrupt)
    model_path = tmp_path / "model.cpm"
    save_model_file(model, model_path)
    return str(model_path), str(tmp_path / "data"), str(labels)


def test_cli_sweep_end_to_end(model, tmp_path, rng):
    m, d, l = cli_env(tmp_path, rng, model)
    out = str(tmp_path / "out")
    code = cli_main(["sweep", "--model", m, "--data", d, "--labels", l,
                     "--out", out, "--levels", "50,100", "--threads", "2"])
    assert code == 0
    assert sorted(os.listdir(out)) == [
        "accuracy.csv", "aggregate.csv", "confidence_bins.csv", "consistency.csv",
        "failures.csv", "reference_curve.csv", "report.json",
    ]


def test_cli_accuracy_only(model, tmp_path, rng):
    m, d, l = cli_env(tmp_path, rng, model)
    out = str(tmp_path / "out")
    code = cli_main(["accuracy", "--model", m, "--data", d, "--labels", l,
                     "--out", out, "--levels", "100"])
    assert code == 0
    files = sorted(os.listdir(out))
    assert "accuracy.csv" in files and "consistency.csv" not in files


def test_cli_usage_errors_exit_2(model, tmp_path, rng):
    m, d, l = cli_env(tmp_path, rng, model)
    with pytest.raises(SystemExit) as e:
        cli_main(["sweep", "--model", m, "--data", d, "--labels", l,
                  "--out", str(tmp_path / "o"), "--levels", "50,banana"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        cli_main(["sweep"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        cli_main(["sweep", "--model", m, "--data", d, "--labels", l,
                  "--out", str(tmp_path / "o"), "--mode", "maybe"])
    assert e.value.code == 2


def test_cli_aborted_run_exits_1(model, tmp_path, rng):
    m, d, l = cli_env(tmp_path, rng, model, n=5, corrupt=2)
    code = cli_main(["sweep", "--model", m, "--data", d, "--labels", l,
                     "--out", str(tmp_path / "out"), "--levels", "100"])
    assert code == 1


def test_cli_winners_debug(model, tmp_path, rng, capsys):
    m, d, l = cli_env(tmp_path, rng, model)
    image = os.path.join(d, "img00.ppm")
    dump = str(tmp_path / "w.cpwm")
    code = cli_main(["winners", "--model", m, "--image", image,
                     "--level", "50", "--layer", "conv1", "--dump", dump])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["layer"] == "conv1" and doc["level"] == 50
    assert doc["height"] == 18 and doc["width"] == 18
    assert len(doc["winners"]) == 18
    assert len(doc["logits"]) == model.class_count
    assert len(doc["probabilities"]) == model.class_count
    assert abs(sum(doc["probabilities"]) - 1.0) <= 1e-5
    assert doc["prediction"]["class_id"] == int(np.argmax(doc["probabilities"]))
    m2 = load_winner_map(open(dump, "rb").read())
    assert m2.winners.tolist() == doc["winners"]


def test_cli_winners_rejects_unknown_layer(model, tmp_path, rng):
    m, d, _ = cli_env(tmp_path, rng, model)
    with pytest.raises(SystemExit) as e:
        cli_main(["winners", "--model", m, "--image", os.path.join(d, "img00.ppm"),
                  "--level", "50", "--layer", "pool"])
    assert e.value.code == 2
