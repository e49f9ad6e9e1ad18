import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from didvsm.errors import DataError, DimensionError, InputError
from didvsm.evaluation import ConfusionMatrix, Metrics, confusion, format_confusion, metrics, parse_report, report
from oracles import loop_confusion

LABELS = ("EGY", "GLF", "LAV", "MSA", "NOR")


@pytest.fixture
def published(fixtures_dir):
    obj = json.loads((fixtures_dir / "published_confusion.json").read_text())
    return ConfusionMatrix(obj["labels"], obj["counts"])


def test_perfect_predictions_diagonal():
    truth = ["EGY", "GLF", "LAV", "LAV"]
    cm = confusion(truth, truth, LABELS)
    assert np.array_equal(cm.counts, np.diag([1, 1, 2, 0, 0]))
    m = metrics(ConfusionMatrix(LABELS[:3], np.diag([1, 1, 2])))
    assert m.accuracy == 1.0 and m.macro_precision == 1.0 and m.macro_recall == 1.0


def test_single_predicted_column():
    cm = confusion(["EGY", "GLF", "NOR"], ["EGY"] * 3, LABELS)
    assert np.count_nonzero(cm.counts.sum(axis=0)) == 1
    assert cm.counts[:, 0].sum() == 3


def test_matches_loop_oracle(rng):
    truth = [LABELS[i] for i in rng.integers(5, size=100)]
    pred = [LABELS[i] for i in rng.integers(5, size=100)]
    cm = confusion(truth, pred, LABELS)
    assert cm.counts.tolist() == loop_confusion(truth, pred, list(LABELS))
    assert cm.total == 100
    assert metrics(cm).accuracy == np.trace(cm.counts) / 100


def test_confusion_errors():
    with pytest.raises(DimensionError):
        confusion(["EGY"], [], LABELS)
    with pytest.raises(DataError):
        confusion([], [], LABELS)
    with pytest.raises(DataError):
        confusion(["XXX"], ["EGY"], LABELS)


def test_published_confusion_metrics(published):
    m = metrics(published)
    assert m.per_class[0][1] == pytest.approx(229 / 314, abs=1e-12)
    assert abs(m.accuracy - np.trace(published.counts) / published.total) < 1e-6


def test_symmetric_two_class():
    m = metrics(ConfusionMatrix(("a", "b"), [[1, 1], [1, 1]]))
    assert (m.accuracy, m.macro_precision, m.macro_recall) == (0.5, 0.5, 0.5)


def test_zero_denominator_warns():
    with pytest.warns(RuntimeWarning, match="precision"):
        m = metrics(ConfusionMatrix(("a", "b"), [[2, 0], [1, 0]]))
    assert m.per_class[1][0] == 0.0


def test_negative_counts_rejected():
    with pytest.raises(InputError):
        ConfusionMatrix(("a", "b"), [[1, -1], [0, 1]])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_metrics_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    counts = rng.integers(1, 30, size=(4, 4))
    perm = rng.permutation(4)
    labels = ("a", "b", "c", "d")
    base = metrics(ConfusionMatrix(labels, counts))
    moved = metrics(ConfusionMatrix([labels[i] for i in perm], counts[np.ix_(perm, perm)]))
    assert moved.accuracy == pytest.approx(base.accuracy, abs=1e-15)
    assert moved.macro_precision == pytest.approx(base.macro_precision, abs=1e-12)
    assert moved.macro_recall == pytest.approx(base.macro_recall, abs=1e-12)
    assert [moved.per_class[k] for k in np.argsort(perm)] == pytest.approx(list(base.per_class))


def m_of(acc, prc, rcl):
    return Metrics(acc, prc, rcl, ())


def test_report_single_row():
    text = report([("X_P", m_of(0.45, 0.46, 0.44), 1200)])
    rows = parse_report(text)
    assert len(rows) == 1 and rows[0]["best"]


def test_report_marks_best():
    text = report([("Z_C", m_of(0.56, 0.5, 0.5), 600), ("X_A", m_of(0.55, 0.5, 0.5), 400)])
    rows = parse_report(text)
    assert [r["best"] for r in rows] == [True, False]


def test_report_round_trip(published):
    results = [("X_P", m_of(0.4512, 0.4471, 0.4609), 1200),
               ("Z_C+LDA+WCCN (A)", metrics(published), 4),
               ("A+B", m_of(0.6, 0.61, 0.59), 8)]
    rows = parse_report(report(results))
    for (name, m, dim), row in zip(results, rows):
        assert row["name"] == name and row["dim"] == dim
        assert row["acc"] == round(m.accuracy, 2)
        assert row["prc"] == round(m.macro_precision, 2)
        assert row["rcl"] == round(m.macro_recall, 2)


def test_report_empty():
    with pytest.raises(InputError):
        report([])


def test_format_confusion(published):
    lines = format_confusion(published).splitlines()
    assert lines[0].split() == list(LABELS)
    assert lines[1].split() == ["EGY", "229", "15", "52", "6", "12"]
