import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynagg.metrics import ConfusionMatrix, MetricsError, confusion_matrix

HAND_TRUTH = [0, 0, 1]
HAND_PRED = [0, 1, 1]


def test_perfect_prediction_is_diagonal():
    labels = [0, 1, 2, 2, 1, 0, 0]
    cm = confusion_matrix(labels, labels, 3)
    assert (cm.counts == np.diag([3, 2, 2])).all()
    assert cm.mean_iou() == 1.0 and cm.mean_class_accuracy() == 1.0


def test_hand_counts():
    cm = confusion_matrix(HAND_TRUTH, HAND_PRED, 2)
    assert cm.counts.tolist() == [[1, 1], [0, 1]]


def test_hand_scores():
    cm = confusion_matrix(HAND_TRUTH, HAND_PRED, 2)
    assert abs(cm.iou_per_class()[0] - 0.5) <= 1e-12
    assert abs(cm.iou_per_class()[1] - 0.5) <= 1e-12
    assert abs(cm.mean_iou() - 0.5) <= 1e-12
    assert abs(cm.mean_class_accuracy() - 0.75) <= 1e-12


def test_absent_class_excluded():
    cm = confusion_matrix(HAND_TRUTH, HAND_PRED, 3)
    assert np.isnan(cm.iou_per_class()[2])
    assert np.isnan(cm.accuracy_per_class()[2])
    assert abs(cm.mean_iou() - 0.5) <= 1e-12
    assert abs(cm.mean_class_accuracy() - 0.75) <= 1e-12


def test_predicted_only_class_counts_in_iou_not_accuracy():
    cm = confusion_matrix([0, 0], [0, 2], 3)
    assert cm.iou_per_class()[2] == 0.0
    assert np.isnan(cm.accuracy_per_class()[2])
    assert cm.mean_iou() == pytest.approx((0.5 + 0.0) / 2, abs=1e-12)
    assert cm.mean_class_accuracy() == pytest.approx(0.5, abs=1e-12)


def test_all_undefined_raises():
    cm = ConfusionMatrix(3)
    with pytest.raises(MetricsError):
        cm.mean_iou()
    with pytest.raises(MetricsError):
        cm.mean_class_accuracy()


def test_out_of_range_label():
    with pytest.raises(MetricsError, match="out of range"):
        confusion_matrix([0, 3], [0, 1], 3)


def test_length_mismatch():
    with pytest.raises(MetricsError):
        confusion_matrix([0, 1], [0], 2)


def test_accumulation_equals_concatenation():
    rng = np.random.default_rng(0)
    t1, p1 = rng.integers(0, 5, 40), rng.integers(0, 5, 40)
    t2, p2 = rng.integers(0, 5, 25), rng.integers(0, 5, 25)
    a = ConfusionMatrix(5).accumulate(t1, p1).accumulate(t2, p2)
    b = confusion_matrix(np.concatenate([t1, t2]), np.concatenate([p1, p2]), 5)
    assert (a.counts == b.counts).all()
    assert ((confusion_matrix(t1, p1, 5) + confusion_matrix(t2, p2, 5)).counts == b.counts).all()


labels = st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=80)


@settings(max_examples=100, deadline=None)
@given(labels)
def test_iou_bounded_by_accuracy(pairs):
    t, p = zip(*pairs)
    cm = confusion_matrix(t, p, 6)
    iou, acc = cm.iou_per_class(), cm.accuracy_per_class()
    present = ~np.isnan(acc)
    assert (iou[present] >= 0).all()
    assert (iou[present] <= acc[present] + 1e-15).all()


@settings(max_examples=100, deadline=None)
@given(labels, st.permutations(range(6)))
def test_relabeling_permutes_classes(pairs, perm):
    t, p = (np.array(v) for v in zip(*pairs))
    perm = np.array(perm)
    a = confusion_matrix(t, p, 6)
    b = confusion_matrix(perm[t], perm[p], 6)
    np.testing.assert_array_equal(b.iou_per_class()[perm], a.iou_per_class())
    assert b.mean_iou() == pytest.approx(a.mean_iou(), abs=1e-12)
    assert b.mean_class_accuracy() == pytest.approx(a.mean_class_accuracy(), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(labels, min_size=1, max_size=5), st.randoms())
def test_scene_order_irrelevant(scenes, rnd):
    order = list(range(len(scenes)))
    rnd.shuffle(order)
    a, b = ConfusionMatrix(6), ConfusionMatrix(6)
    for s in scenes:
        a.accumulate(*zip(*s))
    for i in order:
        b.accumulate(*zip(*scenes[i]))
    assert (a.counts == b.counts).all()


def test_report_json_and_text():
    cm = ConfusionMatrix(3, ["floor", "wall", "chair"]).accumulate(HAND_TRUTH, HAND_PRED)
    rep = json.loads(cm.to_json())
    assert rep["mIoU"] == 0.5 and rep["mA"] == 0.75
    assert [c["class"] for c in rep["classes"]] == ["floor", "wall", "chair"]
    assert rep["classes"][2]["iou"] is None
    text = cm.to_text().splitlines()
    assert text[0].split() == ["class", "IoU", "acc"]
    assert text[1].split() == ["floor", "0.5000", "0.5000"]
    assert text[2].split() == ["wall", "0.5000", "1.0000"]
    assert text[3].split() == ["chair", "-", "-"]
    assert text[-2].split() == ["mIoU", "0.5000"]
    assert text[-1].split() == ["mA", "0.7500"]
