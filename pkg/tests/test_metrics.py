import math
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from expertroute.errors import NoGoldLabels
from expertroute.metrics import METRIC_NAMES, NO_ANSWER, compute_metrics, confusion_matrix, metrics_from_confusion


def oracle(cm):
    """Textbook per-definition metrics, computed from the expanded sample list."""
    k = len(cm)
    gold, pred = [], []
    for i in range(k):
        for j in range(k):
            gold += [i] * cm[i][j]
            pred += [j] * cm[i][j]
    n = len(gold)

    def div(a, b):
        return a / b if b else 0.0

    acc = sum(g == p for g, p in zip(gold, pred)) / n
    f1w = prec = spec = 0.0
    for c in range(k):
        tp = sum(g == c and p == c for g, p in zip(gold, pred))
        fp = sum(g != c and p == c for g, p in zip(gold, pred))
        fn = sum(g == c and p != c for g, p in zip(gold, pred))
        tn = n - tp - fp - fn
        pr, rc = div(tp, tp + fp), div(tp, tp + fn)
        f1w += div(2 * pr * rc, pr + rc) * (tp + fn) / n
        prec += pr / k
        spec += div(tn, tn + fp) / k

    # MCC as the correlation between one-hot gold and prediction indicators
    def onehot(v):
        return [[1.0 if x == c else 0.0 for c in range(k)] for x in v]
    X, Y = onehot(gold), onehot(pred)
    mean = lambda M, c: sum(r[c] for r in M) / n
    def cov(A, B):
        return sum(sum((a[c] - mean(A, c)) * (b[c] - mean(B, c)) for a, b in zip(A, B)) for c in range(k))
    cxx, cyy = cov(X, X), cov(Y, Y)
    mcc = cov(X, Y) / math.sqrt(cxx * cyy) if cxx * cyy > 0 else 0.0

    p_e = sum((gold.count(c) / n) * (pred.count(c) / n) for c in range(k))
    if abs(1 - p_e) < 1e-15:
        kappa = 1.0 if acc == 1.0 else 0.0
    else:
        kappa = (acc - p_e) / (1 - p_e)
    return {"acc": acc, "weighted_f1": f1w, "precision": prec, "specificity": spec, "mcc": mcc, "kappa": kappa}


def assert_close(got, exp, tol=1e-12):
    for m in METRIC_NAMES:
        assert abs(got[m] - exp[m]) <= tol, (m, got[m], exp[m])


def test_fixed_three_class_matrix():
    cm = [[5, 1, 0], [2, 6, 1], [0, 1, 4]]
    got = metrics_from_confusion(cm)
    assert_close(got, oracle(cm))
    assert got["acc"] == pytest.approx(15 / 20)


def random_matrix(rng):
    k = rng.randint(2, 6)
    cm = [[rng.choice([0, 0, rng.randint(0, 20)]) for _ in range(k)] for _ in range(k)]
    if sum(map(sum, cm)) == 0:
        cm[0][0] = 1
    return cm


def test_random_matrices_match_oracle():
    rng = random.Random(2024)
    for _ in range(100):
        cm = random_matrix(rng)
        assert_close(metrics_from_confusion(cm), oracle(cm))


def test_matches_sklearn_when_available():
    skm = pytest.importorskip("sklearn.metrics")
    rng = random.Random(1)
    for _ in range(20):
        gold = [rng.choice("ABCD") for _ in range(60)]
        pred = [g if rng.random() < 0.5 else rng.choice("ABCD") for g in gold]
        got = compute_metrics(zip(gold, pred))
        labels = sorted(set(gold) | set(pred))
        assert got["acc"] == pytest.approx(skm.accuracy_score(gold, pred), abs=1e-12)
        assert got["weighted_f1"] == pytest.approx(skm.f1_score(gold, pred, average="weighted", labels=labels,
                                                                zero_division=0), abs=1e-12)
        assert got["precision"] == pytest.approx(skm.precision_score(gold, pred, average="macro", labels=labels,
                                                                     zero_division=0), abs=1e-12)
        assert got["mcc"] == pytest.approx(skm.matthews_corrcoef(gold, pred), abs=1e-12)
        assert got["kappa"] == pytest.approx(skm.cohen_kappa_score(gold, pred), abs=1e-12)


def test_perfect_predictions():
    got = compute_metrics([(g, g) for g in "ABCDABCA"])
    assert got == {"acc": 1.0, "weighted_f1": 1.0, "precision": 1.0, "specificity": 1.0, "mcc": 1.0, "kappa": 1.0}


@pytest.mark.parametrize("cm", [[[1, 1], [1, 1]], [[4, 2], [2, 1]], [[2, 2, 2], [2, 2, 2], [2, 2, 2]]])
def test_chance_agreement_kappa_zero(cm):
    assert abs(metrics_from_confusion(cm)["kappa"]) < 1e-12


@pytest.mark.parametrize("cm", [[[5]], [[3, 0], [0, 7]], np.diag([1, 2, 3, 4]).tolist()])
def test_diagonal_kappa_one(cm):
    assert metrics_from_confusion(cm)["kappa"] == 1.0


def test_failed_predictions_are_wrong():
    labels, cm = confusion_matrix(["A", "B"], ["A", None])
    assert labels == [NO_ANSWER, "A", "B"]
    assert compute_metrics([("A", "A"), ("B", None)])["acc"] == 0.5


def test_no_gold():
    with pytest.raises(NoGoldLabels):
        compute_metrics([(None, "A")])
    with pytest.raises(NoGoldLabels):
        metrics_from_confusion([[0, 0], [0, 0]])


@given(st.lists(st.tuples(st.sampled_from("ABCDE"), st.sampled_from("ABCDE")), min_size=1, max_size=80))
def test_metric_bounds(pairs):
    m = compute_metrics(pairs)
    for name in ("acc", "weighted_f1", "precision", "specificity"):
        assert 0.0 <= m[name] <= 1.0 + 1e-12
    for name in ("mcc", "kappa"):
        assert -1.0 - 1e-12 <= m[name] <= 1.0 + 1e-12


@given(st.lists(st.tuples(st.sampled_from("ABCD"), st.sampled_from("ABCD")), min_size=1, max_size=50),
       st.randoms(use_true_random=False))
def test_permutation_invariance(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    assert compute_metrics(shuffled) == compute_metrics(pairs)
