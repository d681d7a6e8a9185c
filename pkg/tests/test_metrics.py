import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from spgat.errors import EvalError
from spgat.metrics import (EvalReport, SessionSummary, average_accuracy, confusion_matrix, kappa,
                           overall_accuracy, per_class_accuracy)

from oracles import metrics_from_confusion


def test_perfect_predictions():
    r = EvalReport.from_predictions([0, 1, 2, 2], [0, 1, 2, 2], 3)
    assert (r.oa, r.aa, r.kappa) == (1.0, 1.0, 1.0)


def test_closed_form_kappa():
    assert kappa(np.array([[50, 0], [0, 50]])) == 1.0
    assert kappa(np.array([[25, 25], [25, 25]])) == 0.0


def test_marginal_independent_predictions_give_zero_kappa():
    # outer product of marginals: predictions carry no information about truth
    rows = np.array([2, 3, 5])
    cols = np.array([4, 1, 5])
    cm = np.outer(rows, cols)
    assert kappa(cm) == pytest.approx(0.0, abs=1e-15)


def test_confusion_orientation():
    cm = confusion_matrix([0, 0, 1], [1, 1, 1], 2)
    np.testing.assert_array_equal(cm, [[0, 2], [0, 1]])


def test_random_matrices_match_formula_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        k = int(rng.integers(2, 9))
        cm = rng.integers(0, 60, size=(k, k))
        cm[np.diag_indices(k)] += rng.integers(1, 40, size=k)
        r = EvalReport.from_confusion(cm)
        oa, aa, kap = metrics_from_confusion(cm.tolist())
        assert abs(r.oa - oa) <= 1e-12
        assert abs(r.aa - aa) <= 1e-12
        assert abs(r.kappa - kap) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(hnp.arrays(np.int64, st.tuples(st.integers(2, 6)).map(lambda t: (t[0], t[0])),
                  elements=st.integers(0, 30)))
def test_report_invariants(cm):
    if cm.sum() == 0:
        with pytest.raises(EvalError):
            EvalReport.from_confusion(cm)
        return
    r = EvalReport.from_confusion(cm)
    assert 0.0 <= r.oa <= 1.0
    assert 0.0 <= r.aa <= 1.0
    assert -1.0 - 1e-12 <= r.kappa <= 1.0 + 1e-12
    present = cm.sum(1) > 0
    assert r.aa == pytest.approx(np.mean(np.diag(cm)[present] / cm.sum(1)[present]))
    if cm.sum() == np.trace(cm):
        assert r.kappa == 1.0


def test_per_class_accuracy_marks_absent_classes():
    cm = np.array([[3, 1, 0], [0, 0, 0], [1, 0, 4]])
    acc = per_class_accuracy(cm)
    assert acc[0] == 0.75 and np.isnan(acc[1]) and acc[2] == 0.8
    assert average_accuracy(cm) == pytest.approx((0.75 + 0.8) / 2)
    assert overall_accuracy(cm) == pytest.approx(7 / 9)


def test_single_class_diagonal_kappa_is_one():
    assert kappa(np.array([[7, 0], [0, 0]])) == 1.0


def test_empty_and_invalid_inputs():
    with pytest.raises(EvalError):
        confusion_matrix([], [], 3)
    with pytest.raises(EvalError):
        confusion_matrix([0, 3], [0, 1], 3)
    with pytest.raises(EvalError):
        EvalReport.from_confusion(np.array([[1, -1], [0, 1]]))


def test_session_summary_means():
    rng = np.random.default_rng(3)
    reports = [EvalReport.from_confusion(rng.integers(1, 20, size=(3, 3))) for _ in range(4)]
    s = SessionSummary(reports)
    assert abs(s.oa - sum(r.oa for r in reports) / 4) <= 1e-12
    assert abs(s.aa - sum(r.aa for r in reports) / 4) <= 1e-12
    assert abs(s.kappa - sum(r.kappa for r in reports) / 4) <= 1e-12
    np.testing.assert_array_equal(s.confusion, sum(r.confusion for r in reports))
    single = SessionSummary(reports[:1])
    assert (single.oa, single.aa, single.kappa) == (reports[0].oa, reports[0].aa, reports[0].kappa)
    with pytest.raises(EvalError):
        SessionSummary().oa
