import itertools
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from partiallab.errors import DomainError, ShapeError
from partiallab.metrics import (average_precision, binarize, evaluate_scores, exact_match,
                                f1_scores, mean_average_precision, pc_ov_precision_recall)
from partiallab.rng import Rng

Y = np.array([[1, -1], [-1, 1]])
Y_HAT = np.array([[1, 1], [-1, 1]])


# ---- brute-force oracle: plain loops and exact fractions ----

def _frac(a, b):
    return Fraction(0) if b == 0 else Fraction(a, b)


def oracle_counts(y, y_hat):
    N, C = len(y), len(y[0])
    correct = [sum(1 for i in range(N) if y[i][c] == 1 and y_hat[i][c] == 1) for c in range(C)]
    pred = [sum(1 for i in range(N) if y_hat[i][c] == 1) for c in range(C)]
    gt = [sum(1 for i in range(N) if y[i][c] == 1) for c in range(C)]
    return correct, pred, gt


def oracle_metrics(y, y_hat):
    N, C = len(y), len(y[0])
    correct, pred, gt = oracle_counts(y, y_hat)
    em = Fraction(sum(1 for i in range(N) if list(y[i]) == list(y_hat[i])), N)
    f1 = []
    for c in range(C):
        p, r = _frac(correct[c], pred[c]), _frac(correct[c], gt[c])
        f1.append(0 if p + r == 0 else 2 * p * r / (p + r))
    macro = sum(f1, Fraction(0)) / C
    P, R = _frac(sum(correct), sum(pred)), _frac(sum(correct), sum(gt))
    micro = 0 if P + R == 0 else 2 * P * R / (P + R)
    pc_p = sum((_frac(correct[c], pred[c]) for c in range(C)), Fraction(0)) / C
    pc_r = sum((_frac(correct[c], gt[c]) for c in range(C)), Fraction(0)) / C
    return em, macro, micro, pc_p, pc_r, P, R


def oracle_ap(scores, positive):
    # O(N^2): rank of item i = 1 + #items strictly ahead of it
    n = len(scores)

    def ahead(j, i):
        return scores[j] > scores[i] or (scores[j] == scores[i] and j < i)

    rank = [1 + sum(1 for j in range(n) if ahead(j, i)) for i in range(n)]
    precs = []
    for i in range(n):
        if positive[i]:
            hits = sum(1 for j in range(n) if positive[j] and rank[j] <= rank[i])
            precs.append(Fraction(hits, rank[i]))
    return sum(precs, Fraction(0)) / len(precs)


# ---- worked examples ----

def test_binarize_examples():
    assert binarize([0.1, -0.1]).tolist() == [1, -1]
    assert binarize([0.0]).tolist() == [1]
    assert binarize([-3.0, -1e-300]).tolist() == [-1, -1]


def test_exact_match_examples():
    assert exact_match(Y, Y) == 1.0
    assert exact_match(Y, Y_HAT) == 0.5
    assert exact_match(Y, -Y) == 0.0
    with pytest.raises(DomainError):
        exact_match([[1, 0]], [[1, 1]])
    with pytest.raises(ShapeError):
        exact_match(Y, Y[:1])


def test_f1_examples():
    macro, micro = f1_scores(Y, Y_HAT)
    assert macro == pytest.approx(5 / 6, abs=1e-15)
    assert micro == pytest.approx(0.8, abs=1e-15)
    assert f1_scores(Y, Y) == (1.0, 1.0)
    assert f1_scores(Y, -np.ones_like(Y)) == (0.0, 0.0)


def test_pc_ov_examples():
    pc_p, pc_r, ov_p, ov_r = pc_ov_precision_recall(Y, Y_HAT)
    assert pc_p == pytest.approx(0.75, abs=1e-15)
    assert pc_r == 1.0
    assert ov_p == pytest.approx(2 / 3, abs=1e-15)
    assert ov_r == 1.0
    assert pc_ov_precision_recall(Y, Y) == (1.0, 1.0, 1.0, 1.0)


def test_all_positive_predictions(rng):
    y = np.where(rng.uniform((6, 4)) < 0.3, 1, -1)
    y[0, 0] = 1
    k = int((y == 1).sum())
    _, _, ov_p, ov_r = pc_ov_precision_recall(y, np.ones_like(y))
    assert ov_p == pytest.approx(k / y.size, abs=1e-15)
    assert ov_r == 1.0


def test_average_precision_example():
    assert average_precision([0.9, 0.8, 0.7], [True, False, True]) == pytest.approx(5 / 6, abs=1e-15)
    assert average_precision([0.1, 0.5, 0.3], [False, True, True]) == 1.0
    with pytest.raises(DomainError):
        average_precision([0.1, 0.2], [False, False])


def test_ap_ties_go_to_lower_index():
    # equal scores: the positive at index 0 ranks first, the one at index 2 ranks last
    assert average_precision([0.5, 0.5, 0.5], [True, False, False]) == 1.0
    assert average_precision([0.5, 0.5, 0.5], [False, False, True]) == pytest.approx(1 / 3)


def test_map_perfect_ranking():
    y = np.array([[1, -1], [1, 1], [-1, 1], [-1, -1]])
    assert mean_average_precision(y * 2.0 + 0.1, y) == 1.0


def test_map_drops_classes_without_positives():
    y = np.array([[1, -1], [-1, -1]])
    with pytest.warns(RuntimeWarning, match=r"\[1\]"):
        m = mean_average_precision(np.array([[0.3, 0.1], [0.2, 0.4]]), y)
    assert m == 1.0
    with pytest.raises(DomainError), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mean_average_precision(np.zeros((2, 2)), -np.ones((2, 2)))


# ---- oracle comparison ----

def test_brute_force_oracle_200_instances():
    r = Rng(2024)
    for _ in range(200):
        N = 1 + int(r.integers(8))
        C = 1 + int(r.integers(5))
        y = np.where(r.uniform((N, C)) < 0.4, 1, -1)
        y[r.integers(N, size=(C,)), np.arange(C)] = 1  # at least one positive per class
        # coarse scores so ties occur
        scores = np.round(r.normal((N, C)) * 2) / 2
        y_hat = binarize(scores)
        em, macro, micro, pc_p, pc_r, ov_p, ov_r = oracle_metrics(y.tolist(), y_hat.tolist())
        rep = evaluate_scores(scores, y)
        assert rep.exact_match == float(em)
        assert rep.macro_f1 == pytest.approx(float(macro), abs=1e-15)
        assert rep.micro_f1 == pytest.approx(float(micro), abs=1e-15)
        assert rep.pc_precision == pytest.approx(float(pc_p), abs=1e-15)
        assert rep.pc_recall == pytest.approx(float(pc_r), abs=1e-15)
        assert rep.ov_precision == pytest.approx(float(ov_p), abs=1e-15)
        assert rep.ov_recall == pytest.approx(float(ov_r), abs=1e-15)
        aps = [oracle_ap(scores[:, c].tolist(), (y[:, c] == 1).tolist()) for c in range(C)]
        assert rep.map == pytest.approx(float(sum(aps) / C), abs=1e-12)


# ---- properties ----

label_mats = st.integers(1, 6).flatmap(lambda n: st.integers(1, 4).flatmap(
    lambda c: st.tuples(
        st.lists(st.lists(st.sampled_from([-1, 1]), min_size=c, max_size=c), min_size=n, max_size=n),
        st.lists(st.lists(st.integers(-16, 16).map(lambda k: k / 4), min_size=c, max_size=c),
                 min_size=n, max_size=n),
        st.permutations(list(range(n))))))


def _with_positives(y):
    y = np.array(y)
    y[0, :] = 1
    return y


@settings(max_examples=150, deadline=None)
@given(label_mats)
def test_row_permutation_invariance(case):
    y, s, perm = case
    y = _with_positives(y)
    s = np.array(s)
    a = evaluate_scores(s, y).to_dict()
    b = evaluate_scores(s[perm], y[perm]).to_dict()
    for k in a:
        if k == "map":
            # ties are ordered by index, so a permutation can reorder tied items
            if len(np.unique(s)) == s.size:
                assert a[k] == pytest.approx(b[k], abs=1e-12)
        else:
            assert a[k] == pytest.approx(b[k], abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(label_mats)
def test_map_monotone_transform_invariance(case):
    y, s, _ = case
    y = _with_positives(y)
    s = np.array(s)
    base = mean_average_precision(s, y)
    assert mean_average_precision(np.exp(s) * 3.0 - 1.0, y) == pytest.approx(base, abs=1e-12)
    assert mean_average_precision(np.arctan(s), y) == pytest.approx(base, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(label_mats)
def test_micro_f1_identity_and_ranges(case):
    y, s, _ = case
    y = np.array(y)
    y_hat = binarize(s)
    _, micro = f1_scores(y, y_hat)
    _, _, P, R = pc_ov_precision_recall(y, y_hat)
    expected = 0.0 if P + R == 0 else 2 * P * R / (P + R)
    assert micro == pytest.approx(expected, abs=1e-12)
    for v in (*f1_scores(y, y_hat), *pc_ov_precision_recall(y, y_hat), exact_match(y, y_hat)):
        assert 0.0 <= v <= 1.0


@settings(max_examples=100, deadline=None)
@given(label_mats)
def test_exact_match_one_implies_all_one(case):
    y, _, _ = case
    y = _with_positives(y)
    rep = evaluate_scores(y * 1.5, y)
    assert all(v == 1.0 for v in rep.to_dict().values())


def test_exhaustive_small_case():
    # every labeling of a 3x1 column with every score order gives the oracle AP
    scores = [0.3, 0.1, 0.2]
    for bits in itertools.product([False, True], repeat=3):
        if any(bits):
            assert average_precision(scores, bits) == pytest.approx(float(oracle_ap(scores, bits)))
