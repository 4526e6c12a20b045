import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import min_subset_size, min_subset_size_vectorised

from cemag import DiagnosticError
from cemag.diagnostics import (
    aggregate,
    assign_groups,
    class_unique_ce,
    fraction_rule_k,
    frequency_magnitude_profile,
    minimal_ce_count,
    topk_contribution_share,
)
from cemag.probe import Decomposition


def _binary(kind, ce, bias, iid=0):
    """A true-positive binary decomposition, labelled by the model's tie rule."""
    ce = np.asarray(ce, dtype=float)
    value = math.fsum(ce.tolist()) + bias
    label = int(value >= 0) if kind == "logistic" else int(value > 0)
    return Decomposition(kind, ce, float(bias), label, value, iid, label)


def _head(ce, bias, iid=0):
    ce = np.asarray(ce, dtype=float)
    bias = np.asarray(bias, dtype=float)
    values = np.array([math.fsum(r) for r in ce.tolist()]) + bias
    label = int(np.argmax(values))
    return Decomposition("head", ce, bias, label, values, iid, label)


# ---------------------------------------------------------------------------
# minimal CE count


def test_head_worked_example():
    d = _head([[3, -1, 2], [2.5, 0, 0]], [0, 0])
    assert d.predicted_label == 0
    s = minimal_ce_count(d)
    assert (s.k, s.dim, s.cls) == (1, 3, 0)
    assert s.fraction == 1 / 3


def test_logistic_worked_example():
    assert minimal_ce_count(_binary("logistic", [0.5, 0.4, -0.2], -0.1)).k == 1


def test_label_zero_uses_most_negative_first():
    d = _binary("logistic", [-0.1, -3.0, 0.5, -1.0], 1.5)
    assert d.predicted_label == 0
    assert minimal_ce_count(d).k == 1


def test_bias_alone_gives_zero():
    assert minimal_ce_count(_binary("svm", [0.2, -0.1], 0.5)).k == 0


def test_svm_tie_rules():
    # decision exactly 0 is label 0 for the svm and 1 for logistic regression
    d_svm = _binary("svm", [1.0, -1.0], 0.0)
    d_lg = _binary("logistic", [1.0, -1.0], 0.0)
    assert d_svm.predicted_label == 0 and d_lg.predicted_label == 1
    assert minimal_ce_count(d_svm).k == 0
    assert minimal_ce_count(d_lg).k == 0


def test_head_tie_prefers_smaller_class():
    # class 0 wins the tie against class 1, so equality already suffices
    d = _head([[2.0, 0.0], [1.0, 1.0]], [0.0, 0.0])
    assert d.predicted_label == 0
    assert minimal_ce_count(d).k == 1
    # class 1 holding the same logits against class 0 would need to exceed it
    assert minimal_ce_count(_head([[1.0, 1.0], [2.0, 0.5]], [0.0, 0.0])).k == 2


def test_opposing_baseline():
    d = _binary("logistic", [1.0, 1.0, -1.5], -0.25)
    assert minimal_ce_count(d, "bias").k == 1
    assert minimal_ce_count(d, "opposing").k == 2


def test_non_tp_rejected():
    d = Decomposition("logistic", np.array([1.0]), 0.0, 1, 1.0, 0, 0)
    with pytest.raises(DiagnosticError):
        minimal_ce_count(d)


def _beats_oracle(d):
    """The literal comparison each model uses to pick its label."""
    if d.is_head:
        t = d.predicted_label
        others = [c for c in range(len(d.decision)) if c != t]
        return lambda s: all((s >= d.decision[c]) if t < c else (s > d.decision[c]) for c in others)
    if d.predicted_label == 1:
        return (lambda s: s >= 0) if d.model_kind == "logistic" else (lambda s: s > 0)
    return (lambda s: s <= 0) if d.model_kind == "svm" else (lambda s: s < 0)


def _random_tp(rng):
    kind = ["logistic", "svm", "head"][int(rng.integers(0, 3))]
    d = int(rng.integers(1, 16))
    integer = rng.random() < 0.3  # integer entries make exact ties common
    draw = (lambda *s: rng.integers(-3, 4, size=s).astype(float)) if integer else (lambda *s: rng.normal(size=s))
    if kind == "head":
        C = int(rng.integers(2, 5))
        return _head(draw(C, d), draw(C))
    return _binary(kind, draw(d), float(draw(1)[0]))


def test_greedy_matches_exhaustive_subsets():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        dec = _random_tp(rng)
        beats = _beats_oracle(dec)
        row = dec.ce[dec.predicted_label] if dec.is_head else dec.ce
        bias = float(dec.bias[dec.predicted_label]) if dec.is_head else float(dec.bias)
        want = min_subset_size_vectorised(row, bias, np.vectorize(beats))
        if dec.dim <= 8:
            assert want == min_subset_size(row, bias, beats)
        assert minimal_ce_count(dec).k == want


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    dec = _random_tp(rng)
    perm = rng.permutation(dec.dim)
    if dec.is_head:
        shuffled = _head(dec.ce[:, perm], dec.bias)
    else:
        shuffled = _binary(dec.model_kind, dec.ce[perm], dec.bias)
    if shuffled.predicted_label != dec.predicted_label:
        return  # reordered summation moved an exact tie; not a like-for-like case
    assert minimal_ce_count(shuffled).k == minimal_ce_count(dec).k


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2.0**e for e in range(-8, 9)]))
def test_scale_invariance(seed, s):
    rng = np.random.default_rng(seed)
    dec = _random_tp(rng)
    scaled = _head(dec.ce * s, dec.bias * s) if dec.is_head else _binary(dec.model_kind, dec.ce * s, dec.bias * s)
    assert minimal_ce_count(scaled).k == minimal_ce_count(dec).k


# ---------------------------------------------------------------------------
# coverage


def _with_top(indices, d, iid):
    ce = np.full(d, -0.01)
    for rank, i in enumerate(indices):
        ce[i] = 10.0 - 0.1 * rank
    return _binary("logistic", ce, 0.0, iid)


def test_coverage_identical_sets():
    a = _with_top(range(10), 64, 0)
    b = _with_top(range(10), 64, 1)
    assert class_unique_ce([a, b]).coverage_fraction == 10 / 64


def test_coverage_disjoint_sets():
    a = _with_top(range(10), 64, 0)
    b = _with_top(range(10, 20), 64, 1)
    assert class_unique_ce([a, b]).coverage_fraction == 20 / 64 == 0.3125


def test_coverage_monotone_when_adding():
    rng = np.random.default_rng(0)
    decs = [_binary("logistic", rng.normal(size=40) + 0.2, 1.0, i) for i in range(30)]
    decs = [d for d in decs if d.predicted_label == 1]
    prev = 0.0
    for n in range(1, len(decs) + 1):
        cov = class_unique_ce(decs[:n]).coverage_fraction
        assert cov >= prev
        prev = cov
    single = max(class_unique_ce([d]).coverage_fraction for d in decs)
    assert prev >= single


def test_coverage_empty_rejected():
    with pytest.raises(DiagnosticError):
        class_unique_ce([])


# ---------------------------------------------------------------------------
# contribution share


def test_fraction_rule_k():
    assert [fraction_rule_k(d) for d in (1, 4, 5, 14, 15, 64, 100)] == [1, 1, 1, 1, 2, 6, 10]


def test_share_uniform_is_tenth():
    s = topk_contribution_share(_binary("logistic", np.full(100, 0.5), 0.0))
    assert s.share == 0.1 and s.k == 10 and s.n_supporting == 100


def test_share_dominant_entry():
    ce = np.r_[99.0, np.full(99, 1.0 / 99)]
    assert topk_contribution_share(_binary("logistic", ce, 0.0), "absolute").share >= 0.99 - 1e-12
    assert topk_contribution_share(_binary("logistic", ce[:10], 0.0)).share >= 0.99


def test_share_label_zero_uses_negative_entries():
    d = _binary("svm", [-4.0, -1.0, 3.0, -5.0], 0.0)
    s = topk_contribution_share(d, "absolute")
    assert d.predicted_label == 0
    assert s.n_supporting == 3 and s.share == 1.0
    f = topk_contribution_share(d, "fraction")
    assert f.k == 1 and f.share == 0.5


def test_share_no_support_rejected():
    d = _binary("logistic", [-1.0, -2.0], 5.0)
    with pytest.raises(DiagnosticError):
        topk_contribution_share(d)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["fraction", "absolute"]))
def test_share_bounds(seed, rule):
    rng = np.random.default_rng(seed)
    dec = _random_tp(rng)
    sup = dec.supporting()
    D = sup[sup > 0]
    if D.size == 0:
        return
    s = topk_contribution_share(dec, rule)
    k = fraction_rule_k(dec.dim) if rule == "fraction" else min(10, D.size)
    assert min(k, D.size) / D.size - 1e-12 <= s.share <= 1 + 1e-12


# ---------------------------------------------------------------------------
# frequency and magnitude


FIXTURE = [[4.0, 1.0, -2.0, 3.0], [2.0, 5.0, 1.0, -1.0], [0.5, -3.0, 2.0, 1.0]]


def _tally(rows, top_k, top_m):
    """By-hand count: an index is used when it is among the top_k strictly positive entries."""
    d = len(rows[0])
    freq = [0] * d
    for row in rows:
        ranked = sorted(((v, i) for i, v in enumerate(row) if v > 0), key=lambda t: (-t[0], t[1]))
        for _, i in ranked[:top_k]:
            freq[i] += 1
    mean = [sum(abs(r[i]) for r in rows) / len(rows) for i in range(d)]
    order = sorted(range(d), key=lambda i: (-mean[i], i))[:top_m]
    return freq, mean, [(i, freq[i], mean[i]) for i in order]


def _avg_ranks(v):
    v = list(v)
    order = sorted(range(len(v)), key=lambda i: v[i])
    ranks = [0.0] * len(v)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and v[order[j + 1]] == v[order[i]]:
            j += 1
        for t in range(i, j + 1):
            ranks[order[t]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _pearson(a, b):
    ma, mb = sum(a) / len(a), sum(b) / len(b)
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    return cov / math.sqrt(sum((x - ma) ** 2 for x in a) * sum((y - mb) ** 2 for y in b))


def test_frequency_magnitude_hand_fixture():
    decs = [_binary("logistic", r, 0.0, i) for i, r in enumerate(FIXTURE)]
    fm = frequency_magnitude_profile(decs, top_k=2, top_m=3)
    freq, mean, entries = _tally(FIXTURE, 2, 3)
    assert fm.frequency.tolist() == freq == [2, 1, 1, 2]
    assert fm.mean_magnitude.tolist() == mean
    assert fm.entries == entries
    assert [e[0] for e in fm.entries] == [1, 0, 2]
    used = [i for i in range(4) if freq[i] > 0]
    rho = _pearson(_avg_ranks([freq[i] for i in used]), _avg_ranks([mean[i] for i in used]))
    assert fm.spearman_rho == pytest.approx(rho, abs=1e-12)


def test_frequency_identical_instances():
    row = [3.0, 0.5, 2.0, 1.0, 4.0, 0.1, 2.5]
    decs = [_binary("logistic", row, 0.0, i) for i in range(6)]
    fm = frequency_magnitude_profile(decs, top_k=10, top_m=5)
    assert [e[1] for e in fm.entries] == [6] * 5


def test_spearman_co_monotone():
    d, n = 4, 4
    rows = np.zeros((n, d))
    for j in range(d):
        rows[: j + 1, j] = 10.0 * (j + 1)
    decs = [_binary("logistic", rows[i] + 0.0, 0.0, i) for i in range(n)]
    fm = frequency_magnitude_profile(decs, top_k=d)
    assert fm.frequency.tolist() == [1, 2, 3, 4]
    assert fm.spearman_rho == 1.0


def test_frequency_bounded_by_instances():
    rng = np.random.default_rng(1)
    decs = [_head(rng.normal(size=(3, 20)) + [[1], [0], [0]], [5.0, 0, 0], i) for i in range(15)]
    decs = [d for d in decs if d.predicted_label == 0]
    fm = frequency_magnitude_profile(decs)
    assert fm.frequency.max() <= len(decs)
    mags = [e[2] for e in fm.entries]
    assert mags == sorted(mags, reverse=True)


def test_frequency_empty_rejected():
    with pytest.raises(DiagnosticError):
        frequency_magnitude_profile([])


# ---------------------------------------------------------------------------
# aggregation


def test_aggregate_single_instance():
    (g,) = aggregate([{"class": 0, "fraction": 0.25}], ["fraction"])
    assert (g.group, g.mean, g.sd, g.n) == ("0", 0.25, 0.0, 1)


def test_aggregate_two_groups():
    recs = [{"class": 0, "v": 0.1}, {"class": 1, "v": 0.3}]
    out = {g.group: g.mean for g in aggregate(recs, ["v"], "majority", train_counts=[10, 10 - 5])}
    assert out == {"majority": 0.1, "minority": 0.3}


def test_aggregate_skips_nan_and_empty_groups():
    recs = [{"class": 0, "v": float("nan")}, {"class": 1, "v": 2.0}, {"class": 1, "v": 4.0}]
    out = aggregate(recs, ["v"])
    assert [(g.group, g.mean, g.sd) for g in out] == [("1", 3.0, 1.0)]


def test_assign_groups_ties():
    assert assign_groups([5, 5, 1]) == {0: "majority", 1: "majority", 2: "minority"}


def test_aggregate_order_independent():
    rng = np.random.default_rng(3)
    recs = [{"instance_id": i, "class": int(rng.integers(0, 3)), "v": float(rng.random())} for i in range(50)]
    a = aggregate(recs, ["v"])
    b = aggregate(list(reversed(recs)), ["v"])
    assert a == b
