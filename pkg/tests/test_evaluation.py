import itertools
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcpf import dataset, evaluation, generator, inference
from dcpf.dataset import DataSplit, InteractionTensor, TimeGrid
from dcpf.evaluation import RankedList
from dcpf.gamma_chain import ChainHyper


def pairwise_auc(scores, labels):
    pos = [s for s, lab in zip(scores, labels) if lab]
    neg = [s for s, lab in zip(scores, labels) if not lab]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p, q in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


# ---------------------------------------------------------------------------
# AUC


def test_auc_examples():
    assert evaluation.auc([0.9, 0.8, 0.3], [1, 0, 1]) == 0.5
    assert evaluation.auc([3, 2, 1, 0], [1, 1, 0, 0]) == 1.0
    assert evaluation.auc([1, 1, 1, 1], [1, 0, 1, 0]) == 0.5
    with pytest.raises(evaluation.MetricError):
        evaluation.auc([0.1, 0.2], [1, 1])


labelled = st.lists(st.tuples(st.integers(0, 6).map(float), st.booleans()), min_size=2, max_size=40).filter(
    lambda xs: 0 < sum(lab for _, lab in xs) < len(xs))


@settings(max_examples=200, deadline=None)
@given(labelled)
def test_auc_matches_pairwise_oracle(pairs):
    scores, labels = zip(*pairs)
    assert evaluation.auc(scores, labels) == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(labelled)
def test_auc_invariant_under_monotone_transform(pairs):
    scores, labels = zip(*pairs)
    transformed = np.exp(np.asarray(scores) / 3.0) * 5 - 2
    assert evaluation.auc(transformed, labels) == pytest.approx(evaluation.auc(scores, labels), abs=1e-12)


def test_roc_curve_end_points_and_format():
    fpr, tpr, thr = evaluation.roc_curve([0.9, 0.8, 0.3, 0.3], [1, 0, 1, 0])
    assert (fpr[0], tpr[0]) == (0.0, 0.0) and (fpr[-1], tpr[-1]) == (1.0, 1.0)
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)
    area = np.trapezoid(tpr, fpr)
    assert area == pytest.approx(evaluation.auc([0.9, 0.8, 0.3, 0.3], [1, 0, 1, 0]))
    text = evaluation.format_roc(fpr, tpr, thr)
    assert text.splitlines()[0] == "fpr tpr threshold" and "inf" in text.splitlines()[1]


# ---------------------------------------------------------------------------
# binarisation


def small_split(cells, M=2, N=2, T=2, H=1):
    m, n, t, y = (np.array(c) for c in zip(*cells))
    tensor = InteractionTensor([f"u{i}" for i in range(M)], [f"i{i}" for i in range(N)],
                               TimeGrid(0, 1, T), m, n, t, y.astype(float))
    return dataset.split_by_time(tensor, H, 0.0)


def test_binarize_enumeration():
    split = small_split([(0, 0, 0, 1.0), (1, 1, 1, 2.0)])
    bt = evaluation.binarize_testset(split, "all")
    assert (bt.n_positive, bt.n_negative, bt.mode) == (1, 3, "all")


def test_binarize_sampled_is_seeded():
    rng = np.random.default_rng(0)
    cells = {(int(rng.integers(20)), int(rng.integers(60)), int(rng.integers(2))) for _ in range(300)}
    split = small_split([(m, n, t, 1.0) for m, n, t in sorted(cells)], M=20, N=60)
    a = evaluation.binarize_testset(split, "sampled", n_per_user=5, seed=4)
    b = evaluation.binarize_testset(split, "sampled", n_per_user=5, seed=4)
    c = evaluation.binarize_testset(split, "sampled", n_per_user=5, seed=5)
    assert np.array_equal(a.n, b.n) and not np.array_equal(a.n, c.n)
    assert np.all(np.bincount(a.m[a.labels == 0]) <= 5)
    with pytest.raises(ValueError):
        evaluation.binarize_testset(split, "some")


def test_binarize_excludes_full_rows():
    split = small_split([(0, 0, 0, 1.0), (0, 0, 1, 1.0), (0, 1, 1, 1.0), (1, 0, 1, 3.0)])
    bt = evaluation.binarize_testset(split, "all")
    assert bt.excluded_users == 1 and set(bt.m.tolist()) == {1}


# ---------------------------------------------------------------------------
# top-L metrics


def ranked(items, scores=None):
    items = np.asarray(items)
    scores = np.arange(items.size, 0, -1, dtype=float) if scores is None else np.asarray(scores, dtype=float)
    return RankedList(0, 0, items, scores)


def test_precision_examples():
    r = ranked(range(20))
    assert evaluation.precision_at(r, {1, 4, 9, 15}, 10) == 0.3
    assert evaluation.precision_at(r, {99}, 10) == 0.0
    assert evaluation.precision_at(r, range(5), 5) == 1.0
    assert evaluation.precision_at(ranked([0, 1]), {0, 1}, 4) == 0.5


def test_ndcg_examples():
    assert evaluation.ndcg_at(ranked([0, 1]), {0: 3.0, 1: 1.0}, 2) == 1.0
    assert evaluation.ndcg_at(ranked([0, 1]), {}, 2) == 0.0
    expected = (1 / math.log2(2) + 3 / math.log2(3)) / (3 / math.log2(2) + 1 / math.log2(3))
    a, b = 0, 1
    assert evaluation.ndcg_at(ranked([b, a]), {a: 3.0, b: 1.0}, 2) == pytest.approx(expected)
    assert expected == pytest.approx(0.7967, abs=1e-4)


def test_ranked_list_must_be_sorted():
    with pytest.raises(ValueError):
        RankedList(0, 0, np.array([0, 1]), np.array([1.0, 2.0]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=3, max_size=30), st.integers(1, 5), st.data())
def test_top_l_metrics_depend_on_prefix_only(scores, L, data):
    r = evaluation.rank_items(np.asarray(scores), 0, 0)
    rel = data.draw(st.dictionaries(st.integers(0, len(scores) - 1), st.floats(0.5, 5.0), max_size=5))
    tail = r.items[L:]
    shuffled = np.r_[r.items[:L], data.draw(st.permutations(tail.tolist())) if tail.size else []].astype(int)
    other = ranked(shuffled)
    assert evaluation.precision_at(r, rel.keys(), L) == evaluation.precision_at(other, rel.keys(), L)
    assert evaluation.ndcg_at(r, rel, L) == evaluation.ndcg_at(other, rel, L)


def test_rank_items_excludes_and_breaks_ties():
    r = evaluation.rank_items(np.array([1.0, 3.0, 3.0, 2.0]), 0, 0, exclude={1}, L=2)
    assert r.items.tolist() == [2, 3]
    r = evaluation.rank_items(np.array([5.0, 5.0, 5.0]), 0, 0)
    assert r.items.tolist() == [0, 1, 2]


# ---------------------------------------------------------------------------
# end to end


@pytest.fixture(scope="module")
def dense():
    # shape 2 chains spread entity scales enough for ranking to be informative
    hyper = ChainHyper(2.0, 2.0, 1.0, 1.0, init_shape=1.0, init_mean=0.4)
    data = generator.generate(50, 50, 3, 3, hyper, hyper, seed=0)
    split = dataset.split_by_time(data.tensor, 1, 0.05, seed=0)
    base = inference.fit(split, inference.FitConfig(K=3, max_epochs=0))
    truth = inference.with_factors(base, data.truth_user.state, data.truth_item.state)
    return data, split, replace(truth, element=data.element, train_windows=3)


def test_truth_model_ranks_well(dense):
    data, split, truth = dense
    assert 0.3 < np.median(data.rate_matrix(2)) < 1.0
    report = evaluation.evaluate(truth, split)
    assert report.auc > 0.9


def test_report_keys_and_determinism(dense):
    _, split, truth = dense
    a = evaluation.evaluate(truth, split)
    b = evaluation.evaluate(truth, split)
    assert evaluation.format_kv(a.as_dict()) == evaluation.format_kv(b.as_dict())
    keys = list(a.as_dict())
    assert keys[:6] == ["auc", "prec@10", "prec@100", "ndcg@10", "ndcg@100", "loglik"]
    assert "window2.auc" in keys and a.negatives_mode == "all"
    chosen = a.select(["auc", "ndcg@10"])
    assert "ndcg@10" in chosen and "prec@10" not in chosen and "loglik" not in chosen
    assert "auc_positives" in chosen
    with pytest.raises(ValueError):
        a.select(["recall@5"])
    rows = evaluation.format_rows(a.as_dict()).splitlines()
    assert rows[0] == "scope\tmetric\tvalue" and rows[1].startswith("all\tauc\t")


def test_report_loglik_matches_inference(dense):
    _, split, truth = dense
    report = evaluation.evaluate(truth, split)
    direct = inference.predictive_loglik(truth, split.test, "full", exclude=split.validation,
                                         windows=split.test_windows)
    assert report.test_loglik == direct.mean and report.loglik_cells == direct.n_cells


def test_random_scores_give_chance_auc():
    rng = np.random.default_rng(11)
    labels = np.r_[np.ones(5000), np.zeros(5000)]
    assert abs(evaluation.auc(rng.random(10_000), labels) - 0.5) < 0.02


def test_evaluate_rejects_mismatched_model(dense):
    _, split, truth = dense
    other = dataset.split_by_time(generator.generate(10, 10, 2, 3, seed=0).tensor, 1, 0.0)
    with pytest.raises(evaluation.MetricError):
        evaluation.evaluate(truth, other)
