"""Ranking and likelihood metrics for held-out windows.

AUC treats every observed test cell as a positive and unobserved
(user, item, window) positions as negatives.  Top-L metrics rank, for each
user and test window, the items the user has not interacted with during
training, using expected ratings as scores and raw ratings as gains.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats

from . import edm
from .dataset import DataSplit
from .edm import Family
from .inference import FittedModel, predictive_loglik

DEFAULT_L = (10, 100)
EXHAUSTIVE_ITEM_LIMIT = 20000
DEFAULT_SAMPLED_NEGATIVES = 1000
ALL_METRICS = ("auc", "prec", "ndcg", "loglik")


class MetricError(ValueError):
    pass


# ---------------------------------------------------------------------------
# AUC


def auc(scores, labels) -> float:
    """Mann-Whitney estimate of P(score_pos > score_neg) + P(tie) / 2."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs at least one positive and one negative label")
    ranks = stats.rankdata(scores)  # average ranks resolve ties as half wins
    u = math.fsum(ranks[labels]) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fpr, tpr, threshold) at each distinct score, starting from (0, 0, inf)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("ROC needs at least one positive and one negative label")
    order = np.argsort(-scores, kind="stable")
    s, lab = scores[order], labels[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(lab)[last]
    fp = np.cumsum(~lab)[last]
    return (np.r_[0.0, fp / n_neg], np.r_[0.0, tp / n_pos], np.r_[np.inf, s[last]])


def format_roc(fpr, tpr, thresholds) -> str:
    out = io.StringIO()
    out.write("fpr tpr threshold\n")
    for f, t, h in zip(fpr, tpr, thresholds):
        out.write(f"{float(f)!r} {float(t)!r} {float(h)!r}\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# binarised test set


@dataclass
class BinarizedTestset:
    m: np.ndarray
    n: np.ndarray
    t: np.ndarray
    labels: np.ndarray
    mode: str
    excluded_users: int = 0  # (user, window) pairs without candidate negatives

    @property
    def n_positive(self) -> int:
        return int(self.labels.sum())

    @property
    def n_negative(self) -> int:
        return int(self.labels.size - self.labels.sum())


def _resolve_negatives(negatives: str, N: int) -> str:
    if negatives == "auto":
        return "all" if N <= EXHAUSTIVE_ITEM_LIMIT else "sampled"
    if negatives not in ("all", "sampled"):
        raise ValueError(f"negatives must be 'all', 'sampled' or 'auto', got {negatives!r}")
    return negatives


def binarize_testset(split: DataSplit, negatives: str = "auto",
                     n_per_user: int = DEFAULT_SAMPLED_NEGATIVES, seed: int = 0) -> BinarizedTestset:
    """Label observed test cells 1 and unobserved test-window positions 0.

    ``sampled`` draws up to ``n_per_user`` negatives per (user, window)
    uniformly without replacement, from a stream keyed by (seed, window,
    user).  A (user, window) whose row is fully observed has no negatives
    and is dropped along with its positives.
    """
    test = split.test
    M, N = test.M, test.N
    mode = _resolve_negatives(negatives, N)
    if len(split.test_windows) == 0:
        raise MetricError("the split has no test windows")
    parts_m, parts_n, parts_t, parts_l = [], [], [], []
    excluded = 0
    for t in split.test_windows:
        sel = test.t == t
        observed = np.zeros((M, N), dtype=bool)
        observed[test.m[sel], test.n[sel]] = True
        full_rows = observed.all(axis=1)
        excluded += int(full_rows.sum())
        for m in range(M):
            if full_rows[m]:
                continue
            pos = np.flatnonzero(observed[m])
            cand = np.flatnonzero(~observed[m])
            if mode == "sampled" and cand.size > n_per_user:
                rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(t, m)))
                cand = np.sort(rng.choice(cand, n_per_user, replace=False))
            items = np.r_[pos, cand]
            parts_m.append(np.full(items.size, m))
            parts_n.append(items)
            parts_t.append(np.full(items.size, t))
            parts_l.append(np.r_[np.ones(pos.size, dtype=np.int8), np.zeros(cand.size, dtype=np.int8)])
    cat = (lambda p, d: np.concatenate(p).astype(d) if p else np.zeros(0, dtype=d))
    return BinarizedTestset(cat(parts_m, np.int64), cat(parts_n, np.int64), cat(parts_t, np.int64),
                            cat(parts_l, np.int8), mode, excluded)


# ---------------------------------------------------------------------------
# ranking


@dataclass
class RankedList:
    user: int
    window: int
    items: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        if self.items.shape != self.scores.shape:
            raise ValueError("items and scores must align")
        if np.any(np.diff(self.scores) > 0):
            raise ValueError("scores must be non-increasing")

    def top(self, L: int) -> np.ndarray:
        return self.items[:L]


def rank_items(scores: np.ndarray, user: int, window: int, exclude=None, L: int | None = None) -> RankedList:
    """Order items by descending score, ties broken by item index."""
    scores = np.asarray(scores, dtype=float)
    items = np.arange(scores.size)
    if exclude is not None and len(exclude):
        keep = np.ones(scores.size, dtype=bool)
        keep[np.asarray(list(exclude), dtype=np.int64)] = False
        items = items[keep]
    order = np.argsort(-scores[items], kind="stable")
    if L is not None:
        order = order[:L]
    items = items[order]
    return RankedList(user, window, items, scores[items])


def precision_at(ranked: RankedList, relevant, L: int) -> float:
    """|top-L & relevant| / L; missing slots count as misses."""
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    relevant = set(int(i) for i in relevant)
    hits = sum(1 for i in ranked.top(L) if int(i) in relevant)
    return hits / L


def dcg(gains) -> float:
    gains = np.asarray(gains, dtype=float)
    return math.fsum(gains / np.log2(np.arange(2, gains.size + 2)))


def ndcg_at(ranked: RankedList, relevance: dict, L: int) -> float:
    """DCG of the top-L prefix over the ideal DCG@L; 0 when the ideal is 0."""
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    if any(g < 0 for g in relevance.values()):
        raise ValueError("gains must be non-negative")
    ideal = dcg(sorted(relevance.values(), reverse=True)[:L])
    if ideal == 0:
        return 0.0
    return dcg([relevance.get(int(i), 0.0) for i in ranked.top(L)]) / ideal


# ---------------------------------------------------------------------------
# end-to-end evaluation


@dataclass
class EvalConfig:
    L: tuple[int, ...] = DEFAULT_L
    negatives: str = "auto"
    n_negatives: int = DEFAULT_SAMPLED_NEGATIVES
    exclude_train: bool = True
    loglik_mode: str = "full"
    seed: int = 0
    chunk_rows: int = 1024


@dataclass
class EvalReport:
    auc: float
    precision_at: dict[int, float]
    ndcg_at: dict[int, float]
    test_loglik: float
    test_loglik_nonzero: float
    n_positive: int
    n_negative: int
    negatives_mode: str
    auc_excluded_user_windows: int
    ranked_user_windows: int
    skipped_user_windows: int
    loglik_cells: int
    loglik_excluded_cells: int
    per_window: dict[int, dict[str, float]] = field(default_factory=dict)
    per_user: list[tuple[int, int, dict[str, float]]] = field(default_factory=list)

    def as_dict(self) -> dict[str, float | int | str]:
        """Flat report with stable keys."""
        out: dict[str, float | int | str] = {"auc": self.auc}
        for L, v in self.precision_at.items():
            out[f"prec@{L}"] = v
        for L, v in self.ndcg_at.items():
            out[f"ndcg@{L}"] = v
        out.update({
            "loglik": self.test_loglik,
            "loglik_nonzero": self.test_loglik_nonzero,
            "loglik_cells": self.loglik_cells,
            "loglik_excluded_cells": self.loglik_excluded_cells,
            "auc_negatives": self.negatives_mode,
            "auc_positives": self.n_positive,
            "auc_negatives_scored": self.n_negative,
            "auc_excluded_user_windows": self.auc_excluded_user_windows,
            "ranked_user_windows": self.ranked_user_windows,
            "skipped_user_windows": self.skipped_user_windows,
        })
        for t in sorted(self.per_window):
            for key, value in self.per_window[t].items():
                out[f"window{t}.{key}"] = value
        return out

    def select(self, metrics: list[str] | None) -> dict:
        """Subset of ``as_dict`` keyed by metric names such as ``ndcg@10``.

        Count and bookkeeping keys are always kept.
        """
        full = self.as_dict()
        if not metrics:
            return full
        wanted = set(metrics)
        for name in metrics:
            base = name.split("@")[0]
            if base not in ALL_METRICS:
                raise ValueError(f"unknown metric {name!r}")
        out = {}
        for key, value in full.items():
            metric = key.split(".", 1)[-1]
            base = metric.split("@")[0].split("_")[0]
            if metric in wanted or (base in wanted and "@" not in metric) or base not in ALL_METRICS:
                out[key] = value
        return out


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def format_kv(values: dict) -> str:
    return "".join(f"{k} {_fmt(v)}\n" for k, v in values.items())


def format_rows(values: dict, delimiter: str = "\t") -> str:
    """``scope metric value`` rows; scope is ``all`` or ``window<t>``."""
    out = io.StringIO()
    out.write(delimiter.join(("scope", "metric", "value")) + "\n")
    for key, value in values.items():
        scope, metric = key.split(".", 1) if "." in key else ("all", key)
        out.write(delimiter.join((scope, metric, _fmt(value))) + "\n")
    return out.getvalue()


def format_per_user(report: EvalReport, users: list[str], delimiter: str = "\t") -> str:
    """``user window metric value`` rows for every ranked (user, window)."""
    out = io.StringIO()
    out.write(delimiter.join(("user", "window", "metric", "value")) + "\n")
    for m, t, row in report.per_user:
        for metric, value in row.items():
            out.write(delimiter.join((users[m], str(t), metric, _fmt(value))) + "\n")
    return out.getvalue()


def auc_scores(model: FittedModel, m, n, t) -> np.ndarray:
    """P(y != 0) per cell; the rate itself for the Gaussian element."""
    lam = model.cell_rates(m, n, t)
    if model.element.family is Family.GAUSSIAN:
        return lam
    return edm.prob_nonzero(model.element, lam)


def rating_matrix(model: FittedModel, rows: np.ndarray, t: int) -> np.ndarray:
    """Expected ratings of ``rows`` users for every item at window ``t``."""
    lam = model.user_means(t)[rows] @ model.item_means(t).T
    return edm.response_mean(model.element, lam)


def seen_items(split: DataSplit) -> list[set[int]]:
    seen = [set() for _ in range(split.train.M)]
    for part in (split.train, split.validation):
        for m, n in zip(part.m.tolist(), part.n.tolist()):
            seen[m].add(n)
    return seen


def evaluate(model: FittedModel, split: DataSplit, config: EvalConfig | None = None) -> EvalReport:
    config = config or EvalConfig()
    test = split.test
    if (model.M, model.N) != (test.M, test.N):
        raise MetricError(f"model covers {model.M} x {model.N} entities, split has {test.M} x {test.N}")

    binarized = binarize_testset(split, config.negatives, config.n_negatives, config.seed)
    scores = auc_scores(model, binarized.m, binarized.n, binarized.t)
    per_window: dict[int, dict[str, float]] = {}
    for t in split.test_windows:
        sel = binarized.t == t
        try:
            per_window[t] = {"auc": auc(scores[sel], binarized.labels[sel])}
        except MetricError:
            per_window[t] = {"auc": float("nan")}
    total_auc = auc(scores, binarized.labels)

    seen = seen_items(split) if config.exclude_train else None
    prec_sum = {L: [] for L in config.L}
    ndcg_sum = {L: [] for L in config.L}
    ranked = skipped = 0
    per_user = []
    max_L = max(config.L)
    for t in split.test_windows:
        sel = test.t == t
        relevance: list[dict[int, float]] = [dict() for _ in range(test.M)]
        for m, n, y in zip(test.m[sel].tolist(), test.n[sel].tolist(), test.y[sel].tolist()):
            relevance[m][n] = y
        win_prec = {L: [] for L in config.L}
        win_ndcg = {L: [] for L in config.L}
        for start in range(0, test.M, config.chunk_rows):
            rows = np.arange(start, min(start + config.chunk_rows, test.M))
            ratings = rating_matrix(model, rows, t)
            for r, m in enumerate(rows):
                rel = relevance[m]
                if not rel:
                    skipped += 1
                    continue
                ranked += 1
                ranking = rank_items(ratings[r], int(m), t, seen[m] if seen else None, max_L)
                gains = {n: max(g, 0.0) for n, g in rel.items()}
                row = {}
                for L in config.L:
                    row[f"prec@{L}"] = precision_at(ranking, rel.keys(), L)
                    row[f"ndcg@{L}"] = ndcg_at(ranking, gains, L)
                    win_prec[L].append(row[f"prec@{L}"])
                    win_ndcg[L].append(row[f"ndcg@{L}"])
                per_user.append((int(m), t, row))
        for L in config.L:
            prec_sum[L] += win_prec[L]
            ndcg_sum[L] += win_ndcg[L]
            per_window[t][f"prec@{L}"] = math.fsum(win_prec[L]) / len(win_prec[L]) if win_prec[L] else float("nan")
            per_window[t][f"ndcg@{L}"] = math.fsum(win_ndcg[L]) / len(win_ndcg[L]) if win_ndcg[L] else float("nan")

    ll = predictive_loglik(model, test, config.loglik_mode, exclude=split.validation,
                           windows=split.test_windows)

    def mean(values):
        return math.fsum(values) / len(values) if values else float("nan")

    return EvalReport(
        auc=total_auc,
        precision_at={L: mean(prec_sum[L]) for L in config.L},
        ndcg_at={L: mean(ndcg_sum[L]) for L in config.L},
        test_loglik=ll.mean,
        test_loglik_nonzero=ll.mean_nonzero,
        n_positive=binarized.n_positive,
        n_negative=binarized.n_negative,
        negatives_mode=binarized.mode,
        auc_excluded_user_windows=binarized.excluded_users,
        ranked_user_windows=ranked,
        skipped_user_windows=skipped,
        loglik_cells=ll.n_cells,
        loglik_excluded_cells=ll.n_excluded,
        per_window=per_window,
        per_user=per_user,
    )


class Recommendation(NamedTuple):
    user: str
    rank: int
    item: str
    score: float
