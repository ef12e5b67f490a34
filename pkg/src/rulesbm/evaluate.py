"""Held-out evaluation: clamped link log-likelihood and ranking AUC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import EPS, link_probabilities


def bernoulli_ll(state, pairs, ys) -> float:
    """Sum of Bernoulli log-likelihoods with probabilities clamped to
    [EPS, 1 - EPS]."""
    pairs = list(pairs)
    if not pairs:
        return 0.0
    probs = np.clip(link_probabilities(state, pairs), EPS, 1.0 - EPS)
    ys = np.asarray(ys, dtype=float)
    return float(np.sum(ys * np.log(probs) + (1.0 - ys) * np.log(1.0 - probs)))


def log_likelihood(state, net, pairs) -> float:
    """Log-likelihood of the observed target values over ordered pairs. Goes
    through net.link_value, so held-out pairs read as 0; evaluation against
    ground truth uses the raw relation instead (see evaluate)."""
    pairs = list(pairs)
    rel = net.target_relation
    return bernoulli_ll(state, pairs,
                        [net.link_value(rel, p, q) for p, q in pairs])


def auc_roc(scores, labels) -> float:
    """Rank-based AUC (Mann-Whitney with midranks for ties)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    n_pos = int((labels == 1.0).sum())
    n_neg = int((labels == 0.0).sum())
    if n_pos + n_neg != labels.size:
        raise ValueError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=float)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum = float(ranks[labels == 1.0].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


@dataclass
class EvalReport:
    train_ll: float
    test_ll: float
    auc: float
    n_train: int
    n_test: int


def evaluate(state, net, split) -> EvalReport:
    """Score a model against a split.

    Test labels come from the raw target relation, not link_value, so the
    numbers are correct even on a network whose held-out pairs are masked.
    """
    rel = net.target_relation
    truth = net.relations[rel]
    train = split.sorted_train()
    test = split.sorted_test()
    train_ll = bernoulli_ll(state, train, [1.0 if pq in truth else 0.0 for pq in train])
    test_ll = bernoulli_ll(state, test, [1.0 if pq in truth else 0.0 for pq in test])
    labels = [1.0 if pq in truth else 0.0 for pq in test]
    scores = link_probabilities(state, test) if test else np.zeros(0)
    auc = auc_roc(scores, labels) if test else float("nan")
    return EvalReport(train_ll=train_ll, test_ll=test_ll, auc=auc,
                      n_train=len(train), n_test=len(test))


def format_report(report: EvalReport) -> str:
    """One tab-separated summary line followed by a key=value block."""
    line = "\t".join([repr(report.train_ll), repr(report.test_ll),
                      repr(report.auc), str(report.n_train), str(report.n_test)])
    block = "\n".join(["train_ll=%s" % repr(report.train_ll),
                       "test_ll=%s" % repr(report.test_ll),
                       "auc=%s" % repr(report.auc),
                       "n_train=%d" % report.n_train,
                       "n_test=%d" % report.n_test])
    return line + "\n" + block
