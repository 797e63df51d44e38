"""Independent reference implementations used to pin down the fast
library code. Everything here is deliberately naive: exhaustive
enumeration and scalar loops only."""
import itertools
import math

import numpy as np


def collapse_alignment(path, blank=0):
    """Merge repeats then drop blanks."""
    out = []
    prev = None
    for p in path:
        if p != prev and p != blank:
            out.append(int(p))
        prev = p
    return tuple(out)


def brute_force_alignment_nll(probs, target, blank=0):
    """-log sum of path probabilities over every frame labeling that
    collapses to the target. probs is a T x C row-stochastic array."""
    T, C = probs.shape
    total = 0.0
    for path in itertools.product(range(C), repeat=T):
        if collapse_alignment(path, blank) == tuple(target):
            p = 1.0
            for t, lab in enumerate(path):
                p *= probs[t, lab]
            total += p
    return -math.log(total) if total > 0 else float("inf")


def enumerate_chain_scores(unaries, pairwise):
    """Score of every label sequence for an L x B unary table and a
    shared B x B pairwise matrix. Yields (labels, score)."""
    L, B = unaries.shape
    for labels in itertools.product(range(B), repeat=L):
        score = sum(unaries[i, y] for i, y in enumerate(labels))
        score += sum(pairwise[a, b] for a, b in zip(labels, labels[1:]))
        yield labels, score


def chain_brute_force(unaries, pairwise):
    """(best_labels, best_score, log_partition) by full enumeration.
    Ties go to the lexicographically smallest sequence."""
    best_labels, best_score = None, -np.inf
    scores = []
    for labels, score in enumerate_chain_scores(unaries, pairwise):
        scores.append(score)
        if score > best_score + 1e-12:
            best_labels, best_score = labels, score
    m = max(scores)
    log_z = m + math.log(sum(math.exp(s - m) for s in scores))
    return list(best_labels), best_score, log_z


def qrnn_scalar_oracle(x, w_prev, w_cur, bias, h0=None, reverse=False):
    """Step-by-step scalar recurrence for one quasi-recurrent layer."""
    x = np.asarray(x, dtype=np.float64)
    if reverse:
        x = x[::-1]
    T, _ = x.shape
    hidden = bias.shape[0] // 2
    h = np.zeros(hidden) if h0 is None else np.asarray(h0, dtype=np.float64)
    prev = np.zeros(x.shape[1])
    outs = []
    for t in range(T):
        pre = w_prev @ prev + w_cur @ x[t] + bias
        z = np.tanh(pre[:hidden])
        f = 1.0 / (1.0 + np.exp(-pre[hidden:]))
        h = f * h + (1.0 - f) * z
        outs.append(h.copy())
        prev = x[t]
    out = np.stack(outs)
    return out[::-1].copy() if reverse else out
