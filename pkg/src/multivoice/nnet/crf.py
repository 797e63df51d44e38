"""Linear-chain sequence labeling layer.

One trainable pairwise potential matrix is shared across positions;
unary scores come from whatever network sits underneath. Likelihood
uses the forward recursion in log space, decoding uses Viterbi with
ties resolved toward the smaller label index.
"""
from __future__ import annotations

import torch


def _validate(unaries: torch.Tensor, pairwise: torch.Tensor):
    if unaries.ndim != 2 or unaries.shape[0] < 1:
        raise ValueError("unaries must be L x B with L >= 1")
    n_labels = unaries.shape[1]
    if pairwise.shape != (n_labels, n_labels):
        raise ValueError(f"pairwise must be {n_labels} x {n_labels}")


def crf_log_partition(unaries: torch.Tensor,
                      pairwise: torch.Tensor) -> torch.Tensor:
    _validate(unaries, pairwise)
    f = unaries[0]
    for i in range(1, unaries.shape[0]):
        f = torch.logsumexp(f[:, None] + pairwise, dim=0) + unaries[i]
    return torch.logsumexp(f, dim=0)


def crf_log_likelihood(unaries: torch.Tensor, pairwise: torch.Tensor,
                       labels) -> torch.Tensor:
    """log p(labels | unaries, pairwise) = score - log Z."""
    _validate(unaries, pairwise)
    L, B = unaries.shape
    idx = torch.as_tensor([int(y) for y in labels], dtype=torch.long,
                          device=unaries.device)
    if idx.shape[0] != L:
        raise ValueError(f"expected {L} labels, got {idx.shape[0]}")
    if idx.numel() and (idx.min() < 0 or idx.max() >= B):
        raise ValueError("label outside [0, B)")
    score = unaries[torch.arange(L), idx].sum()
    if L > 1:
        score = score + pairwise[idx[:-1], idx[1:]].sum()
    return score - crf_log_partition(unaries, pairwise)


def crf_viterbi_decode(unaries: torch.Tensor,
                       pairwise: torch.Tensor) -> list:
    """Highest-scoring label sequence; ties pick the smaller label."""
    _validate(unaries, pairwise)
    L = unaries.shape[0]
    v = unaries[0]
    back = []
    for i in range(1, L):
        # max over previous label; torch.max takes the first (smallest)
        # index on ties
        scores = v[:, None] + pairwise
        v, ptr = torch.max(scores, dim=0)
        v = v + unaries[i]
        back.append(ptr)
    label = int(torch.argmax(v))
    path = [label]
    for ptr in reversed(back):
        label = int(ptr[label])
        path.append(label)
    path.reverse()
    return path
