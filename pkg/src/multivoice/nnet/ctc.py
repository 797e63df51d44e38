"""Alignment-marginalizing loss over label sequences with blanks.

Everything is computed in log space on an extended state lattice
(blank, l1, blank, l2, ..., blank). Besides the loss itself this
module exposes the forward-backward state posteriors and the
constrained best path, which downstream boundary decoding needs.
"""
from __future__ import annotations

import torch

# stands in for -inf so that softmax gradients of unreachable lattice
# states come out 0 instead of nan
_NEG = -1e30


def min_frames(target) -> int:
    """Fewest frames that can emit the target once blanks are inserted
    between repeated labels."""
    t = list(target)
    repeats = sum(1 for a, b in zip(t, t[1:]) if a == b)
    return len(t) + repeats


def ctc_feasible(n_frames: int, target) -> bool:
    return n_frames >= min_frames(target)


def _validate(log_probs: torch.Tensor, target, blank: int):
    if log_probs.ndim != 2:
        raise ValueError("log_probs must be T x C")
    if log_probs.shape[0] < 1:
        raise ValueError("need at least one frame")
    if not torch.isfinite(log_probs).all():
        raise ValueError("log_probs must be finite")
    n_classes = log_probs.shape[1]
    for label in target:
        if not (0 <= int(label) < n_classes):
            raise ValueError(f"label {label} outside [0, {n_classes})")
        if int(label) == blank:
            raise ValueError("target may not contain the blank label")


def _extended(target, blank: int) -> list:
    ext = [blank]
    for label in target:
        ext += [int(label), blank]
    return ext


def _lattice(log_probs: torch.Tensor, target, blank: int):
    """Emission table (T x S) and the skip-transition mask."""
    ext = _extended(target, blank)
    idx = torch.tensor(ext, dtype=torch.long, device=log_probs.device)
    emit = log_probs[:, idx]
    skip = torch.zeros(len(ext), dtype=torch.bool, device=log_probs.device)
    for s in range(2, len(ext)):
        skip[s] = ext[s] != blank and ext[s] != ext[s - 2]
    return emit, skip


def _forward_table(emit: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
    T, S = emit.shape
    neg1 = emit.new_full((1,), _NEG)
    neg2 = emit.new_full((2,), _NEG)
    if S == 1:
        a = emit[0, :1]
    else:
        a = torch.cat([emit[0, :2], emit.new_full((S - 2,), _NEG)])
    rows = [a]
    for t in range(1, T):
        stay = a
        step = torch.cat([neg1, a])[:S]
        jump = torch.cat([neg2, a])[:S]
        jump = torch.where(skip, jump, torch.full_like(jump, _NEG))
        a = torch.logsumexp(torch.stack([stay, step, jump]), dim=0) + emit[t]
        rows.append(a)
    return torch.stack(rows)


def ctc_loss(log_probs: torch.Tensor, target, blank: int = 0) -> torch.Tensor:
    """Negative log probability of the target under all alignments.

    Infeasible targets (too few frames) yield +inf rather than an
    exception so batch code can flag and skip them.
    """
    _validate(log_probs, target, blank)
    if not ctc_feasible(log_probs.shape[0], target):
        return log_probs.new_tensor(float("inf"))
    emit, skip = _lattice(log_probs, target, blank)
    alpha = _forward_table(emit, skip)
    S = emit.shape[1]
    if S == 1:
        ll = alpha[-1, 0]
    else:
        ll = torch.logsumexp(alpha[-1, S - 2:], dim=0)
    return -ll


def ctc_posteriors(log_probs: torch.Tensor, target, blank: int = 0):
    """State-occupancy posteriors gamma (T x S) and the log likelihood.

    gamma[t, s] = P(lattice state s at frame t | target). Columns
    1, 3, 5, ... are the target labels in order.
    """
    _validate(log_probs, target, blank)
    if not ctc_feasible(log_probs.shape[0], target):
        raise ValueError("target infeasible for frame count")
    emit, skip = _lattice(log_probs, target, blank)
    T, S = emit.shape
    alpha = _forward_table(emit, skip)

    neg1 = emit.new_full((1,), _NEG)
    neg2 = emit.new_full((2,), _NEG)
    b = emit.new_full((S,), _NEG)
    b[S - 1] = 0.0
    if S > 1:
        b[S - 2] = 0.0
    rows = [b]
    for t in range(T - 2, -1, -1):
        scored = b + emit[t + 1]
        stay = scored
        step = torch.cat([scored[1:], neg1])[:S]
        jump = torch.cat([
            torch.where(skip[2:], scored[2:],
                        torch.full_like(scored[2:], _NEG)),
            neg2,
        ])[:S]
        b = torch.logsumexp(torch.stack([stay, step, jump]), dim=0)
        rows.append(b)
    beta = torch.stack(rows[::-1])

    if S == 1:
        ll = alpha[-1, 0]
    else:
        ll = torch.logsumexp(alpha[-1, S - 2:], dim=0)
    gamma = torch.exp(alpha + beta - ll)
    return gamma, ll


def ctc_best_path(log_probs: torch.Tensor, target, blank: int = 0) -> list:
    """Highest-probability alignment through the constrained lattice.

    Returns the extended-state index occupied at each frame; odd
    indices emit target labels, even indices emit blank.
    """
    _validate(log_probs, target, blank)
    if not ctc_feasible(log_probs.shape[0], target):
        raise ValueError("target infeasible for frame count")
    emit, skip = _lattice(log_probs, target, blank)
    T, S = emit.shape

    neg1 = emit.new_full((1,), _NEG)
    neg2 = emit.new_full((2,), _NEG)
    if S == 1:
        v = emit[0, :1]
    else:
        v = torch.cat([emit[0, :2], emit.new_full((S - 2,), _NEG)])
    back = []
    for t in range(1, T):
        stay = v
        step = torch.cat([neg1, v])[:S]
        jump = torch.cat([neg2, v])[:S]
        jump = torch.where(skip, jump, torch.full_like(jump, _NEG))
        stacked = torch.stack([stay, step, jump])
        v, choice = torch.max(stacked, dim=0)
        v = v + emit[t]
        back.append(choice)

    if S == 1:
        state = 0
    else:
        state = S - 1 if v[S - 1] >= v[S - 2] else S - 2
    path = [state]
    for choice in reversed(back):
        state -= int(choice[state])
        path.append(state)
    path.reverse()
    return path
