"""Deterministic train/validation split."""
from __future__ import annotations

import hashlib

N_FOLDS = 10
VALIDATION_FOLD = 0


def assign_fold(speaker_id: str, index: int, n_folds: int = N_FOLDS) -> int:
    """Stable fold assignment from a content hash (not Python's hash)."""
    digest = hashlib.sha256(f"{speaker_id}:{index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % n_folds


def split_corpus(entries) -> tuple:
    """(train_indices, validation_indices) over manifest order.

    The per-speaker utterance index feeds the hash so adding a speaker
    never reshuffles another speaker's split.
    """
    per_speaker_count: dict = {}
    train: list = []
    val: list = []
    for i, entry in enumerate(entries):
        k = per_speaker_count.get(entry.speaker_id, 0)
        per_speaker_count[entry.speaker_id] = k + 1
        fold = assign_fold(entry.speaker_id, k)
        (val if fold == VALIDATION_FOLD else train).append(i)
    return train, val
