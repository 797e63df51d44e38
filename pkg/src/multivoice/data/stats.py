"""Per-speaker fundamental-frequency statistics."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..dsp.pitch import F0Track


@dataclass(frozen=True)
class SpeakerStats:
    speaker_id: str
    f0_mean: float
    f0_std: float
    utterance_count: int


def compute_speaker_stats(tracks_by_speaker: dict) -> dict:
    """Mean/std of F0 over voiced frames per speaker.

    Standard deviation uses the population convention (divide by the
    frame count), floored at a tiny positive value so downstream
    normalization never divides by zero on degenerate constant tracks.
    Speakers without a single voiced frame are rejected.
    """
    out: dict = {}
    for speaker_id in sorted(tracks_by_speaker):
        tracks: list[F0Track] = tracks_by_speaker[speaker_id]
        voiced_values = np.concatenate(
            [t.f0[t.voiced] for t in tracks]) if tracks else np.zeros(0)
        if voiced_values.size == 0:
            raise ValueError(f"speaker {speaker_id!r} has no voiced frames")
        mean = float(np.mean(voiced_values))
        std = float(np.std(voiced_values))  # population convention
        out[speaker_id] = SpeakerStats(speaker_id, mean, max(std, 1e-6),
                                       len(tracks))
    return out


def save_stats(path: str | Path, stats: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for speaker_id in sorted(stats):
            f.write(json.dumps(asdict(stats[speaker_id]), sort_keys=True) + "\n")


def load_stats(path: str | Path) -> dict:
    out: dict = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out[rec["speaker_id"]] = SpeakerStats(**rec)
    return out
