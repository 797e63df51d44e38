"""Fundamental-frequency tracking by normalized autocorrelation.

One (f0, voiced) pair per 10 ms hop. Unvoiced frames carry f0 = 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clip import AudioClip


@dataclass(frozen=True)
class F0Track:
    """Frame-rate pitch contour: f0 in Hz, per-frame voicing flags."""

    f0: np.ndarray
    voiced: np.ndarray
    hop_seconds: float = 0.01

    def __post_init__(self):
        if self.f0.shape != self.voiced.shape:
            raise ValueError("f0 and voiced must have matching shapes")

    def __len__(self) -> int:
        return int(self.f0.size)

    @property
    def voiced_fraction(self) -> float:
        if self.voiced.size == 0:
            return 0.0
        return float(np.mean(self.voiced))


def _parabolic_offset(r: np.ndarray, i: int) -> float:
    if i <= 0 or i >= r.size - 1:
        return 0.0
    denom = r[i - 1] - 2.0 * r[i] + r[i + 1]
    if abs(denom) < 1e-12:
        return 0.0
    delta = 0.5 * (r[i - 1] - r[i + 1]) / denom
    return float(np.clip(delta, -0.5, 0.5))


def estimate_f0(clip: AudioClip, f_min: float = 60.0, f_max: float = 400.0,
                voicing_threshold: float = 0.6, hop_ms: float = 10.0) -> F0Track:
    """Estimate per-frame fundamental frequency and voicing.

    For each frame the normalized autocorrelation
    r[t] = sum(x[n] x[n+t]) / sqrt(sum(x[n]^2) sum(x[n+t]^2)) is scanned
    over lags matching [f_min, f_max]. A frame is voiced when the best
    correlation clears the voicing threshold and the frame has energy.
    Among local maxima whose correlation is within 10% of the best, the
    smallest lag wins, which suppresses period-doubling errors; the peak
    is then refined by parabolic interpolation.
    """
    sr = clip.sample_rate
    if not (0.0 < f_min < f_max < sr / 2.0):
        raise ValueError("need 0 < f_min < f_max < sample_rate / 2")
    lag_min = max(2, int(np.floor(sr / f_max)))
    lag_max = int(np.ceil(sr / f_min))
    window = lag_max
    frame_len = window + lag_max
    hop = int(round(hop_ms * sr / 1000.0))
    x = clip.samples.astype(np.float64)
    if x.size < frame_len:
        empty = np.zeros(0)
        return F0Track(empty, empty.astype(bool), hop_ms / 1000.0)
    n_frames = 1 + (x.size - frame_len) // hop
    f0 = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    for i in range(n_frames):
        seg = x[i * hop:i * hop + frame_len]
        base = seg[:window]
        if np.sqrt(np.mean(base ** 2)) < 1e-4:
            continue
        corr = np.correlate(seg, base, mode="valid")  # corr[t], t = 0..lag_max
        sq = np.concatenate(([0.0], np.cumsum(seg ** 2)))
        energy = sq[window:window + lag_max + 1] - sq[:lag_max + 1]
        norm = np.sqrt(np.maximum(corr[0] * energy, 1e-20))
        r = corr / norm
        search = r[lag_min:lag_max + 1]
        best = float(np.max(search))
        if best < voicing_threshold:
            continue
        padded = np.concatenate(([-np.inf], search, [-np.inf]))
        is_peak = (search >= padded[:-2]) & (search >= padded[2:])
        peaks = np.flatnonzero(is_peak & (search >= 0.9 * best))
        lag = lag_min + int(peaks[0])
        lag_refined = lag + _parabolic_offset(r, lag)
        voiced[i] = True
        f0[i] = float(np.clip(sr / lag_refined, f_min, f_max))
    return F0Track(f0, voiced, hop_ms / 1000.0)
