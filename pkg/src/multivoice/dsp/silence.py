"""Energy-based silence detection with Gaussian-smoothed normalized power."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clip import AudioClip


@dataclass(frozen=True)
class SilenceDetectorConfig:
    """Settings for the smoothed-power silence detector.

    gaussian_width is the standard deviation of the smoothing kernel in
    seconds; threshold is the normalized-power cutoff in (0, 1).
    """

    gaussian_width: float = 0.00025
    threshold: float = 0.1

    def __post_init__(self):
        if self.gaussian_width <= 0:
            raise ValueError("gaussian_width must be positive")
        if not (0.0 < self.threshold < 1.0):
            raise ValueError("threshold must lie strictly between 0 and 1")


def _gaussian_kernel(sigma_samples: float) -> np.ndarray:
    # Truncate at 4 sigma; for very narrow kernels this degenerates to [1].
    half = int(np.floor(4.0 * sigma_samples))
    n = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-0.5 * (n / sigma_samples) ** 2)
    return g / g.sum()


def smoothed_power(clip: AudioClip, config: SilenceDetectorConfig) -> np.ndarray:
    """Per-sample normalized power after Gaussian smoothing.

    Power is x[n]^2 / max(x^2) so the loudest sample maps to 1, then the
    sequence is convolved with a unit-area Gaussian. A fully zero clip
    yields all zeros.
    """
    x = clip.samples.astype(np.float64)
    peak = float(np.max(np.abs(x)))
    if peak == 0.0:
        return np.zeros(len(x))
    p = (x / peak) ** 2
    sigma = config.gaussian_width * clip.sample_rate
    kernel = _gaussian_kernel(sigma)
    if len(kernel) == 1:
        return p
    return np.convolve(p, kernel, mode="same")


def detect_silence(clip: AudioClip, config: SilenceDetectorConfig | None = None) -> np.ndarray:
    """Boolean mask, True where the smoothed power falls below threshold.

    The comparison is strict: a sample is silent iff p[n] < threshold.
    A digitally zero clip is silent everywhere.
    """
    config = config or SilenceDetectorConfig()
    p = smoothed_power(clip, config)
    return p < config.threshold


def trim_silence(clip: AudioClip, config: SilenceDetectorConfig | None = None) -> AudioClip:
    """Remove leading and trailing silence; interior samples are kept.

    Raises ValueError if every sample is silent, since an empty clip is
    not representable.
    """
    config = config or SilenceDetectorConfig()
    mask = detect_silence(clip, config)
    loud = np.flatnonzero(~mask)
    if len(loud) == 0:
        raise ValueError("clip is entirely silent; nothing to keep")
    start, stop = int(loud[0]), int(loud[-1]) + 1
    return AudioClip(clip.samples[start:stop], clip.sample_rate)
