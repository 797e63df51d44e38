"""Audio clip container used by every DSP operation."""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AudioClip:
    """Mono audio with samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("audio must be mono (1-D)")
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio contains non-finite samples")
        if samples.size and np.max(np.abs(samples)) > 1.0 + 1e-9:
            raise ValueError("audio samples exceed [-1, 1]")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", np.clip(samples, -1.0, 1.0))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return self.samples.size / self.sample_rate
