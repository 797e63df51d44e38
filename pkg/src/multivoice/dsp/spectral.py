"""Spectrograms, mel cepstra, and phase reconstruction.

All framing follows one convention: frames start at multiples of the hop,
no padding, so a signal of length N yields 1 + floor((N - window) / hop)
frames.  The log floor is a fixed constant so cached features are
bit-for-bit reproducible.
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .clip import AudioClip

LOG_FLOOR = 1e-5


@dataclass(frozen=True)
class SpectrogramSpec:
    """Framing and scaling parameters for spectrogram extraction."""

    window_length: int
    hop_length: int
    fft_size: int
    scale: str = "linear_log_magnitude"

    def __post_init__(self):
        if not (0 < self.hop_length <= self.window_length <= self.fft_size):
            raise ValueError("need hop <= window <= fft_size, all positive")
        if self.scale not in ("linear_log_magnitude", "mel"):
            raise ValueError(f"unknown scale {self.scale!r}")

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1

    def num_frames(self, num_samples: int) -> int:
        if num_samples < self.window_length:
            raise ValueError("clip shorter than one analysis window")
        return 1 + (num_samples - self.window_length) // self.hop_length


def default_spec(sample_rate: int, window_ms: float = 50.0,
                 hop_ms: float = 10.0) -> SpectrogramSpec:
    """Spectrogram spec with a 10 ms hop and power-of-two FFT."""
    window = int(round(window_ms * sample_rate / 1000.0))
    hop = int(round(hop_ms * sample_rate / 1000.0))
    fft_size = 1
    while fft_size < window:
        fft_size *= 2
    return SpectrogramSpec(window, hop, fft_size)


def _frame(samples: np.ndarray, spec: SpectrogramSpec) -> np.ndarray:
    n = spec.num_frames(samples.size)
    idx = np.arange(spec.window_length)[None, :] + \
        spec.hop_length * np.arange(n)[:, None]
    return samples[idx]


def _window(spec: SpectrogramSpec) -> np.ndarray:
    # periodic Hann, constant-overlap-add friendly for hop | window
    n = spec.window_length
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(clip: AudioClip, spec: SpectrogramSpec) -> np.ndarray:
    """Complex STFT, shape (frames, fft_size // 2 + 1)."""
    frames = _frame(clip.samples, spec) * _window(spec)[None, :]
    return np.fft.rfft(frames, n=spec.fft_size, axis=1)


def istft(stft_matrix: np.ndarray, spec: SpectrogramSpec,
          num_samples: int | None = None) -> np.ndarray:
    """Least-squares inverse STFT by window-weighted overlap-add."""
    frames = np.fft.irfft(stft_matrix, n=spec.fft_size, axis=1)
    frames = frames[:, :spec.window_length]
    win = _window(spec)
    n_frames = frames.shape[0]
    length = spec.window_length + spec.hop_length * (n_frames - 1)
    out = np.zeros(length)
    norm = np.zeros(length)
    for i in range(n_frames):
        lo = i * spec.hop_length
        out[lo:lo + spec.window_length] += frames[i] * win
        norm[lo:lo + spec.window_length] += win ** 2
    # samples with almost no window coverage stay zero instead of being
    # divided by a vanishing weight (that amplifies frame inconsistencies
    # into spikes at the clip edges)
    covered = norm > 1e-3 * norm.max()
    out[covered] /= norm[covered]
    out[~covered] = 0.0
    if num_samples is not None:
        out = out[:num_samples] if out.size >= num_samples else np.pad(
            out, (0, num_samples - out.size))
    return out


def stft_log_magnitude(clip: AudioClip, spec: SpectrogramSpec) -> np.ndarray:
    """log(|STFT| + floor), shape (frames, bins)."""
    return np.log(np.abs(stft(clip, spec)) + LOG_FLOOR)


def magnitude_from_log(log_mag: np.ndarray) -> np.ndarray:
    """Invert :func:`stft_log_magnitude` up to the log floor."""
    return np.maximum(np.exp(log_mag) - LOG_FLOOR, 0.0)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, fft_size: int, n_mels: int,
                   f_min: float = 0.0, f_max: float | None = None) -> np.ndarray:
    """Triangular mel filters, shape (n_mels, fft_size // 2 + 1)."""
    if f_max is None:
        f_max = sample_rate / 2.0
    mel_pts = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    bins = np.fft.rfftfreq(fft_size, d=1.0 / sample_rate)
    fb = np.zeros((n_mels, bins.size))
    for m in range(n_mels):
        lo, cen, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        rise = (bins - lo) / max(cen - lo, 1e-10)
        fall = (hi - bins) / max(hi - cen, 1e-10)
        fb[m] = np.maximum(0.0, np.minimum(rise, fall))
    return fb


def mel_log_spectrogram(clip: AudioClip, spec: SpectrogramSpec,
                        n_mels: int = 80) -> np.ndarray:
    """log-mel magnitude spectrogram, shape (frames, n_mels)."""
    mag = np.abs(stft(clip, spec))
    fb = mel_filterbank(clip.sample_rate, spec.fft_size, n_mels)
    return np.log(mag @ fb.T + LOG_FLOOR)


def mfcc(clip: AudioClip, n_coeffs: int, spec: SpectrogramSpec | None = None,
         n_mels: int | None = None) -> np.ndarray:
    """Mel-frequency cepstral coefficients, shape (frames, n_coeffs).

    Log-mel filterbank energies followed by an orthonormal DCT-II over the
    mel axis.  The default analysis window is 25 ms (the usual cepstral
    choice), narrower than the spectrogram default.
    """
    if spec is None:
        spec = default_spec(clip.sample_rate, window_ms=25.0)
    if n_mels is None:
        n_mels = max(40, n_coeffs)
    if n_coeffs > n_mels:
        raise ValueError("n_coeffs must not exceed the mel filter count")
    logmel = mel_log_spectrogram(clip, spec, n_mels=n_mels)
    return scipy.fft.dct(logmel, type=2, norm="ortho", axis=1)[:, :n_coeffs]


def spectral_consistency_error(log_mag: np.ndarray, samples: np.ndarray,
                               spec: SpectrogramSpec) -> float:
    """Frobenius distance between a signal's STFT magnitude and a target."""
    target = magnitude_from_log(log_mag)
    mag = np.abs(_raw_stft(samples, spec))
    return float(np.linalg.norm(mag - target))


def _raw_stft(samples: np.ndarray, spec: SpectrogramSpec) -> np.ndarray:
    frames = _frame(np.asarray(samples, dtype=np.float64), spec)
    return np.fft.rfft(frames * _window(spec)[None, :], n=spec.fft_size, axis=1)


def griffin_lim(log_mag: np.ndarray, iterations: int, spec: SpectrogramSpec,
                sample_rate: int = 16000, momentum: float = 0.99,
                error_trace: list | None = None) -> AudioClip:
    """Reconstruct audio from a log-magnitude spectrogram.

    Iterative phase estimation: repeatedly invert to the time domain and
    re-project, substituting the target magnitude for the current one at
    each step.  The initial phase is zero.  Each step extrapolates the
    magnitude-substituted spectrogram along its previous direction
    (momentum), but a candidate that would raise the spectral-consistency
    error is discarded for the plain alternating-projection step, so the
    error is non-increasing by construction.  momentum=0 recovers the
    classical iteration.

    If error_trace is a list, the consistency error of the initial signal
    and of each iterate is appended to it (iterations + 1 entries).  The
    trace reflects the raw iterates; the returned clip may additionally be
    peak-normalized to satisfy the amplitude contract.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if not np.all(np.isfinite(log_mag)):
        raise ValueError("log magnitudes must be finite")
    target = magnitude_from_log(log_mag)
    num_samples = spec.window_length + spec.hop_length * (target.shape[0] - 1)
    samples = istft(target.astype(complex), spec, num_samples)
    rebuilt = _raw_stft(samples, spec)
    err = np.linalg.norm(np.abs(rebuilt) - target)
    if error_trace is not None:
        error_trace.append(float(err))
    prev_proj = None
    for _ in range(iterations):
        proj = target * np.exp(1j * np.angle(rebuilt))
        if prev_proj is None or momentum == 0.0:
            trial_spec = proj
        else:
            trial_spec = proj + momentum * (proj - prev_proj)
        cand = istft(trial_spec, spec, num_samples)
        cand_stft = _raw_stft(cand, spec)
        cand_err = np.linalg.norm(np.abs(cand_stft) - target)
        if cand_err <= err:
            samples, rebuilt, err = cand, cand_stft, cand_err
        else:
            samples = istft(proj, spec, num_samples)
            rebuilt = _raw_stft(samples, spec)
            err = np.linalg.norm(np.abs(rebuilt) - target)
        prev_proj = proj
        if error_trace is not None:
            error_trace.append(float(err))
    peak = np.max(np.abs(samples))
    if peak > 1.0:
        samples = samples / peak
    return AudioClip(samples, sample_rate)
