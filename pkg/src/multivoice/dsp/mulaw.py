"""Mu-law companding and 8-bit quantization of waveform amplitudes."""

import numpy as np

DEFAULT_CHANNELS = 256


def mu_law_compand(x, channels: int = DEFAULT_CHANNELS):
    """Compress amplitudes in [-1, 1] logarithmically onto [-1, 1]."""
    mu = channels - 1
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.log1p(mu * np.abs(x)) / np.log1p(mu)


def mu_law_expand(y, channels: int = DEFAULT_CHANNELS):
    """Inverse of :func:`mu_law_compand`."""
    mu = channels - 1
    y = np.asarray(y, dtype=np.float64)
    return np.sign(y) * (np.expm1(np.abs(y) * np.log1p(mu))) / mu


def mu_law_encode(x, channels: int = DEFAULT_CHANNELS):
    """Quantize amplitudes in [-1, 1] to integer codes in [0, channels).

    Companded values are placed on a uniform lattice of `channels` points
    spanning [-1, 1]; ties round toward the upper code, so 0.0 maps to the
    upper-center code (128 for 256 channels).
    """
    x = np.asarray(x)
    if np.any(np.abs(x) > 1.0):
        raise ValueError("amplitude out of range [-1, 1]")
    y = mu_law_compand(x, channels)
    codes = np.floor((y + 1.0) / 2.0 * (channels - 1) + 0.5).astype(np.int64)
    return np.clip(codes, 0, channels - 1)


def mu_law_decode(codes, channels: int = DEFAULT_CHANNELS):
    """Expand integer codes back to amplitudes; inverse of the code lattice."""
    codes = np.asarray(codes)
    if np.any(codes < 0) or np.any(codes >= channels):
        raise ValueError(f"code out of range [0, {channels})")
    y = codes.astype(np.float64) / (channels - 1) * 2.0 - 1.0
    return mu_law_expand(y, channels)
