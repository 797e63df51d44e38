"""Mono PCM16 little-endian WAV reading and writing."""
from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .clip import AudioClip

_PCM16_SCALE = 32767.0


def write_wav(path: str | Path, clip: AudioClip) -> None:
    """Write a clip as mono 16-bit PCM."""
    pcm = np.round(np.clip(clip.samples, -1.0, 1.0) * _PCM16_SCALE)
    pcm = pcm.astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(clip.sample_rate)
        f.writeframes(pcm.tobytes())


def read_wav(path: str | Path) -> AudioClip:
    """Read a mono 16-bit PCM WAV file.

    Raises ValueError for multi-channel audio or sample widths other
    than 16 bits.
    """
    with wave.open(str(path), "rb") as f:
        if f.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono audio, "
                             f"got {f.getnchannels()} channels")
        if f.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit samples, "
                             f"got {8 * f.getsampwidth()}-bit")
        sr = f.getframerate()
        raw = f.readframes(f.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / _PCM16_SCALE
    return AudioClip(np.clip(samples, -1.0, 1.0), sr)
