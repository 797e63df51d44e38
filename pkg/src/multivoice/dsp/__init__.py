"""Signal-processing primitives: companding, spectrograms, silence, pitch."""
from .audiofile import read_wav, write_wav
from .cache import load_array, save_array
from .clip import AudioClip
from .mulaw import mu_law_compand, mu_law_decode, mu_law_encode, mu_law_expand
from .pitch import F0Track, estimate_f0
from .silence import SilenceDetectorConfig, detect_silence, smoothed_power, trim_silence
from .spectral import (
    LOG_FLOOR,
    SpectrogramSpec,
    default_spec,
    griffin_lim,
    hz_to_mel,
    istft,
    magnitude_from_log,
    mel_filterbank,
    mel_log_spectrogram,
    mel_to_hz,
    mfcc,
    spectral_consistency_error,
    stft,
    stft_log_magnitude,
)

__all__ = [
    "AudioClip",
    "F0Track",
    "LOG_FLOOR",
    "SilenceDetectorConfig",
    "SpectrogramSpec",
    "default_spec",
    "detect_silence",
    "estimate_f0",
    "griffin_lim",
    "hz_to_mel",
    "istft",
    "load_array",
    "magnitude_from_log",
    "mel_filterbank",
    "mel_log_spectrogram",
    "mel_to_hz",
    "mfcc",
    "mu_law_compand",
    "mu_law_decode",
    "mu_law_encode",
    "mu_law_expand",
    "read_wav",
    "save_array",
    "smoothed_power",
    "spectral_consistency_error",
    "stft",
    "stft_log_magnitude",
    "trim_silence",
    "write_wav",
]
