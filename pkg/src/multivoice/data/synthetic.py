"""Bundled synthetic corpus: parameterized harmonic "speakers".

Each speaker is a deterministic voice defined by a fundamental
frequency, a spectral tilt (timbre), a loudness, and a speech rate.
Vowel phonemes are harmonic stacks shaped by per-phoneme envelopes;
consonant phonemes are band-limited noise (unvoiced). Reference
phoneme alignments fall straight out of construction, so the corpus
carries its own segmentation/duration/F0 ground truth.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..dsp.audiofile import write_wav
from ..dsp.clip import AudioClip
from .lexicon import SILENCE, Lexicon, text_to_phonemes, write_lexicon
from .manifest import ManifestEntry, write_manifest

SAMPLE_RATE = 16000

# per-phoneme base durations (ms) and renderer kind
_PHONEME_BASE = {
    SILENCE: (120.0, "silence"),
    "aa": (130.0, "vowel"),
    "ee": (110.0, "vowel"),
    "oo": (150.0, "vowel"),
    "kk": (60.0, "burst"),
    "ss": (90.0, "noise"),
}

# harmonic amplitude profile per vowel: (harmonic, weight) pairs on top of
# a gently decaying stack
_VOWEL_PEAKS = {
    "aa": {1: 1.0, 2: 0.7, 3: 0.5},
    "ee": {1: 0.8, 5: 0.9, 6: 0.7},
    "oo": {1: 0.9, 2: 1.0, 4: 0.4},
}

_NOISE_BANDS = {
    "kk": (900.0, 3000.0),
    "ss": (4000.0, 7000.0),
}

_WORDS = {
    "ka": ("kk", "aa"),
    "kee": ("kk", "ee"),
    "koo": ("kk", "oo"),
    "sa": ("ss", "aa"),
    "see": ("ss", "ee"),
    "soo": ("ss", "oo"),
    "kasa": ("kk", "aa", "ss", "aa"),
    "seeko": ("ss", "ee", "kk", "oo"),
}


@dataclass(frozen=True)
class SyntheticSpeaker:
    speaker_id: str
    f0_hz: float
    rate: float      # duration multiplier
    tilt: float      # harmonic rolloff exponent
    loudness: float

    @property
    def pitch_class(self) -> str:
        return "low" if self.f0_hz < 170.0 else "high"


@dataclass(frozen=True)
class CorpusPaths:
    root: Path
    manifest: Path
    lexicon: Path
    alignments_dir: Path
    speakers_tsv: Path


def default_speakers(n: int) -> list[SyntheticSpeaker]:
    """Distinct, well-separated voices; 2 and 4 speaker sets are tuned
    for the bundled desk-scale runs, larger sets interpolate."""
    if n == 2:
        f0s, rates = [120.0, 220.0], [1.0, 0.85]
    elif n == 4:
        f0s, rates = [110.0, 150.0, 230.0, 320.0], [1.15, 1.0, 0.9, 0.8]
    else:
        lows = np.linspace(100.0, 150.0, (n + 1) // 2)
        highs = np.linspace(220.0, 320.0, n // 2)
        f0s = list(np.concatenate([lows, highs]))
        rates = list(np.linspace(1.2, 0.8, n))
    tilts = [0.3 + 0.9 * (i % 4) / 3.0 for i in range(n)]
    return [
        SyntheticSpeaker(f"spk{i}", float(f0s[i]), float(rates[i]),
                         tilts[i], 0.8 - 0.05 * (i % 3))
        for i in range(n)
    ]


def build_lexicon() -> Lexicon:
    return Lexicon.from_entries(dict(_WORDS))


def phoneme_duration_ms(phoneme: str, speaker: SyntheticSpeaker,
                        rng: np.random.Generator | None = None) -> float:
    base, _ = _PHONEME_BASE[phoneme]
    dur = base * speaker.rate
    if rng is not None:
        dur *= 1.0 + rng.uniform(-0.15, 0.15)
    return dur


def _band_noise(rng: np.random.Generator, n: int, lo: float, hi: float) -> np.ndarray:
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / SAMPLE_RATE)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    shaped = np.fft.irfft(spec, n)
    peak = np.max(np.abs(shaped))
    return shaped / peak if peak > 0 else shaped


def _phoneme_gain_envelope(n: int) -> np.ndarray:
    ramp = min(int(0.010 * SAMPLE_RATE), max(1, n // 4))
    env = np.ones(n)
    env[:ramp] = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
    env[n - ramp:] = env[:ramp][::-1]
    return env


def render_utterance(phonemes: list, speaker: SyntheticSpeaker,
                     rng: np.random.Generator,
                     deterministic_durations: bool = True):
    """Waveform plus reference alignment [(phoneme, start_ms, end_ms)].

    Harmonic oscillators run on the utterance-global clock so vowel
    phases stay continuous across intervening consonants.
    """
    dur_rng = None if deterministic_durations else rng
    durations = [phoneme_duration_ms(p, speaker, dur_rng) for p in phonemes]
    lengths = [max(1, int(round(d * SAMPLE_RATE / 1000.0))) for d in durations]
    total = int(np.sum(lengths))
    t = np.arange(total) / SAMPLE_RATE

    max_harm = max(1, min(24, int(7000.0 // speaker.f0_hz)))
    harmonics = np.arange(1, max_harm + 1)
    weights = harmonics.astype(np.float64) ** (-speaker.tilt)

    out = np.zeros(total)
    alignment = []
    cursor = 0
    for phoneme, n in zip(phonemes, lengths):
        seg = slice(cursor, cursor + n)
        kind = _PHONEME_BASE[phoneme][1]
        if kind == "vowel":
            peaks = _VOWEL_PEAKS[phoneme]
            amps = np.array([weights[h - 1] * peaks.get(h, 0.15)
                             for h in harmonics])
            stack = np.zeros(n)
            for h, a in zip(harmonics, amps):
                stack += a * np.sin(2 * np.pi * h * speaker.f0_hz * t[seg])
            stack /= np.max(np.abs(stack)) + 1e-12
            out[seg] += 0.55 * speaker.loudness * _phoneme_gain_envelope(n) * stack
        elif kind in ("burst", "noise"):
            lo, hi = _NOISE_BANDS[phoneme]
            level = 0.4 if kind == "burst" else 0.3
            out[seg] += (level * speaker.loudness * _phoneme_gain_envelope(n)
                         * _band_noise(rng, n, lo, hi))
        start_ms = cursor * 1000.0 / SAMPLE_RATE
        end_ms = (cursor + n) * 1000.0 / SAMPLE_RATE
        alignment.append((phoneme, start_ms, end_ms))
        cursor += n
    peak = np.max(np.abs(out))
    if peak > 0.95:
        out *= 0.95 / peak
    return AudioClip(out, SAMPLE_RATE), alignment


def write_alignment(path: str | Path, alignment) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for phoneme, start_ms, end_ms in alignment:
            f.write(f"{phoneme} {start_ms:.3f} {end_ms:.3f}\n")


def read_alignment(path: str | Path) -> list:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'phoneme "
                                 f"start_ms end_ms'")
            out.append((parts[0], float(parts[1]), float(parts[2])))
    return out


def generate_corpus(root: str | Path, n_speakers: int = 2,
                    utterances_per_speaker: int = 25, seed: int = 1234,
                    deterministic_durations: bool = True,
                    words_per_utterance=(2, 4)) -> CorpusPaths:
    """Write WAVs, manifest, lexicon, reference alignments, and speaker
    metadata under root. Fully deterministic for a given seed."""
    root = Path(root)
    wav_dir = root / "wav"
    align_dir = root / "alignments"
    wav_dir.mkdir(parents=True, exist_ok=True)
    align_dir.mkdir(parents=True, exist_ok=True)

    lexicon = build_lexicon()
    speakers = default_speakers(n_speakers)
    words = sorted(_WORDS)
    rng = np.random.default_rng(seed)

    entries = []
    for speaker in speakers:
        for k in range(utterances_per_speaker):
            n_words = int(rng.integers(words_per_utterance[0],
                                       words_per_utterance[1] + 1))
            text = " ".join(rng.choice(words, size=n_words))
            phonemes = text_to_phonemes(text, lexicon)
            clip, alignment = render_utterance(
                phonemes, speaker, rng,
                deterministic_durations=deterministic_durations)
            stem = f"{speaker.speaker_id}_{k:04d}"
            write_wav(wav_dir / f"{stem}.wav", clip)
            write_alignment(align_dir / f"{stem}.align", alignment)
            entries.append(ManifestEntry(f"wav/{stem}.wav",
                                         speaker.speaker_id, text))

    manifest_path = root / "manifest.tsv"
    lexicon_path = root / "lexicon.txt"
    speakers_path = root / "speakers.tsv"
    write_manifest(manifest_path, entries)
    write_lexicon(lexicon_path, lexicon)
    with open(speakers_path, "w", encoding="utf-8") as f:
        f.write("speaker_id\tf0_hz\trate\tpitch_class\n")
        for s in speakers:
            f.write(f"{s.speaker_id}\t{s.f0_hz:g}\t{s.rate:g}\t{s.pitch_class}\n")
    with open(root / "corpus.json", "w", encoding="utf-8") as f:
        json.dump({"n_speakers": n_speakers, "seed": seed,
                   "utterances_per_speaker": utterances_per_speaker,
                   "deterministic_durations": deterministic_durations},
                  f, sort_keys=True)
    return CorpusPaths(root, manifest_path, lexicon_path, align_dir,
                       speakers_path)
