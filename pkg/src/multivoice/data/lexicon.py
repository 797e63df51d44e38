"""Pronunciation lexicon and transcript-to-phoneme conversion."""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

SILENCE = "sil"

_WORD_RE = re.compile(r"[a-z0-9']+")


@dataclass(frozen=True)
class Lexicon:
    """word -> phoneme tuple map plus the ordered phoneme inventory.

    The inventory always contains the silence phoneme, placed first;
    the remaining phonemes follow in sorted order so the inventory is a
    pure function of the entries.
    """

    entries: dict
    phoneme_set: tuple

    @classmethod
    def from_entries(cls, entries: dict) -> "Lexicon":
        observed = sorted({p for prons in entries.values() for p in prons}
                          - {SILENCE})
        return cls(dict(entries), (SILENCE, *observed))

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    def __getitem__(self, word: str) -> tuple:
        return tuple(self.entries[word])


def parse_lexicon(path: str | Path) -> Lexicon:
    """One entry per line: "WORD PH1 PH2 ..." (whitespace separated)."""
    entries: dict = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 2:
                raise ValueError(f"{path}:{lineno}: need a word and at least "
                                 f"one phoneme")
            word = parts[0].lower()
            if word in entries:
                raise ValueError(f"{path}:{lineno}: duplicate word {word!r}")
            entries[word] = tuple(parts[1:])
    return Lexicon.from_entries(entries)


def write_lexicon(path: str | Path, lexicon: Lexicon) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for word in sorted(lexicon.entries):
            f.write(f"{word} {' '.join(lexicon.entries[word])}\n")


def tokenize(transcript: str) -> list[str]:
    """Lowercase and keep alphanumeric runs (apostrophes allowed)."""
    return _WORD_RE.findall(transcript.lower())


def text_to_phonemes(transcript: str, lexicon: Lexicon,
                     boundary_silence: bool = True,
                     interword_silence: bool = False) -> list[str]:
    """Concatenate per-word pronunciations.

    A silence phoneme is placed at the utterance start and end by
    default; interword_silence additionally separates words. Unknown
    words raise an error naming every missing word.
    """
    words = tokenize(transcript)
    if not words:
        raise ValueError("empty transcript")
    missing = [w for w in words if w not in lexicon]
    if missing:
        raise ValueError("words not in lexicon: " + ", ".join(sorted(set(missing))))
    phonemes: list[str] = []
    if boundary_silence:
        phonemes.append(SILENCE)
    for i, word in enumerate(words):
        if i > 0 and interword_silence:
            phonemes.append(SILENCE)
        phonemes.extend(lexicon[word])
    if boundary_silence:
        phonemes.append(SILENCE)
    return phonemes
