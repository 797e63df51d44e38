"""Corpus manifest: UTF-8 TSV, one utterance per line."""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class ManifestEntry:
    audio_path: str
    speaker_id: str
    transcript: str


def parse_manifest(path: str | Path, check_audio: bool = True) -> list[ManifestEntry]:
    """Read entries in file order.

    Each line is "audio_path<TAB>speaker_id<TAB>transcript". Malformed
    lines and duplicate audio paths are rejected with the line number;
    missing audio files are rejected when check_audio is set.
    """
    entries: list[ManifestEntry] = []
    seen: dict[str, int] = {}
    base = Path(path).parent
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated "
                                 f"columns, got {len(parts)}")
            audio, speaker, transcript = parts
            if not speaker:
                raise ValueError(f"{path}:{lineno}: empty speaker_id")
            if not transcript:
                raise ValueError(f"{path}:{lineno}: empty transcript")
            if audio in seen:
                raise ValueError(f"{path}:{lineno}: duplicate audio path "
                                 f"{audio!r} (first seen on line {seen[audio]})")
            seen[audio] = lineno
            if check_audio:
                resolved = audio if os.path.isabs(audio) else str(base / audio)
                if not os.path.exists(resolved):
                    raise ValueError(f"{path}:{lineno}: audio file not found: "
                                     f"{audio}")
            entries.append(ManifestEntry(audio, speaker, transcript))
    return entries


def write_manifest(path: str | Path, entries: list[ManifestEntry]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e in entries:
            for field in (e.audio_path, e.speaker_id, e.transcript):
                if "\t" in field or "\n" in field:
                    raise ValueError(f"field contains separator: {field!r}")
            f.write(f"{e.audio_path}\t{e.speaker_id}\t{e.transcript}\n")


def resolve_audio_path(manifest_path: str | Path, entry: ManifestEntry) -> str:
    """Entry paths are relative to the manifest's directory."""
    if os.path.isabs(entry.audio_path):
        return entry.audio_path
    return str(Path(manifest_path).parent / entry.audio_path)
