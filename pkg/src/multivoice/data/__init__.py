"""Corpus handling: manifests, lexicons, speaker stats, pair alphabets,
deterministic splits, and the bundled synthetic corpus generator."""
from .lexicon import (
    SILENCE,
    Lexicon,
    parse_lexicon,
    text_to_phonemes,
    tokenize,
    write_lexicon,
)
from .manifest import (
    ManifestEntry,
    parse_manifest,
    resolve_audio_path,
    write_manifest,
)
from .pairs import (
    BLANK,
    PhonemePairAlphabet,
    build_pair_alphabet,
    pairs_in_sequence,
)
from .split import N_FOLDS, VALIDATION_FOLD, assign_fold, split_corpus
from .stats import SpeakerStats, compute_speaker_stats, load_stats, save_stats
from .synthetic import (
    CorpusPaths,
    SyntheticSpeaker,
    build_lexicon,
    default_speakers,
    generate_corpus,
    read_alignment,
    render_utterance,
    write_alignment,
)

__all__ = [
    "BLANK",
    "CorpusPaths",
    "Lexicon",
    "ManifestEntry",
    "N_FOLDS",
    "PhonemePairAlphabet",
    "SILENCE",
    "SpeakerStats",
    "SyntheticSpeaker",
    "VALIDATION_FOLD",
    "assign_fold",
    "build_lexicon",
    "build_pair_alphabet",
    "compute_speaker_stats",
    "default_speakers",
    "generate_corpus",
    "load_stats",
    "parse_lexicon",
    "parse_manifest",
    "pairs_in_sequence",
    "read_alignment",
    "render_utterance",
    "resolve_audio_path",
    "save_stats",
    "split_corpus",
    "text_to_phonemes",
    "tokenize",
    "write_alignment",
    "write_lexicon",
    "write_manifest",
]
