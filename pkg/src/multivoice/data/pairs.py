"""Adjacent-phoneme pair alphabet for the boundary classifier."""
from __future__ import annotations

from dataclasses import dataclass

BLANK = "<blank>"


def pairs_in_sequence(phonemes) -> list[tuple]:
    """Consecutive ordered pairs: [A,B,C] -> [(A,B), (B,C)]."""
    return [(a, b) for a, b in zip(phonemes, phonemes[1:])]


@dataclass(frozen=True)
class PhonemePairAlphabet:
    """Ordered pair labels; the classifier blank sits at index 0."""

    pairs: tuple

    def __post_init__(self):
        if len(set(self.pairs)) != len(self.pairs):
            raise ValueError("duplicate pair labels")

    @property
    def size(self) -> int:
        return len(self.pairs) + 1

    @property
    def blank_index(self) -> int:
        return 0

    def index_of(self, pair: tuple) -> int:
        try:
            return 1 + self.pairs.index(pair)
        except ValueError:
            raise KeyError(f"pair {pair!r} not in alphabet") from None

    def label_of(self, index: int):
        if index == 0:
            return BLANK
        return self.pairs[index - 1]

    def encode_sequence(self, phonemes) -> list[int]:
        """Pair-label indices for one phoneme sequence."""
        return [self.index_of(p) for p in pairs_in_sequence(phonemes)]


def build_pair_alphabet(phoneme_sequences) -> PhonemePairAlphabet:
    """Alphabet over the ordered pairs observed in the given sequences.

    Restricted to observed pairs rather than the full cross product;
    sorted for determinism regardless of corpus order.
    """
    observed = set()
    for seq in phoneme_sequences:
        observed.update(pairs_in_sequence(list(seq)))
    if not observed:
        raise ValueError("no adjacent pairs observed (all sequences shorter "
                         "than 2 phonemes)")
    return PhonemePairAlphabet(tuple(sorted(observed)))
