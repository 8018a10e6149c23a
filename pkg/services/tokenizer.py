"""Lossless InChI splitter and corpus-derived vocabulary.

The splitter is corpus independent: an uppercase letter joins the next
character only when the pair is in ``ELEMENT_SYMBOLS``, a fixed table of the
two-letter elements found in organic and organometallic InChI formulas.
Any other pair splits into one-character tokens, so a symbol missing from
the table still round-trips and only lengthens the token sequence. The
vocabulary, not the splitter, is what the corpus decides.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import structlog

from core.foundation import EncodingError, OutOfVocabularyError, VocabularyError
from utils.artifacts import atomic_write_text

logger = structlog.get_logger()

PAD_ID = 0
SOS_ID = 1
EOS_ID = 2
SPECIAL_TOKENS = ("<PAD>", "<SOS>", "<EOS>")

HEADER = "InChI=1S"
LAYER_MARKERS = frozenset({"/c", "/h", "/b", "/t", "/m", "/s", "/i"})

# Two-letter symbols that may follow an uppercase letter as a single token.
ELEMENT_SYMBOLS = frozenset(
    {
        "Ag", "Al", "Ar", "As", "Au", "Ba", "Be", "Bi", "Br", "Ca", "Cd", "Cl", "Co", "Cr", "Cs", "Cu",
        "Fe", "Ga", "Ge", "He", "Hg", "In", "Ir", "Kr", "Li", "Mg", "Mn", "Mo", "Na", "Nb", "Ne", "Ni",
        "Os", "Pb", "Pd", "Pt", "Rb", "Re", "Rh", "Ru", "Sb", "Sc", "Se", "Si", "Sn", "Sr", "Ta", "Te",
        "Ti", "Tl", "Xe", "Zn", "Zr",
    }
)  # fmt: skip


def _split_with_offsets(text: str) -> List[Tuple[str, int]]:
    for offset, char in enumerate(text):
        if ord(char) > 127:
            raise EncodingError(offset, char)

    pieces: List[Tuple[str, int]] = []
    pos, size = 0, len(text)
    while pos < size:
        if text.startswith(HEADER, pos):
            end = pos + len(HEADER)
        elif text[pos : pos + 2] in LAYER_MARKERS:
            end = pos + 2
        elif text[pos].isupper():
            end = pos + 2 if text[pos : pos + 2] in ELEMENT_SYMBOLS else pos + 1
        elif text[pos].isdigit():
            end = pos + 1
            while end < size and text[end].isdigit():
                end += 1
        else:
            end = pos + 1
        pieces.append((text[pos:end], pos))
        pos = end
    return pieces


def split(text: str) -> List[str]:
    """Partition an ASCII InChI string into tokens; ''.join(split(s)) == s.

    Priority at each position: the ``InChI=1S`` header, a two-character layer
    marker, an element symbol, a digit run, then any single character.
    """
    return [piece for piece, _ in _split_with_offsets(text)]


class Vocab:
    """Immutable token <-> id table with PAD, SOS, EOS at ids 0, 1, 2."""

    __slots__ = ("tokens", "index")

    def __init__(self, tokens: Sequence[str]):
        tokens = tuple(tokens)
        if tokens[:3] != SPECIAL_TOKENS:
            raise VocabularyError(f"first three tokens must be {list(SPECIAL_TOKENS)}")
        index = {token: position for position, token in enumerate(tokens)}
        if len(index) != len(tokens):
            raise VocabularyError("vocabulary tokens are not distinct")
        if any(not token for token in tokens):
            raise VocabularyError("vocabulary contains an empty token")
        self.tokens: Tuple[str, ...] = tokens
        self.index: Dict[str, int] = index

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: object) -> bool:
        return token in self.index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def __hash__(self) -> int:
        return hash(self.tokens)

    def save(self, path: Union[str, Path]) -> Path:
        """One token per line; the line number is the id."""
        return atomic_write_text(path, "\n".join(self.tokens) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocab":
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").split("\n")
        except FileNotFoundError as exc:
            raise VocabularyError("vocabulary file not found", str(path)) from exc
        except (OSError, UnicodeDecodeError) as exc:
            raise VocabularyError(f"cannot read vocabulary: {exc}", str(path)) from exc
        if lines and lines[-1] == "":
            lines.pop()
        try:
            return cls(lines)
        except VocabularyError as exc:
            raise VocabularyError(exc.message, str(path)) from exc


def build_vocab(corpus: Iterable[str]) -> Vocab:
    """Specials followed by the corpus's distinct tokens in sorted order."""
    seen = set()
    count = 0
    for text in corpus:
        seen.update(split(text))
        count += 1
    if count == 0:
        raise VocabularyError("cannot build a vocabulary from an empty corpus")
    vocab = Vocab(SPECIAL_TOKENS + tuple(sorted(seen)))
    logger.info("vocab_built", corpus_size=count, vocab_size=len(vocab))
    return vocab


def encode(vocab: Vocab, text: str) -> List[int]:
    """[SOS] + token ids + [EOS]; unknown tokens raise with their offset."""
    ids = [SOS_ID]
    for piece, offset in _split_with_offsets(text):
        token_id = vocab.index.get(piece)
        if token_id is None or token_id < len(SPECIAL_TOKENS):
            raise OutOfVocabularyError(piece, offset)
        ids.append(token_id)
    ids.append(EOS_ID)
    return ids


def decode(vocab: Vocab, ids: Iterable[int]) -> str:
    """Concatenate tokens, skipping SOS and PAD, stopping at the first EOS."""
    out: List[str] = []
    for token_id in ids:
        token_id = int(token_id)
        if token_id == EOS_ID:
            break
        if token_id in (SOS_ID, PAD_ID):
            continue
        if not 0 <= token_id < len(vocab):
            raise VocabularyError(f"token id {token_id} outside vocabulary of size {len(vocab)}")
        out.append(vocab.tokens[token_id])
    return "".join(out)
