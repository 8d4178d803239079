"""Word-level vocabulary and tokenization.

Tokens are lowercased runs of [a-z0-9]; every other non-space character is
its own token. Out-of-vocabulary tokens map to UNK.
"""

import re
from dataclasses import dataclass, field

PAD_ID = 0
UNK_ID = 1
MASK_ID = 2
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
MASK_TOKEN = "<mask>"
RESERVED = (PAD_TOKEN, UNK_TOKEN, MASK_TOKEN)

_TOKEN_RE = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")


def split_text(text: str) -> list[str]:
    """Lowercase and split on whitespace and punctuation boundaries;
    punctuation characters become their own tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocab:
    id_to_token: tuple[str, ...]
    token_to_id: dict = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.id_to_token[:3] != RESERVED:
            raise ValueError("vocab must start with the reserved PAD/UNK/MASK entries")
        object.__setattr__(self, "token_to_id",
                           {t: i for i, t in enumerate(self.id_to_token)})
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("vocab contains duplicate tokens")

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def encode(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def decode(self, idx: int) -> str:
        return self.id_to_token[idx]


def build_vocab(corpus, max_size: int) -> Vocab:
    """Count tokens over the documents' OCR words; keep the max_size most
    frequent (ties broken lexicographically) after the 3 reserved ids."""
    if max_size <= 3:
        raise ValueError("max_size must exceed the 3 reserved ids")
    counts = {}
    for doc in corpus:
        for word in doc.words:
            for tok in split_text(word.text):
                counts[tok] = counts.get(tok, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [tok for tok, _ in ranked[: max_size - 3]]
    return Vocab(id_to_token=RESERVED + tuple(kept))


def tokenize(text: str, vocab: Vocab) -> list[int]:
    """Token id sequence for a text; OOV tokens become UNK."""
    return [vocab.encode(t) for t in split_text(text)]
