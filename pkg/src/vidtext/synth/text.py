"""Whitespace/lowercase tokenizer with a closed vocabulary.

Special tokens are matched verbatim before lowercasing; every other word is
lowercased and must already be in the vocabulary — unknown words raise
instead of mapping to an UNK id, so coverage problems surface at corpus
build time rather than silently during training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import VocabularyError

PAD, CLS, MASK, SEP, BLANK = "[PAD]", "[CLS]", "[MASK]", "[SEP]", "[BLANK]"
SPECIAL_TOKENS = (PAD, CLS, MASK, SEP, BLANK)
ANSWER_TOKENS = ("0", "1", "2", "3", "4")

# Words used by the question/answer templates on top of caption words.
TEMPLATE_WORDS = ("what", "color", "is", "which", "direction", "does", "move", "matches", "caption")


@dataclass
class Vocabulary:
    id_to_token: list[str]
    token_to_id: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise VocabularyError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def cls_id(self) -> int:
        return self.token_to_id[CLS]

    @property
    def mask_id(self) -> int:
        return self.token_to_id[MASK]

    @property
    def sep_id(self) -> int:
        return self.token_to_id[SEP]

    @property
    def blank_id(self) -> int:
        return self.token_to_id[BLANK]

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset(self.token_to_id[t] for t in SPECIAL_TOKENS)

    def answer_ids(self, count: int = len(ANSWER_TOKENS)) -> list[int]:
        return [self.token_to_id[t] for t in ANSWER_TOKENS[:count]]

    def id(self, token: str) -> int:
        try:
            return self.token_to_id[token]
        except KeyError:
            raise VocabularyError(f"token {token!r} is out of vocabulary") from None

    @classmethod
    def from_texts(cls, texts: list[str], extra_words: tuple[str, ...] = TEMPLATE_WORDS) -> "Vocabulary":
        words = set()
        for text in texts:
            words.update(w.lower() for w in text.split())
        words.update(w.lower() for w in extra_words)
        words -= set(SPECIAL_TOKENS) | set(ANSWER_TOKENS)
        tokens = list(SPECIAL_TOKENS) + list(ANSWER_TOKENS) + sorted(words)
        return cls(tokens)


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    """Map text to token ids; no specials are prepended or appended."""
    ids = []
    for raw in text.split():
        if raw in vocab.token_to_id:
            ids.append(vocab.token_to_id[raw])
            continue
        word = raw.lower()
        if word not in vocab.token_to_id:
            raise VocabularyError(f"word {raw!r} is out of vocabulary")
        ids.append(vocab.token_to_id[word])
    return ids


def detokenize(ids: list[int], vocab: Vocabulary) -> str:
    return " ".join(vocab.id_to_token[i] for i in ids)
