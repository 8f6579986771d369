import logging
import re
from collections import Counter
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
import torch

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

# Words, or any single non-space non-word character
_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

logger = logging.getLogger("MUSE-Vocab")


def tokenize(text: str) -> list[str]:
    """Lowercase and split into word tokens, with punctuation as standalone tokens."""
    if not text:
        return []
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Token to id mapping; id 0 is padding and id 1 is the unknown token"""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = [PAD_TOKEN, UNK_TOKEN]
        self.stoi: dict[str, int] = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
        for token in tokens:
            self.add(token)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def lookup(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(token, UNK_ID) for token in tokens]

    def encode(self, text: str, max_len: Optional[int] = None) -> list[int]:
        """Tokenize and map to ids, truncating to max_len tokens."""
        ids = self.lookup(tokenize(text))
        if max_len is not None:
            ids = ids[:max_len]
        return ids

    @classmethod
    def from_tokens(cls, itos: list[str]) -> "Vocabulary":
        if itos[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabulary must start with the padding and unknown tokens")
        return cls(itos[2:])


def build_vocabulary(train_texts: Iterable[str], other_texts: Iterable[str] = (),
                     pretrained_words: Optional[set] = None, min_count: int = 1) -> Vocabulary:
    """
    Build the vocabulary used by the encoder

    Args:
        train_texts: Texts of the training split; every token seen min_count times is kept
        other_texts: Texts of the remaining splits; their tokens are kept only if pretrained
        pretrained_words: Words covered by the pretrained vectors file
        min_count: Minimum training frequency

    Returns:
        Vocabulary with deterministic (first-seen) id order
    """
    counts = Counter()
    order: list[str] = []
    for text in train_texts:
        for token in tokenize(text):
            if token not in counts:
                order.append(token)
            counts[token] += 1
    vocab = Vocabulary(token for token in order if counts[token] >= min_count)
    if pretrained_words:
        for text in other_texts:
            for token in tokenize(text):
                if token in pretrained_words:
                    vocab.add(token)
    return vocab


def read_pretrained_words(path: Union[str, Path]) -> set:
    """Collect the words of a GloVe-format vectors file without parsing the floats."""
    words = set()
    with Path(path).open("r", encoding="utf-8", errors="replace") as handle:
        for line in handle:
            word = line.split(" ", 1)[0]
            if word:
                words.add(word)
    return words


def build_embedding_matrix(vocab: Vocabulary, embed_dim: int, seed: int,
                           pretrained_path: Optional[Union[str, Path]] = None) -> torch.Tensor:
    """
    Initial embedding table: pretrained rows where available, uniform(-0.05, 0.05) otherwise

    Args:
        vocab: Vocabulary to cover
        embed_dim: Embedding size; must match the vectors file
        seed: Seed for the random rows
        pretrained_path: Optional GloVe-format file (token followed by embed_dim floats)

    Returns:
        Float tensor of shape (len(vocab), embed_dim) with a zero padding row
    """
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-0.05, 0.05, size=(len(vocab), embed_dim)).astype(np.float32)
    matrix[PAD_ID] = 0.0

    if pretrained_path is not None:
        found = 0
        with Path(pretrained_path).open("r", encoding="utf-8", errors="replace") as handle:
            for line_no, line in enumerate(handle, start=1):
                parts = line.rstrip().split(" ")
                token = parts[0]
                if token not in vocab.stoi or vocab.stoi[token] < 2:
                    continue
                if len(parts) - 1 != embed_dim:
                    raise ValueError(
                        f"{pretrained_path}:{line_no}: expected {embed_dim} values, found {len(parts) - 1}"
                    )
                matrix[vocab.stoi[token]] = np.asarray(parts[1:], dtype=np.float32)
                found += 1
        logger.info(f"Pretrained vectors cover {found}/{len(vocab) - 2} vocabulary words")

    return torch.from_numpy(matrix)
