from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from data.schema import QuestionThread
from models.vocab import Vocabulary


@dataclass(frozen=True)
class ThreadLayout:
    """Where one thread's texts sit inside the batch's flat sequence list"""

    question_id: str
    question_index: int
    answer_indices: tuple[int, ...]
    snippet_indices: tuple[int, ...]
    labels: tuple[int, ...]


@dataclass(frozen=True)
class ThreadBatch:
    """Token id lists of every text in a mini-batch, encoded together"""

    sequences: tuple[tuple[int, ...], ...]
    threads: tuple[ThreadLayout, ...]

    def __len__(self) -> int:
        return len(self.threads)


def make_batch(threads: Sequence[QuestionThread], vocab: Vocabulary, max_seq_len: int,
               num_snippets: int) -> ThreadBatch:
    """
    Flatten a list of threads into one batch of id sequences

    Args:
        threads: Question threads, each with at least one answer
        vocab: Vocabulary used for the id mapping
        max_seq_len: Texts are truncated to this many tokens
        num_snippets: At most this many snippets are taken per thread (in stored order)

    Returns:
        ThreadBatch
    """
    sequences: list[tuple[int, ...]] = []
    layouts: list[ThreadLayout] = []

    def add(text: str) -> int:
        sequences.append(tuple(vocab.encode(text, max_seq_len)))
        return len(sequences) - 1

    for thread in threads:
        if not thread.answers:
            raise ValueError(f"thread {thread.question_id} has no answers")
        q_index = add(thread.question)
        a_indices = tuple(add(answer.text) for answer in thread.answers)
        c_indices = tuple(add(snippet.text) for snippet in thread.snippets[:num_snippets])
        layouts.append(ThreadLayout(thread.question_id, q_index, a_indices, c_indices,
                                    tuple(thread.labels)))
    return ThreadBatch(tuple(sequences), tuple(layouts))


def batch_order(num_threads: int, batch_size: int, rng: np.random.Generator) -> Iterator[list[int]]:
    """Shuffled thread indices cut into consecutive mini-batches."""
    order = rng.permutation(num_threads).tolist()
    for start in range(0, num_threads, batch_size):
        yield order[start:start + batch_size]
