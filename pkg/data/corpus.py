import logging
import re
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from core.errors import CorpusFormatError
from data.schema import QuestionThread, Review, Snippet, derive_label
from models.vocab import tokenize
from utils.jsonl import iter_jsonl, write_jsonl

__all__ = [
    "derive_label", "chunk_review", "load_reviews", "load_qa_corpus", "split_corpus",
    "corpus_statistics", "format_statistics", "read_prepared", "write_prepared",
]

logger = logging.getLogger("MUSE-Corpus")

# A sentence ends at . ! ? or ; followed by whitespace (or the end of the text)
_SENTENCE_BREAK = re.compile(r"(?<=[.!?;])\s+")
MIN_CHUNK_TOKENS = 2


def _describe(error: ValidationError) -> str:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"])
    if first["type"] == "missing":
        return f"missing key '{location}'"
    return f"{location}: {first['msg']}"


def chunk_review(review_text: str) -> list[str]:
    """Split a review into sentence-level snippets; chunks under two tokens are dropped."""
    if not review_text or not review_text.strip():
        return []
    chunks = []
    for piece in _SENTENCE_BREAK.split(review_text.strip()):
        piece = piece.strip()
        if piece and len(tokenize(piece)) >= MIN_CHUNK_TOKENS:
            chunks.append(piece)
    return chunks


def load_reviews(review_path: Union[str, Path]) -> dict[str, list[Review]]:
    """Read the review file and group reviews by product, keeping file order."""
    by_product: dict[str, list[Review]] = defaultdict(list)
    for line_no, record in iter_jsonl(review_path):
        try:
            review = Review(**record)
        except ValidationError as e:
            raise CorpusFormatError(review_path, line_no, _describe(e)) from e
        by_product[review.product_id].append(review)
    return dict(by_product)


def load_qa_corpus(qa_path: Union[str, Path], review_path: Union[str, Path]
                   ) -> tuple[list[QuestionThread], dict[str, list[Review]]]:
    """
    Load question threads and the reviews they can draw snippets from

    Args:
        qa_path: JSON-lines file, one question with its answers per line
        review_path: JSON-lines file, one review per line

    Returns:
        (threads with labels derived from votes and no snippets, reviews grouped by product)
    """
    reviews = load_reviews(review_path)
    threads: list[QuestionThread] = []
    skipped = 0
    for line_no, record in iter_jsonl(qa_path):
        try:
            thread = QuestionThread(**{k: v for k, v in record.items() if k not in ("snippets", "split")})
        except ValidationError as e:
            raise CorpusFormatError(qa_path, line_no, _describe(e)) from e
        if not thread.answers:
            skipped += 1
            continue
        threads.append(thread)

    with_reviews = sum(1 for t in threads if t.product_id in reviews)
    logger.info(f"Loaded QA corpus from {qa_path}:")
    logger.info(f" - Threads: {len(threads)}")
    logger.info(f" - Threads with reviews: {with_reviews}")
    if skipped:
        logger.warning(f"Skipped {skipped} question(s) without answers")
    return threads, reviews


def split_corpus(threads: Sequence[QuestionThread], test_fraction: float, val_fraction: float,
                 seed: int) -> tuple[list, list, list]:
    """
    Partition threads into train/val/test at the question level

    Args:
        threads: All question threads
        test_fraction: Share of threads for testing, in (0, 1)
        val_fraction: Share of threads for validation, in (0, 1)
        seed: Seed for the permutation

    Returns:
        (train, val, test), each keeping the input order of its members
    """
    if not threads:
        raise ValueError("cannot split an empty corpus")
    for name, value in (("test_fraction", test_fraction), ("val_fraction", val_fraction)):
        if not 0.0 < value < 1.0:
            raise ValueError(f"{name} must be in (0, 1), got {value}")
    if test_fraction + val_fraction >= 1.0:
        raise ValueError(f"test_fraction + val_fraction must be < 1, got {test_fraction + val_fraction}")

    n = len(threads)
    n_test = int(round(n * test_fraction))
    n_val = int(round(n * val_fraction))
    order = np.random.default_rng(seed).permutation(n)
    test_idx = sorted(order[:n_test].tolist())
    val_idx = sorted(order[n_test:n_test + n_val].tolist())
    train_idx = sorted(order[n_test + n_val:].tolist())
    return ([threads[i] for i in train_idx], [threads[i] for i in val_idx],
            [threads[i] for i in test_idx])


def corpus_statistics(threads: Iterable[QuestionThread]) -> dict[str, int]:
    """Counts of products, questions, answers and positive answers."""
    products, questions, answers, positives = set(), 0, 0, 0
    for thread in threads:
        products.add(thread.product_id)
        questions += 1
        answers += len(thread.answers)
        positives += thread.num_positive
    return {"products": len(products), "questions": questions, "answers": answers,
            "positive_answers": positives}


def format_statistics(rows: dict[str, dict[str, int]]) -> str:
    """Render split statistics as a small fixed-width table."""
    header = f"{'Split':<10} {'# Product':>10} {'# Q':>8} {'# A':>8} {'# Pos A':>8}"
    lines = [header]
    for name, stats in rows.items():
        lines.append(f"{name:<10} {stats['products']:>10,} {stats['questions']:>8,} "
                     f"{stats['answers']:>8,} {stats['positive_answers']:>8,}")
    return "\n".join(lines)


def write_prepared(path: Union[str, Path], threads: Iterable[QuestionThread]) -> int:
    return write_jsonl(path, (thread.model_dump(mode="json") for thread in threads))


def read_prepared(path: Union[str, Path], split: Optional[str] = None) -> list[QuestionThread]:
    """Read a prepared corpus, optionally keeping only one split."""
    threads = []
    for line_no, record in iter_jsonl(path):
        try:
            thread = QuestionThread(**record)
        except ValidationError as e:
            raise CorpusFormatError(path, line_no, _describe(e)) from e
        if split is None or thread.split == split:
            threads.append(thread)
    return threads


def snippet_pool(reviews: Sequence[Review]) -> list[Snippet]:
    """Chunk every review of one product into snippets, in review order."""
    pool = []
    for review in reviews:
        for chunk in chunk_review(review.text):
            pool.append(Snippet(text=chunk, source_review_id=review.review_id))
    return pool
