"""
BM25 scoring over per-product snippet collections, snippet retrieval for
questions, and the BM25 answer-ranking baseline.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from tqdm import tqdm

from data.corpus import snippet_pool
from data.schema import QuestionThread, Review, Snippet
from models.vocab import tokenize

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75

logger = logging.getLogger("MUSE-Retrieval")


@dataclass(frozen=True)
class CorpusStats:
    """Document count, document frequencies and mean length of a tokenized collection"""

    doc_count: int
    doc_freq: Mapping[str, int] = field(default_factory=dict)
    avg_doc_len: float = 0.0

    @classmethod
    def from_documents(cls, documents: Sequence[Sequence[str]]) -> "CorpusStats":
        df = Counter()
        for tokens in documents:
            df.update(set(tokens))
        total = sum(len(tokens) for tokens in documents)
        avg = total / len(documents) if documents else 0.0
        return cls(doc_count=len(documents), doc_freq=dict(df), avg_doc_len=avg)

    def idf(self, term: str) -> float:
        df = self.doc_freq.get(term, 0)
        return math.log((self.doc_count - df + 0.5) / (df + 0.5) + 1.0)


def bm25_score(query_tokens: Sequence[str], doc_tokens: Sequence[str], stats: CorpusStats,
               k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> float:
    """Okapi BM25 with the +1-smoothed idf; every query token occurrence contributes."""
    if not query_tokens or not doc_tokens or stats.avg_doc_len <= 0:
        return 0.0
    tf = Counter(doc_tokens)
    length_norm = k1 * (1.0 - b + b * len(doc_tokens) / stats.avg_doc_len)
    score = 0.0
    for term in query_tokens:
        f = tf.get(term, 0)
        if f == 0:
            continue
        score += stats.idf(term) * f * (k1 + 1.0) / (f + length_norm)
    return score


def _rank_by_score(scores: Sequence[float]) -> list[int]:
    # sorted() is stable, so equal scores keep input order
    return sorted(range(len(scores)), key=lambda i: -scores[i])


def retrieve_snippets(question: str, product_snippets: Sequence[Snippet], n: int,
                      k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> list[Snippet]:
    """
    Rank one product's snippets against a question and keep the top n

    Args:
        question: Question text
        product_snippets: Chunked reviews of the question's product
        n: Number of snippets to keep
        k1: BM25 term-frequency saturation
        b: BM25 length normalisation

    Returns:
        Up to n snippets with bm25_score filled, best first
    """
    if n < 1 or not product_snippets:
        return []
    docs = [tokenize(snippet.text) for snippet in product_snippets]
    stats = CorpusStats.from_documents(docs)
    query = tokenize(question)
    scores = [bm25_score(query, doc, stats, k1, b) for doc in docs]
    order = _rank_by_score(scores)[:n]
    return [product_snippets[i].model_copy(update={"bm25_score": float(scores[i])}) for i in order]


def bm25_answer_scores(thread: QuestionThread, k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> list[float]:
    docs = [tokenize(answer.text) for answer in thread.answers]
    stats = CorpusStats.from_documents(docs)
    query = tokenize(thread.question)
    return [bm25_score(query, doc, stats, k1, b) for doc in docs]


def bm25_rank_answers(thread: QuestionThread, k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> list[int]:
    """Answer indices ordered by BM25 against the question, the thread's answers forming the corpus."""
    if not thread.answers:
        raise ValueError(f"thread {thread.question_id} has no answers")
    return _rank_by_score(bm25_answer_scores(thread, k1, b))


def attach_snippets(threads: Sequence[QuestionThread], reviews: Mapping[str, Sequence[Review]],
                    n: int, k1: float = DEFAULT_K1, b: float = DEFAULT_B,
                    show_progress: bool = False) -> list[QuestionThread]:
    """Fill every thread with the top-n snippets of its product's reviews."""
    pools: dict[str, list[Snippet]] = {}
    prepared = []
    short = 0
    for thread in tqdm(threads, desc="Retrieving snippets", disable=not show_progress):
        if thread.product_id not in pools:
            pools[thread.product_id] = snippet_pool(reviews.get(thread.product_id, ()))
        snippets = retrieve_snippets(thread.question, pools[thread.product_id], n, k1, b)
        padded = len(snippets) < n
        short += padded
        prepared.append(thread.model_copy(update={"snippets": snippets, "snippets_padded": padded}))
    if short:
        logger.info(f"{short} thread(s) have fewer than {n} snippets")
    return prepared
