import logging
from typing import Optional, Sequence

import torch

from data.batching import make_batch
from data.schema import QuestionThread
from evaluation.metrics import DEFAULT_CUTOFFS, MetricReport, evaluate_ranking, ranked_labels
from models.muse import GraphHook, MuseRanker
from models.relgraph import SemanticGraph
from models.vocab import Vocabulary
from retrieval.bm25 import DEFAULT_B, DEFAULT_K1, bm25_answer_scores


def order_by_score(scores: Sequence[float]) -> list[int]:
    """Indices by descending score; equal scores keep input order."""
    return sorted(range(len(scores)), key=lambda i: -scores[i])


class RankingService:
    """Ranks the answers of question threads with a trained (or freshly initialized) model"""

    def __init__(self, model: MuseRanker, vocab: Vocabulary, batch_size: Optional[int] = None):
        self.logger = logging.getLogger("MUSE-RankingService")
        self.model = model
        self.vocab = vocab
        self.config = model.config
        self.batch_size = batch_size or self.config.batch_size

    def score_threads(self, threads: Sequence[QuestionThread],
                      graph_hook: Optional[GraphHook] = None) -> list[list[float]]:
        """Positive-class probability of every answer, thread by thread."""
        was_training = self.model.training
        self.model.eval()
        scores: list[list[float]] = []
        try:
            with torch.no_grad():
                for start in range(0, len(threads), self.batch_size):
                    chunk = threads[start:start + self.batch_size]
                    batch = make_batch(chunk, self.vocab, self.config.max_seq_len, self.config.num_snippets)
                    for pred in self.model(batch, graph_hook=graph_hook):
                        scores.append(pred.positive_probs.tolist())
        finally:
            self.model.train(was_training)
        return scores

    def rank_answers(self, thread: QuestionThread) -> list[tuple[int, float]]:
        """(answer index, score) pairs, best first."""
        scores = self.score_threads([thread])[0]
        return [(i, scores[i]) for i in order_by_score(scores)]

    def rank_all(self, threads: Sequence[QuestionThread]) -> list[list[tuple[int, float]]]:
        return [[(i, scores[i]) for i in order_by_score(scores)] for scores in self.score_threads(threads)]

    def evaluate(self, threads: Sequence[QuestionThread],
                 cutoffs=DEFAULT_CUTOFFS) -> MetricReport:
        return evaluate_rankings(threads, self.rank_all(threads), cutoffs)

    def graphs(self, threads: Sequence[QuestionThread]) -> list[SemanticGraph]:
        """Relation graphs of the given threads, for inspection."""
        batch = make_batch(threads, self.vocab, self.config.max_seq_len, self.config.num_snippets)
        with torch.no_grad():
            return [graph for _, graph in self.model.build_graphs(batch)]


def bm25_rankings(threads: Sequence[QuestionThread], k1: float = DEFAULT_K1,
                  b: float = DEFAULT_B) -> list[list[tuple[int, float]]]:
    """BM25 baseline rankings in the same shape as RankingService.rank_all."""
    rankings = []
    for thread in threads:
        scores = bm25_answer_scores(thread, k1, b)
        rankings.append([(i, scores[i]) for i in order_by_score(scores)])
    return rankings


def evaluate_rankings(threads: Sequence[QuestionThread], rankings: Sequence[Sequence[tuple[int, float]]],
                      cutoffs=DEFAULT_CUTOFFS) -> MetricReport:
    return evaluate_ranking(
        [ranked_labels(t.labels, [i for i, _ in ranking]) for t, ranking in zip(threads, rankings)],
        cutoffs,
        [t.question_id for t in threads],
    )
