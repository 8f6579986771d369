import os
import sys
import json
import logging
import pytest

from core.config import TrainingConfig
from data.schema import QuestionThread, RawAnswer, Snippet
from models.vocab import build_vocabulary

sys.path.append(os.path.dirname(os.path.abspath(__file__)))
from logging_utils import configure_safe_logging

# Configure safe logging for the entire test session
configure_safe_logging()

POSITIVE_ANSWERS = [
    "yes it works great with android",
    "yes , works great with my android phone",
    "it works with android and charges fast",
]
NEGATIVE_ANSWERS = [
    "no idea sorry",
    "sorry , no idea",
    "i returned it before trying",
]
SNIPPETS = [
    "the charger works great with android phones .",
    "shipping was slow but the box was fine .",
    "it charges my android tablet overnight .",
    "the cable feels cheap .",
]


# Register custom markers
def pytest_configure(config):
    config.addinivalue_line("markers", "integration: mark test as integration test")


@pytest.fixture
def logger():
    """Fixture to provide a logger for tests."""
    logger = logging.getLogger("MUSE-Test")
    logger.setLevel(logging.WARNING)
    return logger


def make_thread(question_id, question, answers, snippets=(), product_id="p1", split=None):
    """Build a thread from (text, pos_votes, neg_votes) answers and snippet texts."""
    return QuestionThread(
        question_id=question_id,
        product_id=product_id,
        question=question,
        answers=[RawAnswer(text=text, pos_votes=pos, neg_votes=neg) for text, pos, neg in answers],
        snippets=[Snippet(text=text, source_review_id=f"{product_id}-r{i}", bm25_score=float(len(snippets) - i))
                  for i, text in enumerate(snippets)],
        split=split,
    )


def separable_threads(count, split=None):
    """Threads whose positive answers share wording that the negatives never use."""
    threads = []
    for i in range(count):
        positives = [(POSITIVE_ANSWERS[(i + j) % 3], 3 + j, 1) for j in range(1 + i % 2)]
        negatives = [(NEGATIVE_ANSWERS[(i + j) % 3], 0, 2) for j in range(2)]
        # alternate where the positives sit so position carries no signal
        answers = negatives + positives if i % 2 else positives + negatives
        threads.append(make_thread(
            question_id=f"q{i}",
            question=f"does this charger work with android model {i} ?",
            answers=answers,
            snippets=[SNIPPETS[(i + j) % len(SNIPPETS)] for j in range(3)],
            product_id=f"p{i % 4}",
            split=split,
        ))
    return threads


@pytest.fixture
def thread_factory():
    """Fixture to provide the thread builder."""
    return make_thread


@pytest.fixture
def sample_threads():
    """Fixture to provide a handful of labelled threads with snippets."""
    return separable_threads(6)


@pytest.fixture
def tiny_config():
    """Fixture to provide a configuration small enough to train in seconds."""
    return TrainingConfig(
        embed_dim=8, hidden_size=4, proj_dim=8, gcn_dims=(6, 5), mlp_hidden=4,
        max_seq_len=20, clip_k=3, batch_size=4, epochs=2, patience=10, seed=7,
        num_snippets=3, learning_rate=0.01,
    )


@pytest.fixture
def sample_vocab(sample_threads):
    """Fixture to provide a vocabulary covering the sample threads."""
    texts = []
    for thread in sample_threads:
        texts.append(thread.question)
        texts.extend(answer.text for answer in thread.answers)
        texts.extend(snippet.text for snippet in thread.snippets)
    return build_vocabulary(texts)


def _write_jsonl(path, records):
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(json.dumps(record) + "\n")
    return path


@pytest.fixture
def corpus_files(tmp_path):
    """Fixture to provide raw QA and review JSON-lines files for the pipeline commands."""
    qa_records = []
    for thread in separable_threads(20):
        qa_records.append({
            "question_id": thread.question_id,
            "product_id": thread.product_id,
            "question": thread.question,
            "answers": [{"text": a.text, "pos_votes": a.pos_votes, "neg_votes": a.neg_votes}
                        for a in thread.answers],
        })
    review_records = []
    for p in range(4):
        review_records.append({
            "review_id": f"p{p}-r0",
            "product_id": f"p{p}",
            "text": "The charger works great with android phones. Shipping was slow. Ok.",
        })
        review_records.append({
            "review_id": f"p{p}-r1",
            "product_id": f"p{p}",
            "text": "It charges my android tablet overnight! The cable feels cheap; still fine for the price.",
        })
    return {
        "qa": _write_jsonl(tmp_path / "qa.jsonl", qa_records),
        "reviews": _write_jsonl(tmp_path / "reviews.jsonl", review_records),
        "dir": tmp_path,
    }


@pytest.fixture
def separable_factory():
    """Fixture to provide the builder of separable threads."""
    return separable_threads
