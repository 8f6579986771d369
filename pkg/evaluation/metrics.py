"""Ranking metrics over binary relevance lists given in predicted rank order.

Questions without any positive answer have no defined AP and are left out of
the averages; they are counted in ``n_skipped``.
"""

import csv
import json
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field

DEFAULT_CUTOFFS = (1, 3)


def average_precision(ranked: Sequence[int]) -> float:
    r = np.asarray(ranked) != 0
    if not r.any():
        return 0.0
    hits = np.cumsum(r)
    precision_at = hits / np.arange(1, len(r) + 1)
    return float(precision_at[r].mean())


def reciprocal_rank(ranked: Sequence[int]) -> float:
    hits = np.flatnonzero(np.asarray(ranked) != 0)
    return float(1.0 / (hits[0] + 1)) if hits.size else 0.0


def precision_at(ranked: Sequence[int], n: int) -> float:
    """Precision among the top min(n, len) answers."""
    if n < 1:
        raise ValueError(f"cutoff must be >= 1, got {n}")
    if len(ranked) == 0:
        return 0.0
    top = np.asarray(ranked[:n]) != 0
    return float(top.sum() / len(top))


class QuestionMetrics(BaseModel):
    question_id: str
    ap: float
    rr: float
    p_at: dict[int, float]


class MetricReport(BaseModel):
    map: float = 0.0
    mrr: float = 0.0
    p_at: dict[int, float] = Field(default_factory=dict)
    per_question: list[QuestionMetrics] = Field(default_factory=list)
    n_evaluated: int = 0
    n_skipped: int = 0
    significance: Optional[dict[str, float]] = None

    def summary(self) -> dict:
        out = {"map": self.map, "mrr": self.mrr, "n_evaluated": self.n_evaluated,
               "n_skipped": self.n_skipped}
        for n, value in sorted(self.p_at.items()):
            out[f"p@{n}"] = value
        return out

    def write_json(self, path: Union[str, Path]) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")

    def write_tsv(self, path: Union[str, Path]) -> None:
        cutoffs = sorted(self.p_at)
        with Path(path).open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
            writer.writerow(["question_id", "AP", "RR"] + [f"P@{n}" for n in cutoffs])
            for q in self.per_question:
                writer.writerow([q.question_id, f"{q.ap:.6f}", f"{q.rr:.6f}"]
                                + [f"{q.p_at[n]:.6f}" for n in cutoffs])


def evaluate_ranking(ranked_labels_per_question: Sequence[Sequence[int]],
                     cutoffs: Iterable[int] = DEFAULT_CUTOFFS,
                     question_ids: Optional[Sequence[str]] = None) -> MetricReport:
    """
    Macro-averaged MAP, MRR and P@N

    Args:
        ranked_labels_per_question: For each question, its labels in predicted rank order
        cutoffs: Values of N for P@N
        question_ids: Optional ids for the per-question rows (defaults to positions)

    Returns:
        MetricReport
    """
    if not ranked_labels_per_question:
        raise ValueError("no questions to evaluate")
    cutoffs = sorted(set(cutoffs))
    if question_ids is None:
        question_ids = [str(i) for i in range(len(ranked_labels_per_question))]
    elif len(question_ids) != len(ranked_labels_per_question):
        raise ValueError("question_ids and rankings differ in length")

    rows: list[QuestionMetrics] = []
    skipped = 0
    for qid, ranked in zip(question_ids, ranked_labels_per_question):
        if not any(ranked):
            skipped += 1
            continue
        rows.append(QuestionMetrics(question_id=qid, ap=average_precision(ranked),
                                    rr=reciprocal_rank(ranked),
                                    p_at={n: precision_at(ranked, n) for n in cutoffs}))
    if not rows:
        return MetricReport(p_at={n: 0.0 for n in cutoffs}, n_skipped=skipped)
    return MetricReport(
        map=float(np.mean([r.ap for r in rows])),
        mrr=float(np.mean([r.rr for r in rows])),
        p_at={n: float(np.mean([r.p_at[n] for r in rows])) for n in cutoffs},
        per_question=rows,
        n_evaluated=len(rows),
        n_skipped=skipped,
    )


def ranked_labels(labels: Sequence[int], order: Sequence[int]) -> list[int]:
    """Labels rearranged into a predicted order."""
    return [int(labels[i]) for i in order]
