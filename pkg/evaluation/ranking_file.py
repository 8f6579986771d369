"""Per-question ranking files: ``question_id<TAB>answer_index<TAB>score``, best first."""

import csv
from collections import OrderedDict
from pathlib import Path
from typing import Sequence, Union

from core.errors import CorpusFormatError
from data.schema import QuestionThread

Ranking = list[tuple[int, float]]


def write_rankings(path: Union[str, Path], threads: Sequence[QuestionThread],
                   rankings: Sequence[Ranking]) -> int:
    """Write one row per (question, answer), rows of a question sorted by descending score."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = 0
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="\t", lineterminator="\n")
        for thread, ranking in zip(threads, rankings):
            for answer_index, score in ranking:
                writer.writerow([thread.question_id, answer_index, f"{score:.6f}"])
                rows += 1
    return rows


def read_rankings(path: Union[str, Path]) -> "OrderedDict[str, Ranking]":
    """Rankings keyed by question id; rows are re-sorted by score so hand-made files work too."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"No such ranking file: {path}")
    grouped: "OrderedDict[str, Ranking]" = OrderedDict()
    with path.open("r", encoding="utf-8", newline="") as handle:
        for line_no, row in enumerate(csv.reader(handle, delimiter="\t"), start=1):
            if not row:
                continue
            if len(row) != 3:
                raise CorpusFormatError(path, line_no, f"expected 3 tab-separated fields, got {len(row)}")
            try:
                entry = (int(row[1]), float(row[2]))
            except ValueError as e:
                raise CorpusFormatError(path, line_no, str(e)) from e
            grouped.setdefault(row[0], []).append(entry)
    for qid, ranking in grouped.items():
        grouped[qid] = sorted(ranking, key=lambda pair: -pair[1])
    return grouped


def align_rankings(threads: Sequence[QuestionThread], rankings: "OrderedDict[str, Ranking]",
                   source: Union[str, Path] = "rankings") -> list[Ranking]:
    """Rankings in thread order; every thread must be covered with valid answer indices."""
    aligned = []
    for thread in threads:
        if thread.question_id not in rankings:
            raise ValueError(f"{source}: no ranking for question '{thread.question_id}'")
        ranking = rankings[thread.question_id]
        indices = sorted(i for i, _ in ranking)
        if indices != list(range(len(thread.answers))):
            raise ValueError(f"{source}: ranking of question '{thread.question_id}' does not cover "
                             f"answers 0..{len(thread.answers) - 1} exactly once")
        aligned.append(ranking)
    return aligned
