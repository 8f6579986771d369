import itertools
import json
import pytest

from evaluation.metrics import (average_precision, evaluate_ranking, precision_at, ranked_labels,
                                reciprocal_rank)


def _oracle_ap(ranked):
    hits, total = 0, 0.0
    for k, rel in enumerate(ranked, start=1):
        if rel:
            hits += 1
            total += hits / k
    return total / hits


def _oracle_rr(ranked):
    return 1.0 / (ranked.index(1) + 1)


def _oracle_p(ranked, n):
    top = ranked[:min(n, len(ranked))]
    return sum(top) / len(top)


@pytest.mark.parametrize("length", [1, 2, 3, 4, 5])
def test_metrics_match_brute_force_oracle(length):
    """Test AP, RR and P@N on every relevance list of the given length with a positive."""
    for ranked in itertools.product([0, 1], repeat=length):
        ranked = list(ranked)
        if not any(ranked):
            continue
        assert average_precision(ranked) == pytest.approx(_oracle_ap(ranked))
        assert reciprocal_rank(ranked) == pytest.approx(_oracle_rr(ranked))
        for n in (1, 3):
            assert precision_at(ranked, n) == pytest.approx(_oracle_p(ranked, n))


def test_metric_examples():
    """Test a few hand-computed values."""
    assert average_precision([0, 1, 0, 1]) == pytest.approx((1 / 2 + 2 / 4) / 2)
    assert reciprocal_rank([0, 0, 1]) == pytest.approx(1 / 3)
    assert precision_at([1, 0], 3) == pytest.approx(0.5)
    assert average_precision([0, 0]) == 0.0
    assert reciprocal_rank([0, 0]) == 0.0
    assert isinstance(reciprocal_rank([0, 1]), float)


def test_precision_rejects_bad_cutoff():
    """Test that N must be positive."""
    with pytest.raises(ValueError):
        precision_at([1], 0)


def test_evaluate_ranking_skips_questions_without_positives():
    """Test macro averages over evaluable questions and the skipped count."""
    report = evaluate_ranking([[1, 0], [0, 0, 0], [0, 1, 1]], question_ids=["a", "b", "c"])
    assert report.n_evaluated == 2
    assert report.n_skipped == 1
    assert report.map == pytest.approx((1.0 + (1 / 2 + 2 / 3) / 2) / 2)
    assert report.mrr == pytest.approx((1.0 + 0.5) / 2)
    assert report.p_at[1] == pytest.approx(0.5)
    assert report.p_at[3] == pytest.approx((0.5 + 2 / 3) / 2)
    assert [q.question_id for q in report.per_question] == ["a", "c"]


def test_evaluate_ranking_all_skipped():
    """Test the report when no question has a positive answer."""
    report = evaluate_ranking([[0], [0, 0]])
    assert report.n_evaluated == 0
    assert report.n_skipped == 2
    assert report.map == 0.0


def test_evaluate_ranking_argument_errors():
    """Test empty input and mismatched ids."""
    with pytest.raises(ValueError):
        evaluate_ranking([])
    with pytest.raises(ValueError):
        evaluate_ranking([[1]], question_ids=["a", "b"])


def test_ranked_labels_follows_order():
    """Test rearranging labels into a predicted order."""
    assert ranked_labels([0, 1, 0, 1], [3, 0, 1, 2]) == [1, 0, 1, 0]


def test_report_files(tmp_path):
    """Test the JSON report and the per-question TSV."""
    report = evaluate_ranking([[1, 0], [0, 1]], question_ids=["q1", "q2"])
    report.write_json(tmp_path / "out" / "report.json")
    data = json.loads((tmp_path / "out" / "report.json").read_text(encoding="utf-8"))
    assert data["map"] == pytest.approx(0.75)
    assert data["significance"] is None
    assert set(data["p_at"]) == {"1", "3"}

    report.write_tsv(tmp_path / "per_question.tsv")
    lines = (tmp_path / "per_question.tsv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "question_id\tAP\tRR\tP@1\tP@3"
    assert lines[2] == "q2\t0.500000\t0.500000\t0.000000\t0.500000"
    assert report.summary()["p@1"] == pytest.approx(0.5)
