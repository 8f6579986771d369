import json
from pathlib import Path

import pytest

from main import build_parser, main, run_config_from_args
from data.corpus import read_prepared
from services.checkpoint import load_checkpoint
from services.ranking_service import RankingService

TINY = ["--embed-dim", "8", "--hidden-size", "4", "--proj-dim", "8", "--gcn-dims", "6,5",
        "--mlp-hidden", "4", "--batch-size", "4", "--clip-k", "3", "--epochs", "2", "--lr", "0.01"]


def _prepare(corpus_files, name="prepared.jsonl", extra=()):
    out = corpus_files["dir"] / name
    code = main(["prepare", "--qa", str(corpus_files["qa"]), "--reviews", str(corpus_files["reviews"]),
                 "--prepared", str(out), "--seed", "7", "--num-snippets", "3", *extra])
    assert code == 0
    return out


def _train(prepared, workdir, name="model.pt", extra=()):
    checkpoint = workdir / name
    code = main(["train", "--prepared", str(prepared), "--checkpoint", str(checkpoint), "--seed", "7",
                 "--num-snippets", "3", *TINY, *extra])
    assert code == 0
    return checkpoint


@pytest.fixture
def prepared(corpus_files):
    """Fixture to provide a prepared corpus built by the prepare command."""
    return _prepare(corpus_files)


def test_prepare_writes_split_corpus_with_snippets(corpus_files, capsys):
    """Test the prepared file contents and the statistics table."""
    out = _prepare(corpus_files)
    threads = read_prepared(out)
    assert len(threads) == 20
    assert all(len(t.snippets) <= 3 for t in threads)
    assert {t.split for t in threads} == {"train", "val", "test"}
    assert sum(t.split == "test" for t in threads) == 2
    assert all(s.bm25_score >= 0 for t in threads for s in t.snippets)

    table = capsys.readouterr().out
    assert "Train+Val" in table and "Test" in table


def test_prepare_is_deterministic(corpus_files):
    """Test that rerunning with the same seed gives a byte-identical file."""
    first = _prepare(corpus_files, "a.jsonl")
    second = _prepare(corpus_files, "b.jsonl")
    assert first.read_bytes() == second.read_bytes()
    third = _prepare(corpus_files, "c.jsonl", extra=["--seed", "8"])
    assert third.read_bytes() != first.read_bytes()


def test_missing_reviews_file_is_a_one_line_error(corpus_files, capsys):
    """Test the machine-parsable error line and exit code."""
    missing = corpus_files["dir"] / "no_reviews.jsonl"
    code = main(["prepare", "--qa", str(corpus_files["qa"]), "--reviews", str(missing),
                 "--prepared", str(corpus_files["dir"] / "out.jsonl")])
    assert code == 1
    err_lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("error\t")]
    assert len(err_lines) == 1
    _, kind, message = err_lines[0].split("\t")
    assert kind == "FileNotFoundError"
    assert str(missing) in message


def test_unknown_config_key_fails_before_work(corpus_files, capsys):
    """Test that config files with unknown keys are rejected."""
    config_file = corpus_files["dir"] / "run.env"
    config_file.write_text("learning_rat=0.1\n", encoding="utf-8")
    code = main(["train", "--config", str(config_file), "--prepared", str(corpus_files["qa"])])
    assert code == 1
    assert "error\tConfigError\tlearning_rat" in capsys.readouterr().err


def test_flags_override_config_file(tmp_path):
    """Test precedence and the relation and feature switches."""
    config_file = tmp_path / "run.env"
    config_file.write_text("epochs=5\nrelations=rel,sim\nbatch_size=8\n", encoding="utf-8")
    args = build_parser().parse_args(["train", "--config", str(config_file), "--epochs", "9",
                                      "--no-similarity", "--no-textual-feature"])
    cfg = run_config_from_args(args)
    assert cfg.epochs == 9
    assert cfg.batch_size == 8
    assert cfg.relations == ("rel",)
    assert cfg.use_textual_feature is False
    assert cfg.learning_rate == 0.001


def test_bm25_evaluation_needs_no_checkpoint(prepared, corpus_files):
    """Test the baseline evaluation report."""
    report_path = corpus_files["dir"] / "bm25.json"
    per_question = corpus_files["dir"] / "bm25.tsv"
    code = main(["evaluate", "--ranker", "bm25", "--prepared", str(prepared), "--report", str(report_path),
                 "--per-question", str(per_question)])
    assert code == 0
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert report["n_evaluated"] + report["n_skipped"] == 2
    assert 0.0 <= report["map"] <= 1.0
    assert set(report["p_at"]) == {"1", "3"}
    assert per_question.read_text(encoding="utf-8").startswith("question_id\tAP\tRR\tP@1\tP@3\n")


@pytest.mark.integration
def test_train_evaluate_rank_pipeline(prepared, corpus_files):
    """Test training, evaluation, ranking and graph dumps end to end."""
    workdir = corpus_files["dir"]
    checkpoint = _train(prepared, workdir, extra=["--monitor-split", "test"])
    log = [json.loads(line) for line in checkpoint.with_suffix(".log.jsonl").read_text().splitlines()]
    assert len(log) == 2
    assert log[1]["best_val_map"] >= log[0]["best_val_map"]
    assert "monitor_map" in log[0]

    report_path = workdir / "muse.json"
    assert main(["evaluate", "--prepared", str(prepared), "--checkpoint", str(checkpoint),
                 "--report", str(report_path)]) == 0
    assert "map" in json.loads(report_path.read_text(encoding="utf-8"))

    ranks = workdir / "ranks.tsv"
    graphs = workdir / "graphs.txt"
    assert main(["rank", "--prepared", str(prepared), "--checkpoint", str(checkpoint),
                 "--output", str(ranks), "--dump-graph", str(graphs)]) == 0
    rows = [line.split("\t") for line in ranks.read_text(encoding="utf-8").splitlines()]
    by_question = {}
    for qid, index, score in rows:
        by_question.setdefault(qid, []).append((int(index), float(score)))
    assert len(by_question) == 2
    for ranking in by_question.values():
        scores = [s for _, s in ranking]
        assert scores == sorted(scores, reverse=True)
    assert graphs.read_text(encoding="utf-8").count("# ent (") == 2

    # a second run with the same seed logs identical epochs
    again = _train(prepared, workdir, name="again.pt", extra=["--monitor-split", "test"])
    assert again.with_suffix(".log.jsonl").read_text() == checkpoint.with_suffix(".log.jsonl").read_text()


@pytest.mark.integration
def test_no_entailment_equals_zeroed_entailment(prepared, corpus_files):
    """Test that --no-entailment at evaluation scores like the full model with entailment edges zeroed."""
    workdir = corpus_files["dir"]
    checkpoint = _train(prepared, workdir, extra=["--epochs", "1"])
    ranks = workdir / "no_ent.tsv"
    assert main(["rank", "--prepared", str(prepared), "--checkpoint", str(checkpoint),
                 "--output", str(ranks), "--no-entailment"]) == 0

    model, vocab, _ = load_checkpoint(checkpoint)
    threads = read_prepared(prepared, split="test")
    scores = RankingService(model, vocab).score_threads(threads, graph_hook=lambda g: g.without("ent"))
    expected = []
    for thread, thread_scores in zip(threads, scores):
        order = sorted(range(len(thread_scores)), key=lambda i: -thread_scores[i])
        expected.extend(f"{thread.question_id}\t{i}\t{thread_scores[i]:.6f}" for i in order)
    assert ranks.read_text(encoding="utf-8").splitlines() == expected


@pytest.mark.integration
def test_checkpoint_mismatch_is_reported(prepared, corpus_files, capsys):
    """Test that evaluating with different model sizes fails with a mismatch error."""
    checkpoint = _train(prepared, corpus_files["dir"], extra=["--epochs", "1"])
    code = main(["evaluate", "--prepared", str(prepared), "--checkpoint", str(checkpoint),
                 "--hidden-size", "6", "--proj-dim", "12"])
    assert code == 1
    assert "error\tCheckpointMismatchError\t" in capsys.readouterr().err


def test_compare_adds_significance(prepared, corpus_files):
    """Test the randomization test against a second ranking file."""
    workdir = corpus_files["dir"]
    baseline = workdir / "bm25_ranks.tsv"
    assert main(["rank", "--ranker", "bm25", "--prepared", str(prepared), "--split", "all",
                 "--output", str(baseline)]) == 0
    report_path = workdir / "compare.json"
    assert main(["evaluate", "--ranker", "bm25", "--prepared", str(prepared), "--split", "all",
                 "--compare", str(baseline), "--iterations", "200", "--report", str(report_path)]) == 0
    significance = json.loads(report_path.read_text(encoding="utf-8"))["significance"]
    # identical systems: every resample reaches the observed zero difference
    assert significance["p_map"] == 1.0
    assert significance["p_mrr"] == 1.0


@pytest.mark.integration
def test_sweep_reports_each_snippet_count(prepared, corpus_files):
    """Test the snippet-count sweep report."""
    report_path = corpus_files["dir"] / "sweep.json"
    code = main(["sweep", "--prepared", str(prepared), "--num-snippets-grid", "1,3", "--report",
                 str(report_path), *TINY, "--epochs", "1"])
    assert code == 0
    rows = json.loads(report_path.read_text(encoding="utf-8"))
    assert [r["num_snippets"] for r in rows] == [1, 3]
    table = report_path.with_suffix(".tsv").read_text(encoding="utf-8").splitlines()
    assert table[0] == "num_snippets\tmap\tmrr\tp@1\tp@3"
    assert len(table) == 3


def test_sweep_grid_is_validated():
    """Test that snippet counts outside 1..10 are rejected by the parser."""
    with pytest.raises(SystemExit):
        build_parser().parse_args(["sweep", "--num-snippets-grid", "0,11"])


def test_sweep_rejects_counts_above_the_prepared_snippets(prepared, corpus_files, capsys):
    """Test that asking for more snippets than were stored fails before any training."""
    report_path = corpus_files["dir"] / "sweep.json"
    code = main(["sweep", "--prepared", str(prepared), "--num-snippets-grid", "3,8", "--report",
                 str(report_path), *TINY])
    assert code == 1
    err = capsys.readouterr().err
    assert "error\tConfigError\tnum_snippets_grid: [8]" in err
    assert not report_path.exists()


def test_attention_flags_map_to_config():
    """Test the two attention switches."""
    args = build_parser().parse_args(["train", "--no-answer-attention", "--no-snippet-attention"])
    cfg = run_config_from_args(args)
    assert cfg.use_answer_attention is False
    assert cfg.use_snippet_attention is False
    default = run_config_from_args(build_parser().parse_args(["train"]))
    assert default.use_answer_attention and default.use_snippet_attention
    assert "use_answer_attention" not in default.model_fields_set


@pytest.mark.integration
def test_attention_ablations_train_and_evaluate(prepared, corpus_files, capsys):
    """Test training without either attention reader and the mismatch when the switch disagrees."""
    checkpoint = _train(prepared, corpus_files["dir"], extra=["--epochs", "1", "--no-answer-attention",
                                                              "--no-snippet-attention"])
    model, _, _ = load_checkpoint(checkpoint)
    assert model.encoder.answer_proj is None and model.encoder.W_c is None

    report_path = corpus_files["dir"] / "pooled.json"
    assert main(["evaluate", "--prepared", str(prepared), "--checkpoint", str(checkpoint),
                 "--report", str(report_path)]) == 0
    assert "map" in json.loads(report_path.read_text(encoding="utf-8"))

    full = _train(prepared, corpus_files["dir"], name="full.pt", extra=["--epochs", "1"])
    assert main(["evaluate", "--prepared", str(prepared), "--checkpoint", str(full),
                 "--no-answer-attention"]) == 1
    assert "error\tCheckpointMismatchError\t" in capsys.readouterr().err


def test_entrypoint_forwards_arguments_to_main():
    """Test that the container entrypoint only hands its arguments to main.py."""
    script = (Path(__file__).resolve().parent.parent / "entrypoint.sh").read_text(encoding="utf-8")
    assert 'exec ${PYTHON_EXEC} main.py "$@"' in script
    assert "torch" not in script
    assert "cuda" not in script.lower()


def test_relation_flag_help_names_every_linked_node(capsys):
    """Test that the relation switches describe all the edges they drop."""
    with pytest.raises(SystemExit):
        build_parser().parse_args(["rank", "--help"])
    text = " ".join(capsys.readouterr().out.split())
    assert "question to every answer and snippet" in text
    assert "answer pairs and snippet pairs" in text
