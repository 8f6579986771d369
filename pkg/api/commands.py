"""
Pipeline commands behind the command-line interface.

Every command takes the validated RunConfig plus the parsed arguments that are
specific to it, and returns what it produced so tests can inspect it without
re-reading files.
"""

import json
import logging
from pathlib import Path
from typing import Optional, Sequence

from core.config import Config, RunConfig, TrainingConfig
from core.errors import ConfigError
from data.corpus import (corpus_statistics, format_statistics, load_qa_corpus, read_prepared,
                         split_corpus, write_prepared)
from data.schema import QuestionThread
from evaluation.metrics import MetricReport
from evaluation.ranking_file import align_rankings, read_rankings, write_rankings
from evaluation.significance import significance_test
from retrieval.bm25 import attach_snippets
from services.checkpoint import load_checkpoint, save_checkpoint
from services.ranking_service import RankingService, bm25_rankings, evaluate_rankings
from services.trainer import Trainer, TrainingResult, vocabulary_for
from utils.seeding import derive_seed

logger = logging.getLogger("MUSE-CLI")

SPLITS = ("train", "val", "test")

# Settings that may differ from the checkpoint at inference time
INFERENCE_OVERRIDES = ("relations", "num_snippets", "clip_k", "batch_size")


def _input_file(path: Optional[Path], key: str) -> Path:
    if path is None:
        raise ConfigError(f"{key} is required for this command")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{key}: no such file: {path}")
    return path


def _output_file(path: Optional[Path], key: str) -> Path:
    if path is None:
        raise ConfigError(f"{key} is required for this command")
    return Path(path)


def _embeddings(cfg: RunConfig) -> Optional[Path]:
    path = cfg.embeddings_path or Config.EMBEDDINGS_PATH
    if path is None:
        logger.warning("No pretrained embeddings given; word vectors start random")
        return None
    return _input_file(Path(path), "embeddings_path")


def _show_progress() -> bool:
    return logging.getLogger().isEnabledFor(logging.INFO)


def _threads_of(threads: Sequence[QuestionThread], split: str) -> list[QuestionThread]:
    # Prepared files without split tags count as training data
    if split == "train":
        return [t for t in threads if t.split in ("train", None)]
    return [t for t in threads if t.split == split]


def cmd_prepare(cfg: RunConfig, args=None) -> list[QuestionThread]:
    """
    Load raw QA and review files, split the corpus and attach BM25 snippets

    Args:
        cfg: Run configuration (qa_path, review_path, prepared_path, fractions, num_snippets)
        args: Unused

    Returns:
        The prepared threads in input order
    """
    qa_path = _input_file(cfg.qa_path, "qa_path")
    review_path = _input_file(cfg.review_path, "review_path")
    out_path = _output_file(cfg.prepared_path, "prepared_path")

    threads, reviews = load_qa_corpus(qa_path, review_path)
    train, val, test = split_corpus(threads, cfg.test_fraction, cfg.val_fraction,
                                    derive_seed(cfg.seed, "split"))
    split_of = {id(t): name for name, part in zip(SPLITS, (train, val, test)) for t in part}
    tagged = [t.model_copy(update={"split": split_of[id(t)]}) for t in threads]
    prepared = attach_snippets(tagged, reviews, cfg.num_snippets, cfg.k1, cfg.b,
                               show_progress=_show_progress())
    write_prepared(out_path, prepared)

    logger.info(f"Prepared corpus written to {out_path}:")
    logger.info(f" - Train: {len(train)}")
    logger.info(f" - Validation: {len(val)}")
    logger.info(f" - Test: {len(test)}")
    print(format_statistics({
        "Train+Val": corpus_statistics(_threads_of(prepared, "train") + _threads_of(prepared, "val")),
        "Test": corpus_statistics(_threads_of(prepared, "test")),
    }))
    return prepared


def _fit(cfg: TrainingConfig, train: Sequence[QuestionThread], val: Sequence[QuestionThread],
         vocab, embeddings: Optional[Path], log_path: Optional[Path],
         monitor: Optional[Sequence[QuestionThread]] = None) -> TrainingResult:
    trainer = Trainer(cfg, vocab, embeddings)
    return trainer.fit(train, val, log_path, monitor, show_progress=_show_progress())


def cmd_train(cfg: RunConfig, args=None) -> TrainingResult:
    """
    Train a ranker on the prepared corpus and store the best-validation checkpoint

    Args:
        cfg: Run configuration
        args: May carry monitor_split, a split whose MAP is logged every epoch

    Returns:
        TrainingResult
    """
    prepared_path = _input_file(cfg.prepared_path, "prepared_path")
    checkpoint_path = _output_file(cfg.checkpoint_path, "checkpoint_path")
    embeddings = _embeddings(cfg)
    log_path = cfg.log_path or checkpoint_path.with_suffix(".log.jsonl")

    threads = read_prepared(prepared_path)
    train, val, test = (_threads_of(threads, name) for name in SPLITS)
    monitor_split = getattr(args, "monitor_split", None)
    monitor = _threads_of(threads, monitor_split) if monitor_split else None

    vocab = vocabulary_for(train, val + test, embeddings)
    result = _fit(cfg.training_config(), train, val, vocab, embeddings, log_path, monitor)
    save_checkpoint(checkpoint_path, result.model, vocab,
                    extra={"best_epoch": result.best_epoch, "best_val_map": result.best_val_map})
    logger.info(f"Training log written to {log_path}")
    return result


def _load_service(cfg: RunConfig) -> RankingService:
    checkpoint_path = _input_file(cfg.checkpoint_path, "checkpoint_path")
    explicit = cfg.model_fields_set
    expected = {key: getattr(cfg, key) for key in TrainingConfig.SHAPE_KEYS if key in explicit}
    overrides = {key: getattr(cfg, key) for key in INFERENCE_OVERRIDES if key in explicit}
    model, vocab, _ = load_checkpoint(checkpoint_path, expected, overrides)
    return RankingService(model, vocab)


def _rank(cfg: RunConfig, threads: Sequence[QuestionThread], ranker: str):
    if ranker == "bm25":
        return bm25_rankings(threads, cfg.k1, cfg.b)
    return _load_service(cfg).rank_all(threads)


def _split_threads(cfg: RunConfig, split: str) -> list[QuestionThread]:
    threads = read_prepared(_input_file(cfg.prepared_path, "prepared_path"))
    if split != "all":
        threads = _threads_of(threads, split)
    if not threads:
        raise ValueError(f"split '{split}' of {cfg.prepared_path} has no threads")
    return threads


def cmd_evaluate(cfg: RunConfig, args) -> MetricReport:
    """
    Score one split with MAP, MRR and P@N, optionally testing against a second ranking file

    Args:
        cfg: Run configuration (prepared_path, checkpoint_path unless ranker is bm25, report_path)
        args: ranker, split, cutoffs, per_question, compare, iterations

    Returns:
        MetricReport
    """
    threads = _split_threads(cfg, args.split)
    report = evaluate_rankings(threads, _rank(cfg, threads, args.ranker), args.cutoffs)

    if args.compare:
        other = align_rankings(threads, read_rankings(args.compare), args.compare)
        baseline = evaluate_rankings(threads, other, args.cutoffs)
        ours = {q.question_id: q for q in report.per_question}
        paired = [(ours[q.question_id], q) for q in baseline.per_question if q.question_id in ours]
        seed = derive_seed(cfg.seed, "significance")
        report.significance = {
            "compare_map": baseline.map,
            "compare_mrr": baseline.mrr,
            "p_map": significance_test([a.ap for a, _ in paired], [b.ap for _, b in paired],
                                       args.iterations, seed),
            "p_mrr": significance_test([a.rr for a, _ in paired], [b.rr for _, b in paired],
                                       args.iterations, seed),
        }

    logger.info(f"Evaluation of {args.ranker} on {args.split}:")
    for key, value in report.summary().items():
        logger.info(f" - {key}: {value}")
    if report.significance:
        logger.info(f" - p-value MAP: {report.significance['p_map']:.4f}")
        logger.info(f" - p-value MRR: {report.significance['p_mrr']:.4f}")

    if cfg.report_path is not None:
        report.write_json(cfg.report_path)
    else:
        print(json.dumps(report.summary(), sort_keys=True))
    if args.per_question:
        report.write_tsv(args.per_question)
    return report


def cmd_rank(cfg: RunConfig, args) -> list:
    """
    Write per-question answer rankings, optionally with the relation graphs used

    Args:
        cfg: Run configuration (prepared_path, checkpoint_path unless ranker is bm25)
        args: ranker, split, output, dump_graph

    Returns:
        Rankings in thread order
    """
    threads = _split_threads(cfg, args.split)
    output = _output_file(args.output or cfg.report_path, "output")
    if args.dump_graph and args.ranker == "bm25":
        raise ConfigError("--dump-graph needs the muse ranker")

    if args.ranker == "bm25":
        rankings = bm25_rankings(threads, cfg.k1, cfg.b)
    else:
        service = _load_service(cfg)
        rankings = service.rank_all(threads)
        if args.dump_graph:
            _dump_graphs(service, threads, Path(args.dump_graph))
    rows = write_rankings(output, threads, rankings)
    logger.info(f"Wrote {rows} ranked answers for {len(threads)} questions to {output}")
    return rankings


def _dump_graphs(service: RankingService, threads: Sequence[QuestionThread], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for start in range(0, len(threads), service.batch_size):
            chunk = threads[start:start + service.batch_size]
            for thread, graph in zip(chunk, service.graphs(chunk)):
                handle.write(f"## {thread.question_id}\n{graph.dump()}\n")
    logger.info(f"Relation graphs written to {path}")


def cmd_sweep(cfg: RunConfig, args) -> list[dict]:
    """
    Train and test once per snippet count

    Args:
        cfg: Run configuration (prepared_path, report_path)
        args: num_snippets_grid, cutoffs

    Returns:
        One result row per snippet count
    """
    prepared_path = _input_file(cfg.prepared_path, "prepared_path")
    embeddings = _embeddings(cfg)
    threads = read_prepared(prepared_path)
    train, val, test = (_threads_of(threads, name) for name in SPLITS)
    if not test:
        raise ValueError(f"{prepared_path} has no test threads")
    vocab = vocabulary_for(train, val + test, embeddings)

    stored = max(len(t.snippets) for t in threads)
    too_many = [n for n in args.num_snippets_grid if n > stored]
    if too_many:
        raise ConfigError(f"num_snippets_grid: {too_many} exceed the {stored} snippet(s) stored per "
                          f"question in {prepared_path}; rerun prepare with --num-snippets {max(too_many)}")

    rows = []
    for n in args.num_snippets_grid:
        run_cfg = cfg.training_config().with_updates({"num_snippets": n})
        logger.info(f"Sweep: training with {n} snippet(s) per question")
        result = _fit(run_cfg, train, val, vocab, embeddings, log_path=None)
        report = RankingService(result.model, vocab).evaluate(test, args.cutoffs)
        row = {"num_snippets": n, "best_epoch": result.best_epoch, "best_val_map": result.best_val_map}
        row.update(report.summary())
        rows.append(row)

    table = _sweep_table(rows)
    if cfg.report_path is not None:
        report_path = Path(cfg.report_path)
        report_path.parent.mkdir(parents=True, exist_ok=True)
        report_path.write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        report_path.with_suffix(".tsv").write_text(table, encoding="utf-8")
        logger.info(f"Sweep report written to {report_path}")
    else:
        print(table, end="")
    return rows


def _sweep_table(rows: Sequence[dict]) -> str:
    columns = ["num_snippets", "map", "mrr"] + sorted(k for k in rows[0] if k.startswith("p@"))
    lines = ["\t".join(columns)]
    for row in rows:
        lines.append("\t".join(str(row[c]) if c == "num_snippets" else f"{row[c]:.4f}" for c in columns))
    return "\n".join(lines) + "\n"
