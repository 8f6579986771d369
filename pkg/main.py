#!/usr/bin/env python3
"""
Command-line entry point for the MUSE answer ranker
"""

import argparse
import logging
import sys
from typing import Optional, Sequence

from dotenv import load_dotenv

from api.commands import cmd_evaluate, cmd_prepare, cmd_rank, cmd_sweep, cmd_train
from core.config import Config, load_run_config
from core.errors import MuseError

COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "rank": cmd_rank,
    "sweep": cmd_sweep,
}

# argparse dest -> RunConfig field
CONFIG_FLAGS = {
    "seed": "seed",
    "qa": "qa_path",
    "reviews": "review_path",
    "prepared": "prepared_path",
    "embeddings": "embeddings_path",
    "checkpoint": "checkpoint_path",
    "report": "report_path",
    "log": "log_path",
    "num_snippets": "num_snippets",
    "loss": "loss_mode",
    "lambda_listwise": "lambda_listwise",
    "eta": "eta",
    "norm_p": "norm_p",
    "regularizer": "regularizer",
    "batch_size": "batch_size",
    "learning_rate": "learning_rate",
    "epochs": "epochs",
    "patience": "patience",
    "clip_k": "clip_k",
    "embed_dim": "embed_dim",
    "hidden_size": "hidden_size",
    "proj_dim": "proj_dim",
    "gcn_dims": "gcn_dims",
    "mlp_hidden": "mlp_hidden",
    "max_seq_len": "max_seq_len",
    "dropout": "dropout",
    "attention_bias": "attention_bias",
    "test_fraction": "test_fraction",
    "val_fraction": "val_fraction",
    "k1": "k1",
    "b": "b",
}

RELATION_FLAGS = {"no_relevance": "rel", "no_similarity": "sim", "no_entailment": "ent"}


def setup_logging():
    """Set up logging for the command line"""
    logging.basicConfig(
        level=getattr(logging, Config.LOG_LEVEL),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def _snippet_grid(text: str) -> list[int]:
    values = _int_list(text)
    if not values or any(not 1 <= v <= 10 for v in values):
        raise argparse.ArgumentTypeError(f"snippet counts must lie in 1..10, got '{text}'")
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Flat key=value config file (overridden by flags)")
    common.add_argument("--seed", type=int, help="Seed for every random choice of the run")

    paths = common.add_argument_group("files")
    paths.add_argument("--qa", help="QA JSON-lines file")
    paths.add_argument("--reviews", help="Review JSON-lines file")
    paths.add_argument("--prepared", help="Prepared corpus JSON-lines file")
    paths.add_argument("--embeddings", help="Pretrained word vectors (GloVe text format)")
    paths.add_argument("--checkpoint", help="Model checkpoint")
    paths.add_argument("--report", help="Report file")
    paths.add_argument("--log", help="Training log (JSON lines)")

    ablation = common.add_argument_group("ablations")
    ablation.add_argument("--no-relevance", action="store_true",
                          help="Drop the rel relation (question to every answer and snippet)")
    ablation.add_argument("--no-similarity", action="store_true",
                          help="Drop the sim relation (answer pairs and snippet pairs)")
    ablation.add_argument("--no-entailment", action="store_true", help="Drop the answer-snippet relation")
    ablation.add_argument("--no-textual-feature", action="store_true", help="Rank on graph features only")
    ablation.add_argument("--no-interaction-feature", action="store_true", help="Rank on text features only")
    ablation.add_argument("--no-answer-attention", action="store_true",
                          help="Max-pool answers instead of attending to the question")
    ablation.add_argument("--no-snippet-attention", action="store_true",
                          help="Max-pool snippets instead of the clip-rescale attention")
    ablation.add_argument("--num-snippets", type=int, help="Review snippets per question")

    model = common.add_argument_group("model and training")
    model.add_argument("--loss", choices=["pointwise", "listwise", "joint"], help="Training objective")
    model.add_argument("--lambda", dest="lambda_listwise", type=float, help="Weight of the listwise term")
    model.add_argument("--eta", type=float, help="Weight of the parameter penalty")
    model.add_argument("--norm-p", type=float, help="Norm order of the listwise score normalization")
    model.add_argument("--regularizer", choices=["squared", "norm"], help="Parameter penalty form")
    model.add_argument("--batch-size", type=int, help="Questions per mini-batch")
    model.add_argument("--lr", dest="learning_rate", type=float, help="Adam learning rate")
    model.add_argument("--epochs", type=int, help="Maximum number of epochs")
    model.add_argument("--patience", type=int, help="Epochs without validation gain before stopping")
    model.add_argument("--clip-k", type=int, help="Words kept by the snippet attention")
    model.add_argument("--embed-dim", type=int)
    model.add_argument("--hidden-size", type=int, help="LSTM units per direction")
    model.add_argument("--proj-dim", type=int)
    model.add_argument("--gcn-dims", type=_int_list, help="Comma-separated GCN layer sizes")
    model.add_argument("--mlp-hidden", type=int)
    model.add_argument("--max-seq-len", type=int, help="Tokens kept per text")
    model.add_argument("--dropout", type=float)
    model.add_argument("--attention-bias", choices=["scalar", "vector"])

    data = common.add_argument_group("data preparation")
    data.add_argument("--test-fraction", type=float)
    data.add_argument("--val-fraction", type=float)
    data.add_argument("--k1", type=float, help="BM25 term-frequency saturation")
    data.add_argument("--b", type=float, help="BM25 length normalization")

    parser = argparse.ArgumentParser(description="Rank answers to product questions with MUSE")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("prepare", parents=[common], help="Split the corpus and retrieve review snippets")

    train = sub.add_parser("train", parents=[common], help="Train a ranker")
    train.add_argument("--monitor-split", choices=["train", "val", "test"],
                       help="Also log this split's MAP every epoch")

    for name, help_text in (("evaluate", "Compute MAP, MRR and P@N"), ("rank", "Write answer rankings")):
        cmd = sub.add_parser(name, parents=[common], help=help_text)
        cmd.add_argument("--ranker", choices=["muse", "bm25"], default="muse")
        cmd.add_argument("--split", choices=["train", "val", "test", "all"], default="test")
        if name == "evaluate":
            cmd.add_argument("--cutoffs", type=_int_list, default=[1, 3], help="Values of N for P@N")
            cmd.add_argument("--per-question", help="Write per-question metrics to this TSV file")
            cmd.add_argument("--compare", help="Ranking file to test against")
            cmd.add_argument("--iterations", type=int, default=10000, help="Randomization test resamples")
        else:
            cmd.add_argument("--output", help="Ranking TSV (defaults to --report)")
            cmd.add_argument("--dump-graph", help="Write the relation graphs as 0/1 grids to this file")

    sweep = sub.add_parser("sweep", parents=[common], help="Train and test for several snippet counts")
    sweep.add_argument("--num-snippets-grid", type=_snippet_grid, default=list(range(1, 11)))
    sweep.add_argument("--cutoffs", type=_int_list, default=[1, 3])
    return parser


def run_config_from_args(args: argparse.Namespace):
    """Merge built-in defaults, the config file and command-line flags, in that order."""
    overrides = {field: getattr(args, dest) for dest, field in CONFIG_FLAGS.items()}
    if args.no_textual_feature:
        overrides["use_textual_feature"] = False
    if args.no_interaction_feature:
        overrides["use_interaction_feature"] = False
    if args.no_answer_attention:
        overrides["use_answer_attention"] = False
    if args.no_snippet_attention:
        overrides["use_snippet_attention"] = False
    cfg = load_run_config(args.config, overrides)

    dropped = {rel for flag, rel in RELATION_FLAGS.items() if getattr(args, flag)}
    if dropped:
        overrides["relations"] = tuple(r for r in cfg.relations if r not in dropped)
        cfg = load_run_config(args.config, overrides)
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main function; returns the process exit code"""
    load_dotenv()
    setup_logging()
    logger = logging.getLogger("MUSE-Main")

    args = build_parser().parse_args(argv)
    try:
        cfg = run_config_from_args(args)
        logger.info(f"Running '{args.command}':")
        logger.info(f" - Seed: {cfg.seed}")
        logger.info(f" - Loss: {cfg.loss_mode}")
        logger.info(f" - Relations: {', '.join(cfg.relations) or 'none'}")
        logger.info(f" - Snippets per question: {cfg.num_snippets}")
        COMMANDS[args.command](cfg, args)
    except (MuseError, ValueError, OSError) as e:
        message = " ".join(str(e).split())
        print(f"error\t{type(e).__name__}\t{message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
