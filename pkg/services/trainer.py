import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import torch
from tqdm import tqdm

from core.config import TrainingConfig
from core.errors import NumericError
from data.batching import batch_order, make_batch
from data.schema import QuestionThread
from models.muse import MuseRanker
from models.vocab import Vocabulary, build_embedding_matrix, build_vocabulary, read_pretrained_words
from services.ranking_service import RankingService
from utils.seeding import derive_seed, seed_torch


@dataclass
class TrainingResult:
    model: MuseRanker
    vocab: Vocabulary
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_map: float = float("-inf")


def init_model(config: TrainingConfig, vocab: Vocabulary,
               embeddings_path: Optional[Union[str, Path]] = None) -> MuseRanker:
    """Build a model with seeded Xavier-uniform weights and (optionally pretrained) embeddings."""
    matrix = build_embedding_matrix(vocab, config.embed_dim, derive_seed(config.seed, "embedding"),
                                    embeddings_path)
    seed_torch(derive_seed(config.seed, "init"))
    model = MuseRanker(len(vocab), config)
    model.reset_parameters(matrix)
    return model


class Trainer:
    """Mini-batch Adam training with per-epoch validation and best-MAP checkpoint selection"""

    def __init__(self, config: TrainingConfig, vocab: Vocabulary,
                 embeddings_path: Optional[Union[str, Path]] = None,
                 model: Optional[MuseRanker] = None):
        """
        Initialize the trainer

        Args:
            config: Training configuration
            vocab: Vocabulary shared by training and inference
            embeddings_path: Optional pretrained vectors file
            model: Start from this model instead of a fresh initialization
        """
        self.logger = logging.getLogger("MUSE-Trainer")
        self.config = config
        self.vocab = vocab
        self.model = model if model is not None else init_model(config, vocab, embeddings_path)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=config.learning_rate)

    def train_epoch(self, threads: Sequence[QuestionThread], epoch: int, rng: np.random.Generator) -> float:
        """One pass over the training threads; returns the mean batch loss."""
        self.model.train()
        losses = []
        for batch_no, indices in enumerate(batch_order(len(threads), self.config.batch_size, rng)):
            chunk = [threads[i] for i in indices]
            batch = make_batch(chunk, self.vocab, self.config.max_seq_len, self.config.num_snippets)
            breakdown = self.model.joint_loss(batch)
            loss = breakdown.total
            if not torch.isfinite(loss):
                ids = ", ".join(t.question_id for t in chunk[:5])
                raise NumericError(
                    f"non-finite loss in epoch {epoch}, batch {batch_no} (questions {ids}...): "
                    f"pointwise={breakdown.pointwise.item()}, listwise={breakdown.listwise.item()}"
                )
            self.optimizer.zero_grad()
            loss.backward()
            self.optimizer.step()
            losses.append(loss.item())
        return float(np.mean(losses))

    def fit(self, train_threads: Sequence[QuestionThread], val_threads: Sequence[QuestionThread],
            log_path: Optional[Union[str, Path]] = None,
            monitor_threads: Optional[Sequence[QuestionThread]] = None,
            show_progress: bool = False) -> TrainingResult:
        """
        Train until the epoch budget or the patience runs out

        Args:
            train_threads: Training threads
            val_threads: Validation threads used for checkpoint selection
            log_path: Optional JSON-lines file receiving one record per epoch
            monitor_threads: Optional extra split whose MAP is logged each epoch
            show_progress: Show a tqdm progress bar over epochs

        Returns:
            TrainingResult holding the best-validation model
        """
        if not train_threads:
            raise ValueError("training set is empty")
        if not val_threads:
            self.logger.warning("No validation threads; selecting checkpoints on the training set")
            val_threads = train_threads

        config = self.config
        rng = np.random.default_rng(derive_seed(config.seed, "batch_order"))
        ranker = RankingService(self.model, self.vocab)
        result = TrainingResult(model=self.model, vocab=self.vocab)
        best_state = copy.deepcopy(self.model.state_dict())
        stale = 0

        self.logger.info(f"Training MUSE ranker:")
        self.logger.info(f" - Train threads: {len(train_threads)}")
        self.logger.info(f" - Validation threads: {len(val_threads)}")
        self.logger.info(f" - Loss: {config.loss_mode} (lambda={config.lambda_listwise}, eta={config.eta})")
        self.logger.info(f" - Relations: {', '.join(config.relations) or 'none'}")

        log_handle = None
        if log_path is not None:
            Path(log_path).parent.mkdir(parents=True, exist_ok=True)
            log_handle = Path(log_path).open("w", encoding="utf-8", newline="\n")
        try:
            for epoch in tqdm(range(1, config.epochs + 1), desc="Epochs", disable=not show_progress):
                train_loss = self.train_epoch(train_threads, epoch, rng)
                report = ranker.evaluate(val_threads)
                record = {"epoch": epoch, "train_loss": train_loss, "val_map": report.map,
                          "val_mrr": report.mrr}
                if monitor_threads:
                    record["monitor_map"] = ranker.evaluate(monitor_threads).map

                if report.map > result.best_val_map:
                    result.best_val_map = report.map
                    result.best_epoch = epoch
                    best_state = copy.deepcopy(self.model.state_dict())
                    stale = 0
                else:
                    stale += 1
                record["best_val_map"] = result.best_val_map
                result.log.append(record)
                if log_handle is not None:
                    log_handle.write(json.dumps(record, sort_keys=True) + "\n")
                    log_handle.flush()
                self.logger.info(f"Epoch {epoch}: loss {train_loss:.4f}, val MAP {report.map:.4f}, "
                                 f"val MRR {report.mrr:.4f}")
                if stale >= config.patience:
                    self.logger.info(f"Stopping after epoch {epoch} (no improvement for {stale} epochs)")
                    break
        finally:
            if log_handle is not None:
                log_handle.close()

        self.model.load_state_dict(best_state)
        self.logger.info(f"Best validation MAP {result.best_val_map:.4f} at epoch {result.best_epoch}")
        return result


def train(train_threads: Sequence[QuestionThread], val_threads: Sequence[QuestionThread],
          config: TrainingConfig, vocab: Vocabulary,
          embeddings_path: Optional[Union[str, Path]] = None,
          log_path: Optional[Union[str, Path]] = None,
          monitor_threads: Optional[Sequence[QuestionThread]] = None) -> TrainingResult:
    return Trainer(config, vocab, embeddings_path).fit(train_threads, val_threads, log_path, monitor_threads)


def vocabulary_for(train_threads: Sequence[QuestionThread], other_threads: Sequence[QuestionThread] = (),
                   embeddings_path: Optional[Union[str, Path]] = None) -> Vocabulary:
    """Training-split tokens plus other-split tokens covered by the pretrained vectors."""

    def texts(threads):
        for thread in threads:
            yield thread.question
            for answer in thread.answers:
                yield answer.text
            for snippet in thread.snippets:
                yield snippet.text

    pretrained = read_pretrained_words(embeddings_path) if embeddings_path else None
    return build_vocabulary(texts(train_threads), texts(other_threads), pretrained)
