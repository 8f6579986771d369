"""
The MUSE answer ranker: textual features, relation-graph interaction features
and a one-hidden-layer prediction head.
"""

import logging
from typing import Callable, Optional

import torch
import torch.nn as nn

from core.config import TrainingConfig
from data.batching import ThreadBatch
from models.losses import LabelVector, LossBreakdown, PredictionSet, joint_objective
from models.relgraph import InteractionGCN, SemanticGraph, build_graph, interaction_features
from models.textenc import EncodedBatch, TextEncoder, pool_question

GraphHook = Callable[[SemanticGraph], SemanticGraph]


class PredictionHead(nn.Module):
    """MLP([x_a; h_L]) -> 2 scores per answer"""

    def __init__(self, input_dim: int, hidden_dim: int, dropout: float = 0.0):
        super().__init__()
        self.input_dim = input_dim
        self.hidden = nn.Linear(input_dim, hidden_dim)
        self.output = nn.Linear(hidden_dim, 2)
        self.dropout = nn.Dropout(dropout)
        self.reset_parameters()

    def reset_parameters(self) -> None:
        for linear in (self.hidden, self.output):
            nn.init.xavier_uniform_(linear.weight)
            nn.init.zeros_(linear.bias)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        if features.dim() != 2 or features.shape[1] != self.input_dim:
            raise ValueError(f"head expects (n, {self.input_dim}) input, got {tuple(features.shape)}")
        return self.output(self.dropout(torch.relu(self.hidden(features))))


def predict_scores(x_a: Optional[torch.Tensor], h_l: Optional[torch.Tensor], head: PredictionHead,
                   norm_p: float = 1.0) -> PredictionSet:
    """
    Score every answer of one question

    Args:
        x_a: Textual features (|A| x proj_dim), or None when that feature is disabled
        h_l: Interaction features (|A| x dim_L), or None when that feature is disabled
        head: Prediction MLP
        norm_p: Norm order for the listwise normalization

    Returns:
        PredictionSet
    """
    parts = [part for part in (x_a, h_l) if part is not None]
    if not parts:
        raise ValueError("no features to score")
    if len({part.shape[0] for part in parts}) != 1:
        raise ValueError(f"row counts differ: {[part.shape[0] for part in parts]}")
    return PredictionSet.from_scores(head(torch.cat(parts, dim=1)), norm_p)


class MuseRanker(nn.Module):
    """Full answer ranking model"""

    def __init__(self, vocab_size: int, config: TrainingConfig):
        super().__init__()
        self.config = config
        self.logger = logging.getLogger("MUSE-Model")
        self.encoder = TextEncoder(vocab_size, config)
        self.gcn = InteractionGCN(config.context_dim, config.gcn_dims) if config.use_interaction_feature else None
        self.head = PredictionHead(config.head_input_dim, config.mlp_hidden, config.dropout)

    def reset_parameters(self, embedding_matrix: Optional[torch.Tensor] = None) -> None:
        self.encoder.reset_parameters(embedding_matrix)
        if self.gcn is not None:
            for layer in self.gcn.layers:
                layer.reset_parameters()
        self.head.reset_parameters()

    def _rows(self, encoded: EncodedBatch, indices: tuple[int, ...]) -> EncodedBatch:
        index = torch.tensor(indices, dtype=torch.long, device=encoded.context.device)
        return EncodedBatch([encoded.token_ids[i] for i in indices],
                            encoded.context.index_select(0, index), encoded.mask.index_select(0, index))

    def build_graphs(self, batch: ThreadBatch) -> list[tuple[torch.Tensor, SemanticGraph]]:
        """Textual features and relation graph for every thread of the batch."""
        encoded = self.encoder.encode_context(batch.sequences)
        results = []
        for layout in batch.threads:
            question = encoded.select(layout.question_index)
            x_q = pool_question(question)
            answers = self._rows(encoded, layout.answer_indices)
            if self.config.use_answer_attention:
                x_a, _ = self.encoder.question_attend_answer(question, answers)
            else:
                x_a = self.encoder.max_pool_encode(answers)
            if not layout.snippet_indices:
                x_c = x_q.new_zeros((0, x_q.shape[0]))
            elif self.config.use_snippet_attention:
                x_c, _ = self.encoder.clip_rescale_encode(self._rows(encoded, layout.snippet_indices), x_q)
            else:
                x_c = self.encoder.max_pool_encode(self._rows(encoded, layout.snippet_indices))
            graph = build_graph(x_q, x_a, x_c, self.config.relations)
            results.append((x_a, graph))
        return results

    def forward(self, batch: ThreadBatch, graph_hook: Optional[GraphHook] = None) -> list[PredictionSet]:
        predictions = []
        for x_a, graph in self.build_graphs(batch):
            if graph_hook is not None:
                graph = graph_hook(graph)
            h_l = interaction_features(graph, self.gcn) if self.gcn is not None else None
            x_text = x_a if self.config.use_textual_feature else None
            predictions.append(predict_scores(x_text, h_l, self.head, self.config.norm_p))
        return predictions

    def joint_loss(self, batch: ThreadBatch) -> LossBreakdown:
        """Forward a batch and compute the configured training objective."""
        predictions = self(batch)
        labels = [LabelVector.from_labels(layout.labels, pred.scores)
                  for layout, pred in zip(batch.threads, predictions)]
        return joint_objective(predictions, labels, self.parameters(), self.config)
