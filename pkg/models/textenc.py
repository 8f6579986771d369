"""
Textual feature modeling: context encoding with a bidirectional LSTM,
question-attended answer encoding and clip-rescale snippet encoding.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from core.config import TrainingConfig
from core.errors import NumericError
from models.vocab import PAD_ID


@dataclass
class EncodedSequence:
    """Token ids of one text and its context matrix (length x d_h)"""

    token_ids: list[int]
    context: torch.Tensor

    def __len__(self) -> int:
        return self.context.shape[0]


@dataclass
class EncodedBatch:
    """Padded batch of encoded texts; mask is True at real token positions"""

    token_ids: list[list[int]]
    context: torch.Tensor  # (n, T, d_h)
    mask: torch.Tensor  # (n, T) bool

    def __len__(self) -> int:
        return self.context.shape[0]

    @property
    def lengths(self) -> torch.Tensor:
        return self.mask.sum(dim=1)

    def select(self, index: int) -> EncodedSequence:
        length = int(self.mask[index].sum())
        return EncodedSequence(self.token_ids[index], self.context[index, :length])

    @classmethod
    def stack(cls, sequences: Sequence[EncodedSequence]) -> "EncodedBatch":
        """Pad single sequences into a batch."""
        if not sequences:
            raise ValueError("cannot stack an empty list of sequences")
        max_len = max(len(seq) for seq in sequences)
        dim = sequences[0].context.shape[1]
        ref = sequences[0].context
        context = ref.new_zeros((len(sequences), max_len, dim))
        mask = torch.zeros((len(sequences), max_len), dtype=torch.bool, device=ref.device)
        for i, seq in enumerate(sequences):
            context[i, :len(seq)] = seq.context
            mask[i, :len(seq)] = True
        return cls([seq.token_ids for seq in sequences], context, mask)


@dataclass
class AttentionState:
    """Intermediate attention values kept for inspection and tests"""

    scores: torch.Tensor  # alpha (n, |a|, |q|) or clip logits (n, |c|)
    weights: torch.Tensor  # alpha' or beta
    attended: Optional[torch.Tensor] = None  # o^a (n, |a|, d_h)
    clip_mask: Optional[torch.Tensor] = None  # m (n, |c|)
    clipped: Optional[torch.Tensor] = None  # beta' (n, |c|)


def pool_question(question: EncodedSequence) -> torch.Tensor:
    """Coordinate-wise max over the positions of the question."""
    if len(question) == 0:
        raise ValueError("cannot pool an empty sequence")
    return question.context.max(dim=0).values


def masked_max_pool(values: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Max over dim 1 of (n, T, d) taking only real positions into account."""
    return values.masked_fill(~mask.unsqueeze(-1), float("-inf")).amax(dim=1)


def clip_rescale(beta: torch.Tensor, mask: torch.Tensor, k: int) -> tuple[torch.Tensor, torch.Tensor]:
    """
    Keep the top-k attention weights of each row and rescale them to sum to 1

    Args:
        beta: Attention weights (n, T), zero at padding
        mask: Real positions (n, T)
        k: Number of weights kept per row (ties go to the lowest index)

    Returns:
        (binary clip mask m, rescaled weights beta')
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    keep = torch.clamp(mask.sum(dim=1), max=k)
    # padding sorts last; stable sort keeps lower indices first among ties
    order = torch.sort(beta.masked_fill(~mask, -1.0), dim=1, descending=True, stable=True).indices
    positions = torch.arange(beta.shape[1], device=beta.device).expand_as(order)
    ranks = torch.empty_like(order).scatter_(1, order, positions)
    clip_mask = (ranks < keep.unsqueeze(1)) & mask
    kept = beta * clip_mask
    clipped = kept / kept.abs().sum(dim=1, keepdim=True).clamp_min(torch.finfo(beta.dtype).tiny)
    return clip_mask, clipped


class TextEncoder(nn.Module):
    """Embedding lookup, Bi-LSTM context encoder and the two attention readers"""

    def __init__(self, vocab_size: int, config: TrainingConfig):
        super().__init__()
        self.config = config
        d_h = config.context_dim
        self.embedding = nn.Embedding(vocab_size, config.embed_dim, padding_idx=PAD_ID)
        self.lstm = nn.LSTM(config.embed_dim, config.hidden_size, batch_first=True, bidirectional=True)
        self.dropout = nn.Dropout(config.dropout)

        # question-attended answer encoding
        if config.use_answer_attention:
            bias_size = 1 if config.attention_bias == "scalar" else config.max_seq_len
            self.b_a = nn.Parameter(torch.zeros(bias_size))
            self.answer_proj = nn.Linear(2 * d_h, config.proj_dim)  # W_a, b_aa
        else:
            self.register_parameter("b_a", None)
            self.answer_proj = None

        # clip-rescale snippet encoding
        if config.use_snippet_attention:
            self.W_c = nn.Parameter(torch.empty(d_h, d_h))
            self.b_c = nn.Parameter(torch.zeros(1))
        else:
            self.register_parameter("W_c", None)
            self.register_parameter("b_c", None)

        self.reset_parameters()

    def reset_parameters(self, embedding_matrix: Optional[torch.Tensor] = None) -> None:
        """Xavier-uniform weight matrices, zero biases, embeddings from the given table."""
        for name, param in self.named_parameters():
            if name.startswith("embedding"):
                continue
            if param.dim() >= 2:
                nn.init.xavier_uniform_(param)
            else:
                nn.init.zeros_(param)
        with torch.no_grad():
            if embedding_matrix is not None:
                if tuple(embedding_matrix.shape) != tuple(self.embedding.weight.shape):
                    raise ValueError(
                        f"embedding matrix shape {tuple(embedding_matrix.shape)} does not match "
                        f"{tuple(self.embedding.weight.shape)}"
                    )
                self.embedding.weight.copy_(embedding_matrix)
            else:
                nn.init.uniform_(self.embedding.weight, -0.05, 0.05)
            self.embedding.weight[PAD_ID].zero_()

    def encode_context(self, id_lists: Sequence[Sequence[int]]) -> EncodedBatch:
        """Run the Bi-LSTM over a batch of id lists; row t is [forward_t; backward_t]."""
        if not id_lists:
            raise ValueError("no sequences to encode")
        ids_clean = [[i for i in ids if i != PAD_ID] for ids in id_lists]
        lengths = [len(ids) for ids in ids_clean]
        if min(lengths) == 0:
            raise ValueError("cannot encode a zero-length sequence")
        device = self.embedding.weight.device
        max_len = max(lengths)
        padded = torch.full((len(ids_clean), max_len), PAD_ID, dtype=torch.long, device=device)
        for row, ids in enumerate(ids_clean):
            padded[row, :len(ids)] = torch.tensor(ids, dtype=torch.long, device=device)
        mask = padded != PAD_ID

        embedded = self.dropout(self.embedding(padded))
        packed = pack_padded_sequence(embedded, torch.tensor(lengths), batch_first=True,
                                      enforce_sorted=False)
        outputs, _ = self.lstm(packed)
        context, _ = pad_packed_sequence(outputs, batch_first=True, total_length=max_len)
        return EncodedBatch([list(ids) for ids in ids_clean], context, mask)

    def question_attend_answer(self, question: EncodedSequence,
                               answers: EncodedBatch) -> tuple[torch.Tensor, AttentionState]:
        """
        Word-to-word attention from each answer word over the question words

        Args:
            question: Encoded question (|q| x d_h)
            answers: Encoded answers (n x |a| x d_h)

        Returns:
            (x_a of shape (n, proj_dim), attention state)
        """
        if self.answer_proj is None:
            raise RuntimeError("answer attention is disabled for this encoder")
        if len(question) == 0 or len(answers) == 0:
            raise ValueError("question and answers must be non-empty")
        v_q = question.context
        bias = self.b_a if self.b_a.numel() == 1 else self.b_a[:v_q.shape[0]]
        scores = torch.tanh(torch.matmul(answers.context, v_q.transpose(0, 1)) + bias)
        weights = F.softmax(scores, dim=-1)
        attended = torch.matmul(weights, v_q)
        enriched = torch.tanh(self.answer_proj(torch.cat([answers.context, attended], dim=-1)))
        x_a = masked_max_pool(enriched, answers.mask)
        if not torch.isfinite(x_a).all():
            raise NumericError("non-finite values in question-attended answer encoding")
        return x_a, AttentionState(scores=scores, weights=weights, attended=attended)

    def clip_rescale_encode(self, snippets: EncodedBatch, x_q: torch.Tensor,
                            k: Optional[int] = None) -> tuple[torch.Tensor, AttentionState]:
        """
        Question-guided attention over snippet words, clipped to the top k and rescaled

        Args:
            snippets: Encoded snippets (n x |c| x d_h)
            x_q: Pooled question vector (d_h)
            k: Words kept per snippet (defaults to config.clip_k)

        Returns:
            (x_c of shape (n, d_h), attention state)
        """
        if self.W_c is None:
            raise RuntimeError("snippet attention is disabled for this encoder")
        k = self.config.clip_k if k is None else k
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        logits = torch.matmul(snippets.context, torch.matmul(self.W_c, x_q)) + self.b_c
        beta = F.softmax(logits.masked_fill(~snippets.mask, float("-inf")), dim=-1)
        clip_mask, clipped = clip_rescale(beta, snippets.mask, k)
        x_c = torch.sum(clipped.unsqueeze(-1) * snippets.context, dim=1)
        return x_c, AttentionState(scores=logits, weights=beta, clip_mask=clip_mask, clipped=clipped)

    def max_pool_encode(self, texts: EncodedBatch) -> torch.Tensor:
        """Attention-free reading: coordinate-wise max over the real positions of each text."""
        if len(texts) == 0:
            raise ValueError("no texts to pool")
        return masked_max_pool(texts.context, texts.mask)
