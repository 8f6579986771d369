"""
Pointwise, listwise and joint ranking losses.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import torch
import torch.nn.functional as F

from core.config import TrainingConfig


@dataclass
class PredictionSet:
    """Raw 2-way scores S, their softmax S_hat and the normalized listwise vector y_hat"""

    scores: torch.Tensor  # (|A|, 2)
    probs: torch.Tensor  # (|A|, 2)
    listwise: torch.Tensor  # (|A|,)
    log_probs: torch.Tensor  # (|A|, 2)

    @property
    def positive_probs(self) -> torch.Tensor:
        return self.probs[:, 1]

    @classmethod
    def from_scores(cls, scores: torch.Tensor, norm_p: float = 1.0) -> "PredictionSet":
        log_probs = F.log_softmax(scores, dim=-1)
        log_positive = log_probs[:, 1]
        # positive / ||positive||_p, computed in log space
        if norm_p == 1.0:
            listwise = F.softmax(log_positive, dim=0)
        elif math.isinf(norm_p):
            listwise = torch.exp(log_positive - log_positive.max())
        else:
            log_norm = torch.logsumexp(norm_p * log_positive, dim=0) / norm_p
            listwise = torch.exp(log_positive - log_norm)
        return cls(scores=scores, probs=log_probs.exp(), listwise=listwise, log_probs=log_probs)


@dataclass
class LabelVector:
    """Binary answer labels and their smoothed, normalized listwise target"""

    y: torch.Tensor

    @classmethod
    def from_labels(cls, labels: Sequence[int], like: torch.Tensor) -> "LabelVector":
        return cls(torch.tensor(list(labels), dtype=like.dtype, device=like.device))

    @property
    def has_positive(self) -> bool:
        return bool(self.y.sum() > 0)

    def smoothed(self, epsilon: float = 1e-3) -> torch.Tensor:
        shifted = self.y + epsilon
        return shifted / shifted.sum()


def pointwise_loss(pred: PredictionSet, labels: LabelVector) -> torch.Tensor:
    """Mean cross-entropy of each answer's 2-way distribution against its label."""
    if pred.probs.shape[0] != labels.y.shape[0]:
        raise ValueError(f"{pred.probs.shape[0]} predictions for {labels.y.shape[0]} labels")
    target = labels.y.long().unsqueeze(1)
    return -pred.log_probs.gather(1, target).squeeze(1).mean()


def listwise_loss(pred: PredictionSet, labels: LabelVector, epsilon: float = 1e-3) -> torch.Tensor:
    """KL(y_hat || y') / |A|; zero for threads without a positive answer."""
    if pred.listwise.shape[0] != labels.y.shape[0]:
        raise ValueError(f"{pred.listwise.shape[0]} predictions for {labels.y.shape[0]} labels")
    if not labels.has_positive:
        return pred.listwise.new_zeros(())
    target = labels.smoothed(epsilon)
    y_hat = pred.listwise
    kl = torch.xlogy(y_hat, y_hat) - y_hat * torch.log(target)
    return kl.sum() / y_hat.shape[0]


def parameter_penalty(parameters: Iterable[torch.Tensor], squared: bool = True) -> torch.Tensor:
    """Squared L2 norm of all trainable parameters (or the plain norm)."""
    total = None
    for param in parameters:
        if not param.requires_grad:
            continue
        term = param.pow(2).sum()
        total = term if total is None else total + term
    if total is None:
        return torch.zeros(())
    return total if squared else torch.sqrt(total)


@dataclass
class LossBreakdown:
    total: torch.Tensor
    pointwise: torch.Tensor
    listwise: torch.Tensor
    penalty: torch.Tensor


def joint_objective(predictions: Sequence[PredictionSet], labels: Sequence[LabelVector],
                    parameters: Iterable[torch.Tensor], config: TrainingConfig) -> LossBreakdown:
    """
    Batch objective: mean(L_p) + lambda * mean(L_l) + eta * ||Theta||^2

    Args:
        predictions: One PredictionSet per question in the batch
        labels: Matching label vectors
        parameters: Trainable parameters Theta
        config: Supplies loss_mode, lambda_listwise, eta, label_smoothing and regularizer

    Returns:
        LossBreakdown with the total and its components
    """
    if not predictions:
        raise ValueError("empty batch")
    if len(predictions) != len(labels):
        raise ValueError(f"{len(predictions)} predictions for {len(labels)} label vectors")

    point = torch.stack([pointwise_loss(p, y) for p, y in zip(predictions, labels)]).mean()
    listw = torch.stack([listwise_loss(p, y, config.label_smoothing)
                         for p, y in zip(predictions, labels)]).mean()
    penalty = parameter_penalty(parameters, squared=config.regularizer == "squared")

    # terms with a zero weight are left out of the graph entirely
    if config.loss_mode == "pointwise":
        total = point
    elif config.loss_mode == "listwise":
        total = listw
    else:
        total = point
        if config.lambda_listwise != 0:
            total = total + config.lambda_listwise * listw
    if config.eta != 0:
        total = total + config.eta * penalty.to(total.dtype)
    return LossBreakdown(total=total, pointwise=point.detach(), listwise=listw.detach(),
                         penalty=penalty.detach())
