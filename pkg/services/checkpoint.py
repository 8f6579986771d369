import logging
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import torch

from core.config import TrainingConfig
from core.errors import CheckpointMismatchError
from models.muse import MuseRanker
from models.vocab import Vocabulary

logger = logging.getLogger("MUSE-Checkpoint")

FORMAT_VERSION = 1


def save_checkpoint(path: Union[str, Path], model: MuseRanker, vocab: Vocabulary,
                    extra: Optional[dict] = None) -> None:
    """Store parameters (keyed by module-qualified names), vocabulary and config."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": FORMAT_VERSION,
        "config": model.config.model_dump(mode="json", include=set(TrainingConfig.model_fields)),
        "vocab": list(vocab.itos),
        "state_dict": {name: tensor.detach().cpu() for name, tensor in model.state_dict().items()},
        "extra": extra or {},
    }
    torch.save(payload, path)
    logger.info(f"Saved checkpoint to {path}")


def _check_config(stored: TrainingConfig, expected: Mapping[str, Any]) -> None:
    for key in TrainingConfig.SHAPE_KEYS:
        if key in expected and getattr(stored, key) != expected[key]:
            raise CheckpointMismatchError(key, expected[key], getattr(stored, key))


def load_checkpoint(path: Union[str, Path], expected: Optional[Mapping[str, Any]] = None,
                    overrides: Optional[dict] = None) -> tuple[MuseRanker, Vocabulary, dict]:
    """
    Rebuild a model from a checkpoint

    Args:
        path: Checkpoint written by save_checkpoint
        expected: Settings the caller asked for; shape-deciding keys among them must agree
        overrides: Non-shape settings to apply on top of the stored config (e.g. relations)

    Returns:
        (model in eval mode, vocabulary, extra metadata)
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"No such checkpoint: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    for key in ("config", "vocab", "state_dict"):
        if key not in payload:
            raise CheckpointMismatchError(key, "present", "missing")

    stored = TrainingConfig(**payload["config"])
    if expected is not None:
        _check_config(stored, expected)
    if overrides:
        stored = stored.with_updates(overrides)

    vocab = Vocabulary.from_tokens(payload["vocab"])
    model = MuseRanker(len(vocab), stored)
    own = model.state_dict()
    state = payload["state_dict"]
    for name, tensor in own.items():
        if name not in state:
            raise CheckpointMismatchError(name, tuple(tensor.shape), "missing")
        if tuple(state[name].shape) != tuple(tensor.shape):
            raise CheckpointMismatchError(name, tuple(tensor.shape), tuple(state[name].shape))
    unexpected = sorted(set(state) - set(own))
    if unexpected:
        raise CheckpointMismatchError(unexpected[0], "absent", "present")
    model.load_state_dict(state)
    model.eval()
    logger.info(f"Loaded checkpoint from {path} (vocabulary {len(vocab)})")
    return model, vocab, payload.get("extra", {})
