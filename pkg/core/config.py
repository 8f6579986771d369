import os
from pathlib import Path
from typing import ClassVar, Literal, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from core.errors import ConfigError

# Load environment variables from .env file if it exists
load_dotenv()

RELATIONS = ("rel", "sim", "ent")


class Config:
    """Process-level configuration for the MUSE answer ranker"""

    # Logging configuration
    LOG_LEVEL = os.environ.get("MUSE_LOG_LEVEL", "INFO")

    # Randomness
    SEED = int(os.environ.get("MUSE_SEED", 2020))

    # Default location of the pretrained 300d vectors (GloVe 6B format)
    EMBEDDINGS_PATH = os.environ.get("MUSE_EMBEDDINGS", None)


class TrainingConfig(BaseModel):
    """Model and optimisation hyperparameters.

    Defaults: embeddings 300d, 100 hidden units per
    LSTM direction, W_a projecting to 200, two GCN layers 150 and 100, lambda 2,
    eta 0.001, batches of 50 questions, top-5 snippets and k = 8.
    """

    model_config = ConfigDict(extra="forbid")

    # Text encoding
    embed_dim: int = 300
    hidden_size: int = 100  # per direction, d_h = 2 * hidden_size
    proj_dim: int = 200
    max_seq_len: int = 100
    clip_k: int = 8
    attention_bias: Literal["scalar", "vector"] = "scalar"
    dropout: float = 0.0
    # False replaces the attention reader with a max-pool over the context rows
    use_answer_attention: bool = True
    use_snippet_attention: bool = True

    # Relational GCN
    gcn_dims: tuple[int, ...] = (150, 100)
    relations: tuple[str, ...] = RELATIONS

    # Prediction head
    mlp_hidden: int = 100
    use_textual_feature: bool = True
    use_interaction_feature: bool = True

    # Loss
    loss_mode: Literal["pointwise", "listwise", "joint"] = "joint"
    lambda_listwise: float = 2.0
    eta: float = 0.001
    norm_p: float = 1.0
    label_smoothing: float = 1e-3
    regularizer: Literal["squared", "norm"] = "squared"

    # Optimisation
    batch_size: int = 50
    learning_rate: float = 0.001
    epochs: int = 30
    patience: int = 10
    seed: int = Config.SEED
    num_snippets: int = 5

    @field_validator("lambda_listwise", "eta", "dropout", "label_smoothing")
    @classmethod
    def _non_negative(cls, value: float) -> float:
        if value < 0:
            raise ValueError("must be >= 0")
        return value

    @field_validator("batch_size", "clip_k", "embed_dim", "hidden_size", "proj_dim",
                     "mlp_hidden", "epochs", "max_seq_len", "num_snippets")
    @classmethod
    def _positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be >= 1")
        return value

    @field_validator("norm_p")
    @classmethod
    def _norm_order(cls, value: float) -> float:
        if value < 1:
            raise ValueError("norm order must be >= 1")
        return value

    @field_validator("relations")
    @classmethod
    def _known_relations(cls, value: tuple[str, ...]) -> tuple[str, ...]:
        unknown = [r for r in value if r not in RELATIONS]
        if unknown:
            raise ValueError(f"unknown relation(s): {unknown}")
        return tuple(r for r in RELATIONS if r in value)

    @model_validator(mode="after")
    def _check_dims(self) -> "TrainingConfig":
        # x_a and x_q share the node feature space of the graph
        if self.proj_dim != 2 * self.hidden_size:
            raise ValueError(
                f"proj_dim ({self.proj_dim}) must equal 2 * hidden_size ({2 * self.hidden_size})"
            )
        if not self.gcn_dims:
            raise ValueError("gcn_dims must name at least one layer")
        if not (self.use_textual_feature or self.use_interaction_feature):
            raise ValueError("at least one of the textual and interaction features is required")
        return self

    @property
    def context_dim(self) -> int:
        return 2 * self.hidden_size

    @property
    def head_input_dim(self) -> int:
        dim = 0
        if self.use_textual_feature:
            dim += self.proj_dim
        if self.use_interaction_feature:
            dim += self.gcn_dims[-1]
        return dim

    def with_updates(self, updates: dict) -> "TrainingConfig":
        """Copy with some fields replaced; the result is validated like a fresh config."""
        try:
            return type(self).model_validate({**self.model_dump(), **updates})
        except ValidationError as e:
            raise _config_error(e) from e

    # Keys that decide parameter shapes; a checkpoint must agree on all of them
    SHAPE_KEYS: ClassVar[tuple[str, ...]] = (
        "embed_dim", "hidden_size", "proj_dim", "gcn_dims", "mlp_hidden",
        "attention_bias", "max_seq_len", "use_textual_feature", "use_interaction_feature",
        "use_answer_attention", "use_snippet_attention",
    )


class RunConfig(TrainingConfig):
    """Training configuration plus the file paths a command works with."""

    qa_path: Optional[Path] = None
    review_path: Optional[Path] = None
    prepared_path: Optional[Path] = None
    embeddings_path: Optional[Path] = None
    checkpoint_path: Optional[Path] = None
    report_path: Optional[Path] = None
    log_path: Optional[Path] = None
    test_fraction: float = 0.1
    val_fraction: float = 0.1
    k1: float = 1.2
    b: float = 0.75

    def training_config(self) -> TrainingConfig:
        fields = {name: getattr(self, name) for name in TrainingConfig.model_fields}
        return TrainingConfig(**fields)


def _config_error(error: ValidationError) -> ConfigError:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"]) or "config"
    return ConfigError(f"{location}: {first['msg']}")


def _coerce(key: str, raw: str):
    """Turn a flat config-file string into the value pydantic expects."""
    if key in ("gcn_dims", "relations"):
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    return raw


def load_run_config(config_file: Optional[Path] = None, overrides: Optional[dict] = None) -> RunConfig:
    """
    Build a RunConfig from defaults, an optional key=value file and CLI overrides

    Args:
        config_file: Path to a flat key=value config file
        overrides: Values given on the command line (None values are ignored)

    Returns:
        Validated RunConfig
    """
    values = {}
    if config_file is not None:
        if not Path(config_file).exists():
            raise ConfigError(f"config file not found: {config_file}")
        for key, raw in dotenv_values(config_file).items():
            if raw is None:
                raise ConfigError(f"{config_file}: key '{key}' has no value")
            values[key] = _coerce(key, raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    try:
        return RunConfig(**values)
    except ValidationError as e:
        raise _config_error(e) from e
