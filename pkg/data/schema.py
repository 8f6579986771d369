import math
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def derive_label(pos_votes: int, neg_votes: int) -> int:
    """An answer is positive iff it has strictly more positive than negative votes."""
    if pos_votes < 0 or neg_votes < 0:
        raise ValueError(f"vote counts must be non-negative, got ({pos_votes}, {neg_votes})")
    return 1 if pos_votes > neg_votes else 0


class RawAnswer(BaseModel):
    """One user-written answer and its community votes"""

    model_config = ConfigDict(extra="ignore")

    text: str
    pos_votes: int = Field(ge=0)
    neg_votes: int = Field(ge=0)
    label: Optional[int] = None

    @field_validator("text")
    @classmethod
    def _non_empty(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("answer text is empty")
        return value

    @model_validator(mode="after")
    def _label_from_votes(self) -> "RawAnswer":
        expected = derive_label(self.pos_votes, self.neg_votes)
        if self.label is None:
            self.label = expected
        elif self.label != expected:
            raise ValueError(f"label {self.label} disagrees with votes ({self.pos_votes}, {self.neg_votes})")
        return self


class Snippet(BaseModel):
    """A sentence-level chunk of a review with its retrieval score"""

    model_config = ConfigDict(extra="ignore")

    text: str
    source_review_id: str
    bm25_score: float = 0.0

    @field_validator("bm25_score")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("bm25_score must be finite")
        return value


class Review(BaseModel):
    model_config = ConfigDict(extra="ignore")

    review_id: str
    product_id: str
    text: str


class QuestionThread(BaseModel):
    """A question, its candidate answers and the review snippets retrieved for it"""

    model_config = ConfigDict(extra="ignore")

    question_id: str
    product_id: str
    question: str
    answers: list[RawAnswer]
    snippets: list[Snippet] = Field(default_factory=list)
    snippets_padded: bool = False
    split: Optional[str] = None

    @field_validator("question")
    @classmethod
    def _question_text(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("question text is empty")
        return value

    @property
    def labels(self) -> list[int]:
        return [answer.label for answer in self.answers]

    @property
    def num_positive(self) -> int:
        return sum(self.labels)
