"""
Verdict Schema
Parsed LLM answers for direct scoring and bias flagging
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict

ACTION_SCORES = (-2, 0, 2)
REWARD_SCORES = (-1, 1)


class Verdict(str, Enum):
    """Bias flagging outcome"""
    CORRECT = "Correct"
    BIASED = "Biased"


@dataclass(frozen=True)
class LLMVerdictD:
    """
    Direct-feedback verdict

    Attributes:
        llm_score_1: Action effectiveness in {-2, 0, +2}
        llm_score_2: Reward appropriateness in {-1, +1}
        justification: Free-text reasoning, verbatim
    """
    llm_score_1: int
    llm_score_2: int
    justification: str = ""

    def __post_init__(self):
        if self.llm_score_1 not in ACTION_SCORES:
            raise ValueError(f"llm_score_1 must be one of {ACTION_SCORES}, got {self.llm_score_1}")
        if self.llm_score_2 not in REWARD_SCORES:
            raise ValueError(f"llm_score_2 must be one of {REWARD_SCORES}, got {self.llm_score_2}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'llm_score_1': self.llm_score_1,
            'llm_score_2': self.llm_score_2,
            'justification': self.justification,
        }


@dataclass(frozen=True)
class BiasVerdict:
    """
    Bias-flagging verdict

    Attributes:
        verdict: Correct or Biased
        llm_score: Submitted score when Correct, suggested correction when Biased
        justification: Free-text reasoning, verbatim
    """
    verdict: Verdict
    llm_score: float
    justification: str = ""

    @property
    def is_biased(self) -> bool:
        return self.verdict == Verdict.BIASED

    def to_dict(self) -> Dict[str, Any]:
        return {
            'verdict': self.verdict.value,
            'llm_score': self.llm_score,
            'justification': self.justification,
        }
