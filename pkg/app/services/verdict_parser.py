"""
Verdict Parser Service
Turns free-form LLM answers into validated verdicts or a ParseError.
"""

import json
import math
import re
from typing import Any, Dict, Optional

from ..errors import ParseError
from ..schemas.verdicts import ACTION_SCORES, REWARD_SCORES, BiasVerdict, LLMVerdictD, Verdict

NUMBER = r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?"
SCORE_1_PATTERN = re.compile(r'llm_score_1"?\s*[=:]\s*"?(' + NUMBER + ')', re.IGNORECASE)
SCORE_2_PATTERN = re.compile(r'llm_score_2"?\s*[=:]\s*"?(' + NUMBER + ')', re.IGNORECASE)
LLM_SCORE_PATTERN = re.compile(r'llm_score(?!_)"?\s*[=:]\s*"?(' + NUMBER + ')', re.IGNORECASE)
JUSTIFICATION_PATTERN = re.compile(r'justification"?\s*[:=]\s*"?([^\n"]*)', re.IGNORECASE)

CORRECT_PATTERN = re.compile(r"\bcorrect score allotted", re.IGNORECASE)
BIASED_PATTERN = re.compile(r"\bbiased score allotted", re.IGNORECASE)


def _first_object_with(text: str, *keys: str) -> Optional[Dict[str, Any]]:
    """First JSON object in the text that carries all the given keys (case-insensitive)"""
    decoder = json.JSONDecoder()
    start = text.find('{')
    while start != -1:
        try:
            value, _ = decoder.raw_decode(text, start)
        except ValueError:
            value = None
        if isinstance(value, dict):
            lowered = {str(k).lower(): v for k, v in value.items()}
            if all(key in lowered for key in keys):
                return lowered
        start = text.find('{', start + 1)
    return None


def _as_int_score(value: Any, allowed, name: str, raw_text: str) -> int:
    try:
        number = float(str(value).strip())
    except ValueError:
        raise ParseError(f"{name} is not a number: {value!r}", raw_text)
    if not number.is_integer() or int(number) not in allowed:
        raise ParseError(f"{name} must be one of {allowed}, got {value!r}", raw_text)
    return int(number)


def _justification(text: str) -> str:
    match = JUSTIFICATION_PATTERN.search(text)
    return match.group(1).strip() if match else ""


def parse_verdict_d(raw_text: str) -> LLMVerdictD:
    """
    Parse a direct-feedback answer.

    Accepts a JSON object with llm_score_1/llm_score_2 or the
    `llm_score_1 = +2` key-value lines.

    Raises:
        ParseError: scores missing or outside their domains (carries the raw text)
    """
    try:
        text = str(raw_text)
        found = _first_object_with(text, 'llm_score_1', 'llm_score_2')
        if found is not None:
            justification = found.get('justification', "")
            return LLMVerdictD(
                llm_score_1=_as_int_score(found['llm_score_1'], ACTION_SCORES, 'llm_score_1', text),
                llm_score_2=_as_int_score(found['llm_score_2'], REWARD_SCORES, 'llm_score_2', text),
                justification=justification if isinstance(justification, str) else json.dumps(justification),
            )
        first = SCORE_1_PATTERN.search(text)
        second = SCORE_2_PATTERN.search(text)
        if first is None or second is None:
            raise ParseError("answer carries no llm_score_1 / llm_score_2", text)
        return LLMVerdictD(
            llm_score_1=_as_int_score(first.group(1), ACTION_SCORES, 'llm_score_1', text),
            llm_score_2=_as_int_score(second.group(1), REWARD_SCORES, 'llm_score_2', text),
            justification=_justification(text),
        )
    except ParseError:
        raise
    except Exception as e:
        raise ParseError(f"unparseable answer: {e}", str(raw_text))


def parse_verdict_hfbf(raw_text: str, submitted_adjusted_score: float) -> BiasVerdict:
    """
    Parse a bias-flagging answer.

    The earliest verdict phrase wins; "Incorrect" and "Unbiased" are not
    verdict phrases. A Correct verdict keeps the submitted
    score whatever the answer echoes; a Biased verdict needs an llm_score.

    Raises:
        ParseError: no verdict phrase, or Biased without a finite llm_score
    """
    try:
        text = str(raw_text)
        correct = CORRECT_PATTERN.search(text)
        biased = BIASED_PATTERN.search(text)
        correct_at = correct.start() if correct else -1
        biased_at = biased.start() if biased else -1
        if correct_at == -1 and biased_at == -1:
            raise ParseError("answer carries no verdict phrase", text)
        if biased_at != -1 and (correct_at == -1 or biased_at < correct_at):
            match = LLM_SCORE_PATTERN.search(text, biased_at)
            if match is None:
                match = LLM_SCORE_PATTERN.search(text)
            if match is None:
                raise ParseError("Biased verdict without an llm_score", text)
            score = float(match.group(1))
            if not math.isfinite(score):
                raise ParseError(f"llm_score must be finite, got {match.group(1)}", text)
            return BiasVerdict(Verdict.BIASED, score, _justification(text))
        return BiasVerdict(Verdict.CORRECT, float(submitted_adjusted_score), _justification(text))
    except ParseError:
        raise
    except Exception as e:
        raise ParseError(f"unparseable answer: {e}", str(raw_text))
