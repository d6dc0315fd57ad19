"""
Feedback Provider Service
Remote chat-completions client and the deterministic rule-backed mock oracle.
"""

import json
import logging
import os
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import httpx
from tenacity import Retrying, retry_if_exception, stop_after_attempt, wait_exponential

from ..envs.highway import scenario_features
from ..errors import ConfigurationError, ProviderError
from ..logging_config import kv
from ..schemas.experiment import LLMConfig, ProviderKind
from ..schemas.feedback import ShapingWeights, StyleCoefficients, coefficients_for
from ..schemas.trajectory import Profile, Transition
from .feedback_rules import hf_d_score, reacher_rule_score
from .prompts import SYSTEM_PREAMBLE, PromptKind

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = {408, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class FeedbackRequest:
    """
    One per-step evaluation request

    Attributes:
        prompt: Rendered prompt text
        kind: Direct feedback or bias flagging
        window: Recent transitions of the episode, ending at the evaluated step
        env_id: Environment family of the step
        adjusted_score: Human score under review (bias flagging only)
    """
    prompt: str
    kind: PromptKind
    window: Tuple[Transition, ...]
    env_id: str = "highway"
    adjusted_score: Optional[float] = None

    @property
    def transition(self) -> Transition:
        return self.window[-1]


class FeedbackProvider(ABC):
    """Anything that answers a prompt with raw text"""

    name = "provider"

    @abstractmethod
    def evaluate_step(self, request: FeedbackRequest) -> str:
        """Return the raw answer text for one request."""

    def close(self) -> None:
        pass


class MockOracle(FeedbackProvider):
    """
    Deterministic stand-in built from a rule profile (IDEAL by default).

    Direct feedback: llm_score_1 is the sign of the rule score with a dead
    band of +-0.5; llm_score_2 is +1 when the reward sign agrees with the
    collision flag (negative exactly on collisions). Bias flagging: Biased
    when |adjusted - rule score| > bias_tolerance, corrected to the rule score.
    """

    name = "mock"

    def __init__(
        self,
        profile=Profile.IDEAL,
        bias_tolerance: float = 0.5,
        weights: ShapingWeights = ShapingWeights(),
        dt: float = 1.0,
        v_thresh: Sequence[float] = (20.0, 30.0),
    ):
        self.coefficients: StyleCoefficients = coefficients_for(profile)
        self.bias_tolerance = bias_tolerance
        self.weights = weights
        self.dt = dt
        self.v_thresh = tuple(v_thresh)

    def reference_score(self, request: FeedbackRequest) -> float:
        """Rule score of the evaluated step"""
        if request.env_id == "highway":
            features = scenario_features(request.window, self.dt, self.v_thresh)
            return hf_d_score(features, self.coefficients, self.weights)
        return reacher_rule_score(request.transition, self.coefficients)

    def evaluate_step(self, request: FeedbackRequest) -> str:
        zeta = self.reference_score(request)
        if request.kind == PromptKind.BIAS_FLAGGING:
            adjusted = float(request.adjusted_score)
            if abs(adjusted - zeta) > self.bias_tolerance:
                return json.dumps({
                    'verdict': "Biased score allotted",
                    'llm_score': zeta,
                    'justification': f"rule score {zeta!r} differs from adjusted score {adjusted!r}",
                })
            return json.dumps({
                'verdict': "Correct score allotted",
                'llm_score': adjusted,
                'justification': "adjusted score agrees with the reference rule",
            })

        step = request.transition
        if zeta > 0.5:
            action_score = 2
        elif zeta < -0.5:
            action_score = -2
        else:
            action_score = 0
        consistent = step.reward < 0 if step.collision_flag else step.reward >= 0
        return json.dumps({
            'justification': f"reference rule score {zeta!r}",
            'llm_score_1': action_score,
            'llm_score_2': 1 if consistent else -1,
        })


def _is_retryable(error: BaseException) -> bool:
    if isinstance(error, httpx.HTTPStatusError):
        return error.response.status_code in RETRYABLE_STATUS
    return isinstance(error, httpx.TransportError)


class RemoteLLM(FeedbackProvider):
    """
    OpenAI-compatible chat-completions client.

    Transport failures and retryable statuses are retried at most
    `max_retries` times; anything else surfaces as ProviderError.
    Every rendered prompt is kept with its answer in `exchanges` (answer
    None when the request failed).
    """

    name = "remote"

    def __init__(
        self,
        base_url: str,
        api_key: str,
        model: str,
        temperature: float = 0.0,
        timeout: float = 60.0,
        max_retries: int = 2,
        transport: Optional[httpx.BaseTransport] = None,
        retry_wait: float = 0.5,
    ):
        self.url = base_url.rstrip('/') + "/chat/completions"
        self.model = model
        self.temperature = temperature
        self.max_retries = max_retries
        self.retry_wait = retry_wait
        self._client = httpx.Client(
            timeout=timeout,
            transport=transport,
            headers={'Authorization': f"Bearer {api_key}", 'Content-Type': "application/json"},
        )
        self.exchanges: List[Dict[str, Any]] = []
        self._lock = threading.Lock()

    @classmethod
    def from_env(cls, config: LLMConfig, transport: Optional[httpx.BaseTransport] = None) -> 'RemoteLLM':
        """Build from LLM_API_BASE / LLM_API_KEY and the llm config section"""
        base_url = os.environ.get('LLM_API_BASE')
        api_key = os.environ.get('LLM_API_KEY')
        if not base_url or not api_key:
            raise ConfigurationError("Remote LLM provider needs LLM_API_BASE and LLM_API_KEY")
        return cls(base_url, api_key, config.model, config.temperature, config.timeout,
                   config.max_retries, transport)

    def _log_retry(self, retry_state) -> None:
        logger.warning(kv("provider retry", attempt=retry_state.attempt_number,
                          error=repr(retry_state.outcome.exception())))

    def _post(self, body: dict) -> str:
        response = self._client.post(self.url, json=body)
        response.raise_for_status()
        return response.json()['choices'][0]['message']['content']

    def evaluate_step(self, request: FeedbackRequest) -> str:
        body = {
            'model': self.model,
            'messages': [
                {'role': 'system', 'content': SYSTEM_PREAMBLE},
                {'role': 'user', 'content': request.prompt},
            ],
            'temperature': self.temperature,
        }
        retrying = Retrying(
            stop=stop_after_attempt(self.max_retries + 1),
            wait=wait_exponential(multiplier=self.retry_wait, max=8),
            retry=retry_if_exception(_is_retryable),
            before_sleep=self._log_retry,
            reraise=True,
        )
        try:
            answer = retrying(self._post, body)
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as e:
            self._record(request, None)
            raise ProviderError(f"chat completion failed: {e!r}")
        self._record(request, answer)
        return answer

    def _record(self, request: FeedbackRequest, answer: Optional[str]) -> None:
        step = request.transition
        with self._lock:
            self.exchanges.append({
                'kind': request.kind.value,
                'env_id': request.env_id,
                'episode_id': step.episode_id,
                't': step.t,
                'prompt': request.prompt,
                'response': answer,
            })

    def save_exchanges(self, path: str) -> str:
        """
        Write the prompt log as JSONL ordered by (episode_id, t).

        Re-asks of one step keep the order they were sent in.
        """
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with self._lock:
            records = sorted(self.exchanges, key=lambda r: (r['episode_id'], r['t']))
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            for record in records:
                f.write(json.dumps(record, sort_keys=True) + "\n")
        logger.info(kv("prompts saved", path=path, exchanges=len(records)))
        return path

    def close(self) -> None:
        self._client.close()


def build_provider(
    config: LLMConfig,
    weights: ShapingWeights = ShapingWeights(),
    dt: float = 1.0,
    v_thresh: Sequence[float] = (20.0, 30.0),
    transport: Optional[httpx.BaseTransport] = None,
) -> FeedbackProvider:
    """Provider named by the llm config section"""
    if config.provider == ProviderKind.REMOTE:
        return RemoteLLM.from_env(config, transport)
    return MockOracle(Profile.IDEAL, config.bias_tolerance, weights, dt, v_thresh)
