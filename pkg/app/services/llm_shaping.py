"""
LLM Shaping Service
Direct LLM feedback (LLM-D) and bias flagging of human feedback (LLM-HFBF).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

from ..errors import ContractViolation, ParseError, ProviderError
from ..logging_config import kv
from ..schemas.experiment import LLMConfig
from ..schemas.trajectory import Profile, ShapedTransition, ShapingSource, Transition
from ..schemas.verdicts import BiasVerdict, Verdict
from .feedback_rules import check_single_env, episode_windows
from .pca import PCAModel, step_features
from .prompts import PromptKind, build_prompt_d, build_prompt_hfbf, reask_prompt
from .providers import FeedbackProvider, FeedbackRequest
from .trajectory_store import TrajectoryDataset
from .verdict_parser import parse_verdict_d, parse_verdict_hfbf

logger = logging.getLogger(__name__)

T = TypeVar('T')

HFBF_INPUT_SOURCES = (ShapingSource.HF_D, ShapingSource.LLM_HFBF)


def ask(provider: FeedbackProvider, request: FeedbackRequest, parse: Callable[[str], T],
        reask_attempts: int) -> Optional[T]:
    """
    Query a provider and parse its answer, re-asking on ParseError.

    Returns:
        Parsed verdict, or None when every attempt was unparseable
    """
    prompt = request.prompt
    for attempt in range(reask_attempts + 1):
        raw = provider.evaluate_step(request if attempt == 0 else _with_prompt(request, prompt))
        try:
            return parse(raw)
        except ParseError as e:
            logger.debug(kv("unparseable answer", episode=request.transition.episode_id,
                            t=request.transition.t, attempt=attempt + 1, error=e.message))
            prompt = reask_prompt(request.prompt, e.message)
    return None


def _with_prompt(request: FeedbackRequest, prompt: str) -> FeedbackRequest:
    return FeedbackRequest(prompt, request.kind, request.window, request.env_id, request.adjusted_score)


def _run_bounded(fn: Callable[[FeedbackRequest], T], requests: Sequence[FeedbackRequest],
                 max_in_flight: int) -> List[T]:
    """Evaluate requests with at most max_in_flight in progress; results keep input order"""
    results: List[T] = []
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        try:
            for result in pool.map(fn, requests):
                results.append(result)
        except ProviderError as e:
            pool.shutdown(wait=True, cancel_futures=True)
            raise ProviderError(e.message, completed=len(results), total=len(requests))
    return results


def shape_dataset_llm_d(
    dataset: TrajectoryDataset,
    provider: FeedbackProvider,
    config: Optional[LLMConfig] = None,
    pca: Optional[PCAModel] = None,
) -> TrajectoryDataset:
    """
    Annotate every step with the provider's direct feedback.

    r_hat = alpha_action * llm_score_1 + alpha_reward * llm_score_2. Steps whose
    answers stay unparseable after the re-asks get r_hat = 0 and skipped = True.

    Args:
        dataset: Collected dataset
        provider: Feedback provider
        config: Scaling, re-ask and concurrency settings
        pca: Optional fitted PCA; its projections fill the prompt's PC fields
            when config.use_pcs_in_direct is set

    Raises:
        ProviderError: provider unreachable after its retries (reports progress)
    """
    config = config or LLMConfig()
    if len(dataset) == 0:
        return TrajectoryDataset(dataset.env_id)
    check_single_env(dataset)
    use_pcs = config.use_pcs_in_direct and pca is not None

    requests = []
    for transition, window in episode_windows(dataset):
        pc = pca.project(step_features(transition)) if use_pcs else None
        requests.append(FeedbackRequest(
            build_prompt_d(transition, pc), PromptKind.DIRECT, tuple(window), dataset.env_id,
        ))

    def evaluate(request: FeedbackRequest):
        return ask(provider, request, parse_verdict_d, config.reask_attempts)

    verdicts = _run_bounded(evaluate, requests, config.max_in_flight)
    shaped = TrajectoryDataset(dataset.env_id)
    skipped = 0
    for transition, verdict in zip(dataset, verdicts):
        if verdict is None:
            skipped += 1
            logger.warning(kv("step skipped", source="LLM-D", episode=transition.episode_id, t=transition.t))
            shaped.append(ShapedTransition.annotate(transition, 0.0, ShapingSource.LLM_D, skipped=True))
            continue
        score = config.alpha_action * verdict.llm_score_1 + config.alpha_reward * verdict.llm_score_2
        shaped.append(ShapedTransition.annotate(transition, score, ShapingSource.LLM_D))

    logger.info(kv("llm-d shaping", provider=provider.name, steps=len(shaped), skipped=skipped))
    return shaped


def _hfbf_input(transition: Transition) -> ShapedTransition:
    if not isinstance(transition, ShapedTransition) or transition.shaping_source not in HFBF_INPUT_SOURCES:
        raise ContractViolation("bias flagging needs a human-feedback (HF-D) shaped dataset")
    if transition.profile == Profile.NA:
        raise ContractViolation("bias flagging needs the profile of the human feedback")
    return transition


def shape_dataset_hfbf(
    dataset: TrajectoryDataset,
    pca: PCAModel,
    provider: FeedbackProvider,
    config: Optional[LLMConfig] = None,
) -> TrajectoryDataset:
    """
    Review every human-shaped step and replace the scores the provider flags.

    The final shaped reward is the adjusted score on Correct verdicts and the
    provider's suggested score on Biased verdicts. Unparseable steps keep the
    human score and are marked skipped. Steps already reviewed keep their
    principal components and their earlier flag, so a second pass is a no-op
    for a deterministic provider.

    Args:
        dataset: HF-D shaped dataset (or the output of an earlier pass)
        pca: PCA fitted on this dataset's step features
        provider: Feedback provider
        config: Re-ask and concurrency settings

    Raises:
        ContractViolation: input is not human-shaped or carries no profile
        ProviderError: provider unreachable after its retries (reports progress)
    """
    config = config or LLMConfig()
    if len(dataset) == 0:
        return TrajectoryDataset(dataset.env_id)
    check_single_env(dataset)

    requests = []
    components: List[Tuple[float, float, float]] = []
    for transition, window in episode_windows(dataset):
        step = _hfbf_input(transition)
        pc = step.pc if step.pc is not None else pca.project(step_features(step))
        components.append(pc)
        requests.append(FeedbackRequest(
            build_prompt_hfbf(step, pc), PromptKind.BIAS_FLAGGING, tuple(window),
            dataset.env_id, step.shaped_reward,
        ))

    def evaluate(request: FeedbackRequest) -> Optional[BiasVerdict]:
        return ask(provider, request, lambda raw: parse_verdict_hfbf(raw, request.adjusted_score),
                   config.reask_attempts)

    verdicts = _run_bounded(evaluate, requests, config.max_in_flight)
    shaped = TrajectoryDataset(dataset.env_id)
    flagged = skipped = 0
    for step, pc, verdict in zip(dataset, components, verdicts):
        earlier_flag = bool(step.bias_flagged)
        if verdict is None:
            skipped += 1
            logger.warning(kv("step skipped", source="LLM-HFBF", episode=step.episode_id, t=step.t))
            shaped.append(ShapedTransition.annotate(
                step, step.shaped_reward, ShapingSource.LLM_HFBF, step.profile,
                bias_flagged=earlier_flag, pc=pc, skipped=True,
            ))
            continue
        biased = verdict.verdict == Verdict.BIASED
        score = verdict.llm_score if biased else step.shaped_reward
        flagged += int(biased)
        shaped.append(ShapedTransition.annotate(
            step, score, ShapingSource.LLM_HFBF, step.profile,
            bias_flagged=biased or earlier_flag, pc=pc,
        ))

    logger.info(kv("llm-hfbf shaping", provider=provider.name, steps=len(shaped),
                   flagged=flagged, skipped=skipped))
    return shaped
