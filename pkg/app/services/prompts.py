"""
Prompt Builder Service
Renders the versioned direct-feedback and bias-flagging prompt templates.
"""

import math
import os
from enum import Enum
from functools import lru_cache
from typing import Optional, Sequence

from ..errors import ContractViolation
from ..schemas.trajectory import ShapedTransition, Transition

PROMPT_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "prompts")
TEMPLATE_VERSION = "v1"
MISSING = "NA"

SYSTEM_PREAMBLE = (
    "You are an evaluator of reinforcement learning trajectories. "
    "Follow the requested response format exactly and keep scores within the stated values."
)


class PromptKind(str, Enum):
    """Prompt families"""
    DIRECT = "llm_d"
    BIAS_FLAGGING = "hfbf"


@lru_cache(maxsize=None)
def load_template(kind: PromptKind, version: str = TEMPLATE_VERSION) -> str:
    """Read a template asset (app/prompts/<kind>_<version>.txt)"""
    path = os.path.join(PROMPT_DIR, f"{PromptKind(kind).value}_{version}.txt")
    with open(path, 'r', encoding='utf-8') as f:
        return f.read()


def format_number(value) -> str:
    """Integers as-is, floats by shortest round-trip repr (4.0 -> '4.0')"""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    value = float(value)
    if not math.isfinite(value):
        return MISSING
    return repr(value)


def format_vector(values: Sequence) -> str:
    return "[" + ", ".join(format_number(v) for v in values) + "]"


def format_action(action) -> str:
    if isinstance(action, (list, tuple)):
        return format_vector(action)
    return str(int(action))


def _pc_fields(pc: Optional[Sequence[float]]) -> dict:
    if pc is None:
        return {'pc1': MISSING, 'pc2': MISSING, 'pc3': MISSING}
    return {f'pc{i + 1}': format_number(v) for i, v in enumerate(pc[:3])}


def _transition_fields(transition: Transition) -> dict:
    return {
        'episode_num': str(int(transition.episode_id)),
        'time_step': str(int(transition.t)),
        'state': format_vector(transition.state),
        'action': format_action(transition.action),
        'reward': format_number(float(transition.reward)),
        'next_state': format_vector(transition.next_state),
        'collision_flag': str(int(transition.collision_flag)),
        'lane_index': str(int(transition.lane_index)),
    }


def build_prompt_d(transition: Transition, pc: Optional[Sequence[float]] = None) -> str:
    """
    Direct-feedback prompt for one step.

    Args:
        transition: Step to evaluate
        pc: Optional (PC1, PC2, PC3); rendered as NA when absent

    Returns:
        Rendered prompt, byte-stable for identical inputs
    """
    return load_template(PromptKind.DIRECT).format(**_transition_fields(transition), **_pc_fields(pc))


def build_prompt_hfbf(transition: ShapedTransition, pc: Optional[Sequence[float]] = None) -> str:
    """
    Bias-flagging prompt for one human-shaped step.

    Args:
        transition: Step whose shaped_reward is the adjusted score under review
        pc: (PC1, PC2, PC3); falls back to transition.pc

    Raises:
        ContractViolation: no principal components available
    """
    pc = pc if pc is not None else getattr(transition, 'pc', None)
    if pc is None:
        raise ContractViolation("bias-flagging prompt needs principal components")
    return load_template(PromptKind.BIAS_FLAGGING).format(
        **_transition_fields(transition),
        adjusted_score=format_number(float(transition.shaped_reward)),
        **_pc_fields(pc),
    )


def reask_prompt(prompt: str, error: str) -> str:
    """Original prompt plus the reason the previous answer was rejected"""
    return (
        f"{prompt}\n"
        f"Your previous answer could not be used: {error}\n"
        "Answer again using exactly the expected format.\n"
    )
