"""
Mock Chat Endpoint
Local OpenAI-compatible chat-completions server for offline end-to-end runs.
"""

import json
import logging
import re

from flask import Flask, jsonify, request

from ..logging_config import kv

logger = logging.getLogger(__name__)

MODEL_NAME = "echo-judge"

REWARD_PATTERN = re.compile(r"Reward:\s*([^,\n]+)")
COLLISION_PATTERN = re.compile(r"Collision flag:\s*(\d+)")
ADJUSTED_PATTERN = re.compile(r"Adjusted score:\s*([^,\n]+)")


def _number(pattern: re.Pattern, text: str, default: float = 0.0) -> float:
    match = pattern.search(text)
    if match is None:
        return default
    try:
        return float(match.group(1))
    except ValueError:
        return default


def judge(prompt: str) -> str:
    """
    Canned answer for one prompt.

    Bias-flagging prompts: Biased with llm_score -1.0 when a collision step
    carries a positive adjusted score, otherwise Correct. Direct prompts:
    llm_score_1 = -2 on collisions and 0 otherwise; llm_score_2 = +1 when
    the reward is negative exactly on collisions.
    """
    collision = _number(COLLISION_PATTERN, prompt) > 0
    reward = _number(REWARD_PATTERN, prompt)
    if "Adjusted score:" in prompt:
        adjusted = _number(ADJUSTED_PATTERN, prompt)
        if collision and adjusted > 0:
            return json.dumps({
                'verdict': "Biased score allotted",
                'llm_score': -1.0,
                'justification': "a collision step cannot earn a positive score",
            })
        return json.dumps({
            'verdict': "Correct score allotted",
            'llm_score': adjusted,
            'justification': "score is consistent with the step outcome",
        })
    consistent = reward < 0 if collision else reward >= 0
    return json.dumps({
        'justification': "collision" if collision else "no collision",
        'llm_score_1': -2 if collision else 0,
        'llm_score_2': 1 if consistent else -1,
    })


def create_mock_llm_app() -> Flask:
    """Flask app serving POST /v1/chat/completions"""
    app = Flask(__name__)

    @app.post("/v1/chat/completions")
    def chat_completions():
        """Answer the last user message of a chat request."""
        body = request.get_json(silent=True) or {}
        messages = body.get('messages')
        if not isinstance(messages, list) or not messages:
            return jsonify({'error': {'message': "messages must be a non-empty list"}}), 400
        prompt = next(
            (m.get('content', "") for m in reversed(messages) if isinstance(m, dict) and m.get('role') == 'user'),
            "",
        )
        answer = judge(str(prompt))
        logger.debug(kv("mock completion", chars=len(prompt)))
        return jsonify({
            'id': "chatcmpl-mock",
            'object': "chat.completion",
            'model': body.get('model', MODEL_NAME),
            'choices': [{
                'index': 0,
                'message': {'role': "assistant", 'content': answer},
                'finish_reason': "stop",
            }],
        })

    @app.get("/health")
    def health():
        return jsonify({'status': "ok"})

    return app
