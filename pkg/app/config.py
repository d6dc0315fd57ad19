"""
Configuration Loader
Reads the YAML experiment file and applies command-line overrides.
"""

import logging
import os
from typing import Any, Dict, Iterable, Optional

import yaml

from .errors import ConfigurationError
from .logging_config import kv
from .schemas.experiment import ExperimentConfig, ProviderKind
from .schemas.validation import ConfigValidator

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(os.path.dirname(__file__)), "config", "experiment.yaml")


def read_yaml(path: str) -> Dict[str, Any]:
    """
    Read a YAML mapping from disk.

    Args:
        path: File to read

    Returns:
        Parsed mapping (empty for an empty file)
    """
    if not os.path.exists(path):
        raise ConfigurationError(f"Config file not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Config file {path} is not valid YAML: {e}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"Config file {path} must contain a mapping")
    return data


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """
    Apply `section.key=value` overrides; values are parsed as YAML scalars.

    Args:
        data: Raw configuration mapping
        overrides: Override expressions

    Returns:
        New mapping with the overrides applied
    """
    merged = {section: dict(values or {}) for section, values in data.items()}
    for expression in overrides:
        if '=' not in expression:
            raise ConfigurationError(f"Override must look like section.key=value, got '{expression}'")
        dotted, raw = expression.split('=', 1)
        parts = dotted.strip().split('.')
        if len(parts) != 2 or not all(parts):
            raise ConfigurationError(f"Override key must be section.key, got '{dotted}'")
        section, key = parts
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Override value for {dotted} is not parseable: {e}")
        merged.setdefault(section, {})[key] = value
    return merged


def load_config(
    path: Optional[str] = None,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
    output_dir: Optional[str] = None,
) -> ExperimentConfig:
    """
    Build a validated ExperimentConfig.

    Args:
        path: YAML file; the bundled default when None
        overrides: `section.key=value` expressions applied after the file
        seed: Replaces the seed list with a single seed
        output_dir: Replaces experiment.output_dir

    Returns:
        Validated configuration

    Raises:
        ConfigurationError: listing every validation problem
    """
    source = path or DEFAULT_CONFIG_PATH
    data = read_yaml(source) if os.path.exists(source) or path else {}
    data = apply_overrides(data, overrides)

    if seed is not None:
        data.setdefault('experiment', {})['seeds'] = [int(seed)]
    if output_dir is not None:
        data.setdefault('experiment', {})['output_dir'] = output_dir

    is_valid, errors = ConfigValidator.validate_experiment(data)
    if not is_valid:
        raise ConfigurationError("Invalid configuration: " + "; ".join(errors))

    config = ExperimentConfig.from_dict(data)
    logger.info(kv("config loaded", path=source, env=config.env.value, cells=len(config.matrix)))
    return config


def require_llm_credentials(config: ExperimentConfig) -> None:
    """Fail fast when a remote provider is configured without credentials."""
    if not config.needs_llm or config.llm.provider != ProviderKind.REMOTE:
        return
    missing = [name for name in ('LLM_API_KEY', 'LLM_API_BASE') if not os.environ.get(name)]
    if missing:
        raise ConfigurationError(f"Remote LLM provider needs environment variables: {', '.join(missing)}")
