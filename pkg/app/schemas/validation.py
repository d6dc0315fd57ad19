"""
Data Validation Module
Validates experiment configuration and provides helpful error messages
"""

from typing import Any, Dict, List, Tuple

from ..errors import ConfigurationError
from .experiment import FIS, Cell, ExperimentConfig
from .feedback import COLLISION_SLOTS, LANE_SLOTS, SPEED_SLOTS
from .trajectory import Profile

SECTIONS = ('env', 'reacher', 'fis', 'llm', 'ppo', 'fma', 'surrogate', 'experiment')


class ConfigValidator:
    """Validates experiment configuration structures"""

    @staticmethod
    def validate_experiment(data: Dict[str, Any]) -> Tuple[bool, List[str]]:
        """
        Validate a raw experiment configuration

        Returns:
            Tuple of (is_valid, error_messages)
        """
        errors = []

        if not isinstance(data, dict):
            return False, ["Configuration must be a mapping of sections"]

        for section in data:
            if section not in SECTIONS:
                errors.append(f"Unknown section '{section}'; expected one of {list(SECTIONS)}")
            elif data[section] is not None and not isinstance(data[section], dict):
                errors.append(f"Section '{section}' must be a mapping")
        if errors:
            return False, errors

        fis_section = data.get('fis') or {}
        if fis_section.get('coefficients'):
            errors.extend(ConfigValidator.validate_coefficients(fis_section['coefficients']))

        experiment = data.get('experiment') or {}
        if 'seeds' in experiment:
            seeds = experiment['seeds']
            if not isinstance(seeds, list) or not seeds:
                errors.append("experiment.seeds must be a non-empty list of integers")
            elif not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
                errors.append("experiment.seeds must contain only integers")
        if experiment.get('matrix') is not None and not isinstance(experiment['matrix'], list):
            errors.append("experiment.matrix must be a list of {fis, profile} cells")
        for key in ('eval_episodes', 'workers'):
            if key in experiment and (not isinstance(experiment[key], int) or experiment[key] < 1):
                errors.append(f"experiment.{key} must be a positive integer")
        if errors:
            return False, errors

        try:
            config = ExperimentConfig.from_dict(data)
        except ConfigurationError as e:
            return False, [str(e)]

        for cell in config.matrix:
            errors.extend(ConfigValidator.validate_cell(cell))

        return len(errors) == 0, errors

    @staticmethod
    def validate_cell(cell: Cell) -> List[str]:
        """Validate the strategy/profile pairing of one matrix cell"""
        errors = []

        if cell.fis in (FIS.HF_D, FIS.HF_RSM, FIS.LLM_HFBF) and cell.profile == Profile.NA:
            errors.append(f"{cell.fis.value} needs a profile (IDEAL, AGG or RAD), got NA")

        return errors

    @staticmethod
    def validate_coefficients(tables: Dict[str, Any]) -> List[str]:
        """Validate custom style coefficient tables"""
        errors = []

        if not isinstance(tables, dict):
            return ["fis.coefficients must map profile names to tables"]

        expected = {'b_lane': LANE_SLOTS, 'b_collision': COLLISION_SLOTS, 'b_speed': SPEED_SLOTS}
        for name, table in tables.items():
            try:
                Profile.parse(name)
            except ValueError as e:
                errors.append(str(e))
                continue
            if not isinstance(table, dict):
                errors.append(f"Coefficient table '{name}' must be a mapping")
                continue
            for key, size in expected.items():
                values = table.get(key)
                if not isinstance(values, list) or len(values) != size:
                    errors.append(f"Coefficient table '{name}': {key} needs exactly {size} entries")
                elif not all(isinstance(v, int) and not isinstance(v, bool) for v in values):
                    errors.append(f"Coefficient table '{name}': {key} entries must be integers")

        return errors
