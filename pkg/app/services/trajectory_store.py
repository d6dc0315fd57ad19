"""
Trajectory Store Service
Append-only datasets of transitions with JSONL persistence and CSV export.
"""

import json
import logging
import os
from typing import Dict, Iterator, List, Optional, Set, Tuple, Union

import pandas as pd

from ..errors import DatasetError, DatasetFormatError, SchemaVersionError
from ..logging_config import kv
from ..schemas.trajectory import ShapedTransition, Transition

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
KIND_RAW = "raw"
KIND_SHAPED = "shaped"

Record = Union[Transition, ShapedTransition]


class TrajectoryDataset:
    """
    Ordered collection of transitions from one environment family.

    Within an episode, t must strictly increase and nothing may follow the
    terminal step. Episodes may interleave; `episodes()` regroups them.
    Records are all raw or all shaped.
    """

    def __init__(self, env_id: str, transitions: Optional[List[Record]] = None):
        """
        Initialize a dataset.

        Args:
            env_id: Environment family ('highway', 'reacher', ...)
            transitions: Initial records, appended in order
        """
        self.env_id = env_id
        self._transitions: List[Record] = []
        self._last_t: Dict[int, int] = {}
        self._closed: Set[int] = set()
        self._shaped: Optional[bool] = None
        for transition in transitions or []:
            self.append(transition)

    def append(self, transition: Record) -> None:
        """
        Append one transition.

        Raises:
            DatasetError: duplicate (episode_id, t), out-of-order t, a step after the terminal,
                or a raw record in a shaped dataset (and vice versa)
        """
        episode, t = transition.episode_id, transition.t
        shaped = isinstance(transition, ShapedTransition)
        if self._shaped is not None and shaped != self._shaped:
            raise DatasetError(f"cannot mix raw and shaped transitions (episode {episode}, t {t})")
        last = self._last_t.get(episode)
        if last is not None and t == last:
            raise DatasetError(f"duplicate transition (episode {episode}, t {t})")
        if last is not None and t < last:
            raise DatasetError(f"out-of-order transition in episode {episode}: t {t} after t {last}")
        if episode in self._closed:
            raise DatasetError(f"episode {episode} already terminated; cannot append t {t}")
        self._transitions.append(transition)
        self._shaped = shaped
        self._last_t[episode] = t
        if transition.terminal:
            self._closed.add(episode)

    def extend(self, transitions) -> None:
        for transition in transitions:
            self.append(transition)

    @property
    def transitions(self) -> List[Record]:
        return list(self._transitions)

    @property
    def is_shaped(self) -> bool:
        return bool(self._shaped)

    @property
    def kind(self) -> str:
        return KIND_SHAPED if self.is_shaped else KIND_RAW

    def episodes(self) -> Iterator[List[Record]]:
        """Yield per-episode lists in ascending episode_id order"""
        grouped: Dict[int, List[Record]] = {}
        for transition in self._transitions:
            grouped.setdefault(transition.episode_id, []).append(transition)
        for episode in sorted(grouped):
            yield grouped[episode]

    def episode_count(self) -> int:
        return len(self._last_t)

    def __len__(self) -> int:
        return len(self._transitions)

    def __iter__(self):
        return iter(self._transitions)

    def __getitem__(self, index):
        return self._transitions[index]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrajectoryDataset):
            return NotImplemented
        return self.env_id == other.env_id and self._transitions == other._transitions

    def to_frame(self) -> pd.DataFrame:
        """One row per transition, columns named exactly as the record fields"""
        rows = [tr.to_dict() for tr in self._transitions]
        if not rows:
            return pd.DataFrame(columns=list(_empty_columns(self.kind)))
        frame = pd.DataFrame(rows)
        for column in ('state', 'next_state', 'action', 'pc'):
            if column in frame.columns:
                frame[column] = frame[column].map(lambda v: json.dumps(v) if isinstance(v, list) else v)
        return frame


def _empty_columns(kind: str) -> Tuple[str, ...]:
    base = (
        'episode_id', 't', 'state', 'action', 'reward', 'next_state',
        'collision_flag', 'lane_index', 'terminal', 'behavior_logprob',
    )
    if kind == KIND_SHAPED:
        return base + (
            'shaped_reward', 'augmented_reward', 'shaping_source',
            'profile', 'bias_flagged', 'pc', 'skipped',
        )
    return base


def _dumps(data) -> str:
    return json.dumps(data, sort_keys=False, separators=(',', ':'), allow_nan=False)


def save_dataset(dataset: TrajectoryDataset, path: str) -> str:
    """
    Write a dataset as JSONL: one header line, then one transition per line.

    Args:
        dataset: Dataset to write
        path: Destination file

    Returns:
        The path written
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    header = {'schema_version': SCHEMA_VERSION, 'env_id': dataset.env_id, 'kind': dataset.kind}
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(_dumps(header) + "\n")
        for transition in dataset:
            f.write(_dumps(transition.to_dict()) + "\n")
    logger.info(kv("dataset saved", path=path, env=dataset.env_id, kind=dataset.kind, transitions=len(dataset)))
    return path


def load_dataset(path: str) -> TrajectoryDataset:
    """
    Read a dataset written by save_dataset.

    Raises:
        DatasetError: the file does not exist
        DatasetFormatError: undecodable line (line numbers are 1-based, header is line 1)
        SchemaVersionError: header written by another schema version
    """
    if not os.path.exists(path):
        raise DatasetError(f"Dataset file not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetFormatError("missing header", 1)

    try:
        header = json.loads(lines[0])
        version = header['schema_version']
        env_id = header['env_id']
        kind = header.get('kind', KIND_RAW)
    except (ValueError, KeyError, TypeError) as e:
        raise DatasetFormatError(f"invalid header: {e}", 1)
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"{path}: schema version {version}, expected {SCHEMA_VERSION}")

    record_type = ShapedTransition if kind == KIND_SHAPED else Transition
    dataset = TrajectoryDataset(env_id)
    for number, line in enumerate(lines[1:], start=2):
        try:
            record = record_type.from_dict(json.loads(line))
        except (ValueError, KeyError, TypeError) as e:
            raise DatasetFormatError(str(e), number)
        try:
            dataset.append(record)
        except DatasetError as e:
            raise DatasetFormatError(str(e), number)
    logger.info(kv("dataset loaded", path=path, env=env_id, kind=kind, transitions=len(dataset)))
    return dataset


def export_csv(dataset: TrajectoryDataset, path: str) -> str:
    """Write the dataset as CSV for spreadsheet inspection"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    dataset.to_frame().to_csv(path, index=False)
    return path
