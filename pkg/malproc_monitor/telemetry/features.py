"""Feature schema and the snapshot/trace value types."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import InvalidInputError


# Normative order; mirrored in feature_schema.yaml.
FEATURE_NAMES: Tuple[str, ...] = (
    "cpu_system_pct",
    "cpu_user_pct",
    "mem_total_bytes",
    "mem_physical_bytes",
    "mem_swap_bytes",
    "child_process_count",
    "max_process_id",
    "thread_count",
    "io_read_bytes",
    "io_write_bytes",
    "io_other_bytes",
    "io_read_count",
    "io_write_count",
    "io_other_count",
    "process_priority",
    "io_priority",
    "cmdline_arg_count",
    "handle_count",
    "seconds_since_start",
    "tcp_packet_count",
    "udp_packet_count",
    "open_connection_count",
    "port_status_1",
    "port_status_2",
    "port_status_3",
    "port_status_4",
)

FEATURE_COUNT = len(FEATURE_NAMES)
FEATURE_INDEX = {name: index for index, name in enumerate(FEATURE_NAMES)}
SECONDS_SINCE_START = FEATURE_INDEX["seconds_since_start"]

# Ordinal codes are allowed to go negative (nice values); everything else is a
# magnitude.
SIGNED_FEATURES = frozenset({"process_priority", "io_priority"})


class Label(str, Enum):
    """Application-level ground truth inherited by every process."""

    BENIGN = "benign"
    MALICIOUS = "malicious"

    @property
    def value_int(self) -> int:
        return 1 if self is Label.MALICIOUS else 0


def make_feature_vector(values: Iterable[float]) -> Tuple[float, ...]:
    """Validate and freeze a 26-entry feature vector."""
    vector = tuple(float(v) for v in values)
    if len(vector) != FEATURE_COUNT:
        raise InvalidInputError(
            f"Feature vector must have {FEATURE_COUNT} entries, got {len(vector)}"
        )
    for name, value in zip(FEATURE_NAMES, vector):
        if not np.isfinite(value):
            raise InvalidInputError(f"Feature {name} is not finite: {value}")
        if name not in SIGNED_FEATURES and value < 0:
            raise InvalidInputError(f"Feature {name} must be >= 0, got {value}")
    return vector


@dataclass(frozen=True)
class ProcessSnapshot:
    """One process's machine-activity features at one 1 Hz tick."""

    process_id: int
    parent_id: Optional[int]
    app_id: str
    tick: int
    features: Tuple[float, ...]

    def __post_init__(self):
        if self.tick < 0:
            raise InvalidInputError(f"Snapshot tick must be >= 0, got {self.tick}")
        if self.parent_id is not None and self.parent_id == self.process_id:
            raise InvalidInputError(f"Process {self.process_id} cannot be its own parent")
        if not isinstance(self.features, tuple) or len(self.features) != FEATURE_COUNT:
            object.__setattr__(self, "features", make_feature_vector(self.features))

    @property
    def seconds_since_start(self) -> float:
        return self.features[SECONDS_SINCE_START]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.features, dtype=np.float64)


@dataclass(frozen=True)
class ProcessTrace:
    """Time series of snapshots for one process of one application launch."""

    process_id: int
    app_id: str
    label: Label
    snapshots: Tuple[ProcessSnapshot, ...]
    unkilled_duration_s: int
    parent_id: Optional[int] = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "label", Label(self.label))
        object.__setattr__(self, "snapshots", tuple(self.snapshots))
        ticks = [s.tick for s in self.snapshots]
        if any(b <= a for a, b in zip(ticks, ticks[1:])):
            raise InvalidInputError(
                f"Snapshots of process {self.process_id} must be strictly increasing in tick"
            )
        if self.unkilled_duration_s < max(len(self.snapshots) - 1, 0):
            raise InvalidInputError(
                f"Process {self.process_id}: unkilled duration {self.unkilled_duration_s}s "
                f"is shorter than its {len(self.snapshots)} snapshots"
            )
        for snapshot in self.snapshots:
            if snapshot.process_id != self.process_id or snapshot.app_id != self.app_id:
                raise InvalidInputError(
                    f"Snapshot at tick {snapshot.tick} does not belong to "
                    f"process {self.app_id}/{self.process_id}"
                )

    @property
    def key(self) -> Tuple[str, int]:
        return (self.app_id, self.process_id)

    @property
    def y(self) -> int:
        return self.label.value_int

    @property
    def final_tick(self) -> Optional[int]:
        return self.snapshots[-1].tick if self.snapshots else None

    def feature_matrix(self) -> np.ndarray:
        """Raw features as an (n_snapshots, 26) array."""
        if not self.snapshots:
            return np.zeros((0, FEATURE_COUNT), dtype=np.float64)
        return np.asarray([s.features for s in self.snapshots], dtype=np.float64)

    def time_left(self) -> np.ndarray:
        """Fraction of the unkilled trace remaining at each snapshot, in [0, 1]."""
        elapsed = self.feature_matrix()[:, SECONDS_SINCE_START]
        duration = max(self.unkilled_duration_s, 1)
        return np.clip((duration - elapsed) / duration, 0.0, 1.0)


def split_by_label(traces: Sequence[ProcessTrace]) -> Tuple[List[ProcessTrace], List[ProcessTrace]]:
    """Return (benign, malicious) traces."""
    benign = [t for t in traces if t.label is Label.BENIGN]
    malicious = [t for t in traces if t.label is Label.MALICIOUS]
    return benign, malicious
