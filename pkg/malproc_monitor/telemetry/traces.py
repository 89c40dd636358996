"""Line-delimited trace files.

One snapshot per line::

    {"app_id": "...", "pid": 1200, "ppid": 1100, "tick": 3, "label": "benign", "f": [26 numbers]}

Traces are rebuilt by grouping on (app_id, pid) and sorting by tick. The file
carries no unkilled duration, so a trace read back gets one second per
snapshot unless the caller supplies durations (the ground-truth sidecar does).
"""

import json
import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

from ..exceptions import InvalidInputError
from .features import FEATURE_COUNT, Label, ProcessSnapshot, ProcessTrace, make_feature_vector

logger = logging.getLogger("telemetry.traces")

PathLike = Union[str, Path]
TraceKey = Tuple[str, int]


def snapshot_to_record(snapshot: ProcessSnapshot, label: Union[Label, str]) -> Dict:
    return {
        "app_id": snapshot.app_id,
        "pid": snapshot.process_id,
        "ppid": snapshot.parent_id,
        "tick": snapshot.tick,
        "label": Label(label).value,
        "f": list(snapshot.features),
    }


def write_traces(traces: Iterable[ProcessTrace], path: PathLike) -> int:
    """Write traces to ``path``; returns the number of snapshot lines written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    written = 0
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            for snapshot in trace.snapshots:
                fh.write(json.dumps(snapshot_to_record(snapshot, trace.label)))
                fh.write("\n")
                written += 1
    logger.debug(f"Wrote {written} snapshots to {path}")
    return written


def _parse_record(line: str, line_number: int) -> Tuple[ProcessSnapshot, Label]:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"Malformed trace record at line {line_number}: {e}") from e
    if not isinstance(record, dict):
        raise InvalidInputError(f"Malformed trace record at line {line_number}: not an object")

    missing = {"app_id", "pid", "ppid", "tick", "label", "f"} - set(record)
    if missing:
        raise InvalidInputError(
            f"Malformed trace record at line {line_number}: missing {sorted(missing)}"
        )

    features = record["f"]
    if not isinstance(features, list) or len(features) != FEATURE_COUNT:
        count = len(features) if isinstance(features, list) else "non-list"
        raise InvalidInputError(
            f"Wrong feature arity at line {line_number} for record "
            f"{record['app_id']}/{record['pid']} tick {record['tick']}: "
            f"expected {FEATURE_COUNT}, got {count}"
        )

    try:
        snapshot = ProcessSnapshot(
            process_id=int(record["pid"]),
            parent_id=None if record["ppid"] is None else int(record["ppid"]),
            app_id=str(record["app_id"]),
            tick=int(record["tick"]),
            features=make_feature_vector(features),
        )
        label = Label(record["label"])
    except (TypeError, ValueError) as e:
        raise InvalidInputError(f"Invalid trace record at line {line_number}: {e}") from e
    return snapshot, label


def read_traces(
    path: PathLike,
    durations: Optional[Mapping[TraceKey, int]] = None,
) -> List[ProcessTrace]:
    """Read a trace file back into traces ordered by (app_id, pid).

    Args:
        path: Trace file
        durations: Optional unkilled durations keyed by (app_id, pid)
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Trace file not found: {path}")

    grouped: Dict[TraceKey, List[ProcessSnapshot]] = defaultdict(list)
    labels: Dict[TraceKey, Label] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            snapshot, label = _parse_record(line, line_number)
            key = (snapshot.app_id, snapshot.process_id)
            if labels.setdefault(key, label) is not label:
                raise InvalidInputError(
                    f"Label changes within trace {key[0]}/{key[1]} at line {line_number}"
                )
            grouped[key].append(snapshot)

    traces = []
    for key in sorted(grouped):
        snapshots = sorted(grouped[key], key=lambda s: s.tick)
        duration = len(snapshots)
        if durations is not None and key in durations:
            duration = int(durations[key])
        traces.append(
            ProcessTrace(
                process_id=key[1],
                app_id=key[0],
                label=labels[key],
                snapshots=tuple(snapshots),
                unkilled_duration_s=duration,
                parent_id=snapshots[0].parent_id,
            )
        )
    logger.debug(f"Read {len(traces)} traces from {path}")
    return traces
