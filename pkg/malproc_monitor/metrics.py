"""Evaluation metrics and the model comparison report.

Rates:

- FPR: fraction of benign processes ever killed, directly or by cascade
- FNR: fraction of malicious processes never killed
- FNR over time: executed malicious seconds / unkilled malicious seconds
- FPR over time: destroyed benign seconds / unkilled benign seconds
- combined: (FPR + FNR over time) / 2

Empty classes give a rate of 0 and a warning.
"""

import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import pandas as pd

from .decision import offline_verdict
from .exceptions import InvalidInputError
from .telemetry.features import Label, ProcessTrace

if TYPE_CHECKING:
    from .simulation.scenario import GroundTruth

logger = logging.getLogger("metrics")

REPORT_COLUMNS = [
    "split",
    "model",
    "accuracy",
    "fpr",
    "fnr",
    "fpr_over_time",
    "fnr_over_time",
    "combined",
]

# Row order of the six-model comparison.
COMPARISON_MODELS = [
    "offline",
    "offline_best",
    "online",
    "online_best",
    "distilled",
    "forest_direct",
]


@dataclass(frozen=True)
class ProcessRecord:
    """Outcome of one process in one run."""

    process_id: int
    app_id: str
    label: Label
    runtime: int
    unkilled_duration: int
    killed_at: Optional[int] = None
    birth_tick: int = 0

    @property
    def killed(self) -> bool:
        return self.killed_at is not None

    @property
    def malicious(self) -> bool:
        return Label(self.label) is Label.MALICIOUS

    def to_record(self) -> Dict:
        row = asdict(self)
        row["label"] = Label(self.label).value
        return row


def _of_label(records: Iterable[ProcessRecord], label: Label) -> List[ProcessRecord]:
    return [r for r in records if Label(r.label) is label]


def _empty(kind: str, metric: str, warnings: Optional[List[str]]) -> float:
    message = f"No {kind} processes; {metric} reported as 0"
    logger.warning(message)
    if warnings is not None:
        warnings.append(message)
    return 0.0


def fnr_over_time(records: Iterable[ProcessRecord], warnings: Optional[List[str]] = None) -> float:
    """Σ runtime / Σ unkilled duration over malicious processes."""
    malicious = _of_label(records, Label.MALICIOUS)
    if not malicious:
        return _empty("malicious", "FNR over time", warnings)
    total = sum(r.unkilled_duration for r in malicious)
    if total <= 0:
        return _empty("malicious", "FNR over time", warnings)
    return sum(r.runtime for r in malicious) / total


def fnr(records: Iterable[ProcessRecord], warnings: Optional[List[str]] = None) -> float:
    """Fraction of malicious processes never killed."""
    malicious = _of_label(records, Label.MALICIOUS)
    if not malicious:
        return _empty("malicious", "FNR", warnings)
    return sum(1 for r in malicious if not r.killed) / len(malicious)


def fpr(records: Iterable[ProcessRecord], warnings: Optional[List[str]] = None) -> float:
    """Fraction of benign processes ever killed."""
    benign = _of_label(records, Label.BENIGN)
    if not benign:
        return _empty("benign", "FPR", warnings)
    return sum(1 for r in benign if r.killed) / len(benign)


def fpr_over_time(records: Iterable[ProcessRecord], warnings: Optional[List[str]] = None) -> float:
    """Σ (unkilled duration − runtime) / Σ unkilled duration over benign processes."""
    benign = _of_label(records, Label.BENIGN)
    if not benign:
        return _empty("benign", "FPR over time", warnings)
    total = sum(r.unkilled_duration for r in benign)
    if total <= 0:
        return _empty("benign", "FPR over time", warnings)
    return sum(r.unkilled_duration - r.runtime for r in benign) / total


def accuracy(records: Sequence[ProcessRecord], app_level: bool = False) -> float:
    """Share of correct kill decisions, per process or rolled up per application.

    An application counts as killed when any of its processes was killed.
    """
    if not records:
        return 0.0
    if not app_level:
        return sum(1 for r in records if r.killed == r.malicious) / len(records)
    apps: Dict[str, Tuple[bool, bool]] = {}
    for r in records:
        killed, malicious = apps.get(r.app_id, (False, r.malicious))
        apps[r.app_id] = (killed or r.killed, malicious)
    return sum(1 for killed, malicious in apps.values() if killed == malicious) / len(apps)


def records_from_events(events: Sequence, ground_truth: "GroundTruth") -> List[ProcessRecord]:
    """Rebuild process records by counting events of a raw event log.

    Runtime is the number of snapshot events of a process; the kill tick is
    taken from its kill event.
    """
    snapshots: Counter = Counter()
    killed_at: Dict[int, int] = {}
    for event in events:
        kind = getattr(event.kind, "value", event.kind)
        if kind == "snapshot":
            snapshots[event.pid] += 1
        elif kind == "kill":
            killed_at.setdefault(event.pid, event.tick)
    return [
        ProcessRecord(
            process_id=pid,
            app_id=truth.app_id,
            label=truth.label,
            runtime=snapshots[pid],
            unkilled_duration=truth.unkilled_duration,
            killed_at=killed_at.get(pid),
            birth_tick=truth.birth_tick,
        )
        for pid, truth in sorted(ground_truth.processes.items())
    ]


@dataclass
class EvaluationReport:
    """One (split, model) row plus its per-process detail.

    Offline rows leave the over-time columns and combined empty.
    """

    split: str
    model: str
    accuracy: float
    fpr: float
    fnr: float
    fnr_over_time: Optional[float] = None
    fpr_over_time: Optional[float] = None
    details: List[ProcessRecord] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    threshold: Optional[float] = None

    @property
    def combined(self) -> Optional[float]:
        if self.fnr_over_time is None:
            return None
        return (self.fpr + self.fnr_over_time) / 2.0

    def row(self) -> Dict:
        return {
            "split": self.split,
            "model": self.model,
            "accuracy": self.accuracy,
            "fpr": self.fpr,
            "fnr": self.fnr,
            "fpr_over_time": self.fpr_over_time,
            "fnr_over_time": self.fnr_over_time,
            "combined": self.combined,
        }


def report_from_records(
    split: str,
    model: str,
    records: Sequence[ProcessRecord],
    app_level: bool = False,
    threshold: Optional[float] = None,
) -> EvaluationReport:
    warnings: List[str] = []
    return EvaluationReport(
        split=split,
        model=model,
        accuracy=accuracy(records, app_level),
        fpr=fpr(records, warnings),
        fnr=fnr(records, warnings),
        fnr_over_time=fnr_over_time(records, warnings),
        fpr_over_time=fpr_over_time(records, warnings),
        details=list(records),
        warnings=warnings,
        threshold=threshold,
    )


def build_report(
    split: str,
    model: str,
    runs: Sequence[Tuple[Sequence, Optional["GroundTruth"]]],
    app_level: bool = False,
    threshold: Optional[float] = None,
) -> EvaluationReport:
    """Report over the event logs of one split.

    Args:
        split: Split name
        model: Model label
        runs: (event log, ground truth) pairs, one per scenario
        app_level: Roll accuracy up per application
    """
    records: List[ProcessRecord] = []
    for events, ground_truth in runs:
        if ground_truth is None:
            raise InvalidInputError(f"Ground-truth sidecar missing for split {split!r}")
        records.extend(records_from_events(events, ground_truth))
    report = report_from_records(split, model, records, app_level, threshold)
    logger.info(
        f"{split}/{model}: acc {report.accuracy:.4f}, FPR {report.fpr:.4f}, "
        f"FNR over time {report.fnr_over_time:.4f}"
    )
    return report


def offline_report(
    split: str,
    model: str,
    traces: Sequence[ProcessTrace],
    scores: Sequence[Optional[Sequence[float]]],
    threshold: float,
) -> EvaluationReport:
    """Accuracy, FPR and FNR from offline verdicts on complete traces.

    ``scores[i]`` holds the window scores of ``traces[i]``; empty traces are
    skipped.
    """
    if len(scores) != len(traces):
        raise InvalidInputError(f"Got {len(scores)} score streams for {len(traces)} traces")
    judged: List[Tuple[ProcessTrace, bool]] = []
    for trace, trace_scores in zip(traces, scores):
        if not trace.snapshots:
            continue
        verdict = offline_verdict(trace_scores, threshold, trace.process_id, trace.final_tick)
        judged.append((trace, verdict.is_malicious))
    warnings: List[str] = []
    benign = [flagged for trace, flagged in judged if trace.label is Label.BENIGN]
    malicious = [flagged for trace, flagged in judged if trace.label is Label.MALICIOUS]
    fpr_value = sum(benign) / len(benign) if benign else _empty("benign", "FPR", warnings)
    fnr_value = (
        sum(not flagged for flagged in malicious) / len(malicious)
        if malicious else _empty("malicious", "FNR", warnings)
    )
    acc = sum(flagged == bool(trace.y) for trace, flagged in judged) / len(judged) if judged else 0.0
    return EvaluationReport(
        split=split,
        model=model,
        accuracy=acc,
        fpr=fpr_value,
        fnr=fnr_value,
        warnings=warnings,
        threshold=threshold,
    )


def offline_benchmark(model, traces_by_split: Mapping[str, Sequence[ProcessTrace]],
                      threshold: Optional[float] = None, name: str = "offline") -> List[EvaluationReport]:
    """Offline rows (mean window score > θ) for every split."""
    threshold = model.threshold if threshold is None else threshold
    reports = []
    for split, traces in traces_by_split.items():
        scores = [model.score_trace(trace) if trace.snapshots else None for trace in traces]
        reports.append(offline_report(split, name, traces, scores, threshold))
    return reports


class ComparisonTable:
    """Collects report rows and renders them as a table."""

    def __init__(self, reports: Optional[Iterable[EvaluationReport]] = None):
        self.reports: List[EvaluationReport] = list(reports or [])

    def add(self, report: EvaluationReport):
        self.reports.append(report)

    def has_all_models(self, split: str) -> bool:
        present = {r.model for r in self.reports if r.split == split}
        return set(COMPARISON_MODELS) <= present

    def to_frame(self) -> pd.DataFrame:
        order = {name: i for i, name in enumerate(COMPARISON_MODELS)}
        rows = sorted(
            (r.row() for r in self.reports),
            key=lambda row: (row["split"], order.get(row["model"], len(order)), row["model"]),
        )
        return pd.DataFrame(rows, columns=REPORT_COLUMNS)

    def to_csv(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.6f")

    def to_text(self) -> str:
        frame = self.to_frame().copy()
        for column in REPORT_COLUMNS[2:]:
            frame[column] = frame[column].map(lambda v: "" if v is None or pd.isna(v) else f"{100 * v:.2f}")
        return frame.to_string(index=False)

    def write_details(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for report in self.reports:
                for record in report.details:
                    fh.write(json.dumps({"split": report.split, "model": report.model, **record.to_record()}))
                    fh.write("\n")
