"""Live host monitor: 1 Hz sampling, snapshot scoring and process-tree kills."""

import asyncio
import json
import logging
import os
import signal
import socket
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Union

import psutil

from .config import MonitorSettings
from .decision import OnlineDecider, ProcessVerdict
from .detectors.base import BaseDetector
from .notifications.base import BaseNotifier
from .notifications.telegram import TelegramNotifier
from .telemetry.features import ProcessSnapshot
from .telemetry.sampler import ProcessSampler

logger = logging.getLogger("monitor")


@dataclass
class MonitorStats:
    """Statistics for one monitoring session."""

    sweeps: int = 0
    snapshots: int = 0
    verdicts: int = 0
    kills: int = 0
    dry_run_kills: int = 0
    skipped_allowlist: int = 0
    skipped_protected: int = 0
    warnings: int = 0
    notifications_sent: int = 0
    start_time: datetime = field(default_factory=datetime.now)
    last_sweep_time: Optional[datetime] = None
    sweep_times: List[float] = field(default_factory=list)

    @property
    def mean_interval(self) -> Optional[float]:
        """Mean seconds between consecutive sweeps."""
        if len(self.sweep_times) < 2:
            return None
        return (self.sweep_times[-1] - self.sweep_times[0]) / (len(self.sweep_times) - 1)


class Allowlist:
    """Process names and pids that are never killed.

    The file holds one entry per line; integers are pids, anything else is a
    process name. ``#`` starts a comment.
    """

    def __init__(self, names: Iterable[str] = (), pids: Iterable[int] = ()):
        self.names: Set[str] = {n.lower() for n in names}
        self.pids: Set[int] = set(pids)

    @classmethod
    def load(cls, path: Optional[Union[str, Path]]) -> "Allowlist":
        if path is None:
            return cls()
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Allowlist not found: {path}")
        names, pids = [], []
        for raw in path.read_text(encoding="utf-8").splitlines():
            entry = raw.split("#", 1)[0].strip()
            if not entry:
                continue
            if entry.isdigit():
                pids.append(int(entry))
            else:
                names.append(entry)
        logger.info(f"Allowlist: {len(names)} names, {len(pids)} pids")
        return cls(names, pids)

    def allows(self, pid: int, name: Optional[str]) -> bool:
        return pid in self.pids or (name is not None and name.lower() in self.names)

    def __len__(self) -> int:
        return len(self.names) + len(self.pids)


def protected_pids(pid: Optional[int] = None) -> Set[int]:
    """The given process (default: this one) and all of its ancestors."""
    proc = psutil.Process(pid if pid is not None else os.getpid())
    protected = {proc.pid}
    try:
        protected.update(p.pid for p in proc.parents())
    except psutil.Error as e:
        logger.warning(f"Could not resolve ancestors of pid {proc.pid}: {e}")
    return protected


def request_high_priority() -> bool:
    """Ask the OS to schedule this process ahead of ordinary work."""
    proc = psutil.Process()
    try:
        if psutil.WINDOWS:
            proc.nice(psutil.HIGH_PRIORITY_CLASS)
        else:
            proc.nice(-10)
    except (psutil.AccessDenied, PermissionError, OSError) as e:
        logger.warning(f"High scheduling priority denied, continuing at normal priority: {e}")
        return False
    logger.info("Running with high scheduling priority")
    return True


def _process_name(proc: psutil.Process) -> Optional[str]:
    try:
        return proc.name()
    except psutil.Error:
        return None


def kill_process_tree(
    pid: int,
    timeout: float = 3.0,
    protected: Optional[Set[int]] = None,
    spare: Optional[Callable[[int, Optional[str]], bool]] = None,
) -> int:
    """Terminate a process and all of its descendants; return how many were stopped.

    Processes still alive after ``timeout`` seconds get SIGKILL. Pids in
    ``protected`` are left alone, and so is every descendant for which
    ``spare(pid, name)`` is true.
    """
    protected = protected or set()
    try:
        root = psutil.Process(pid)
        targets = root.children(recursive=True) + [root]
    except psutil.NoSuchProcess:
        logger.warning(f"Kill of pid {pid} ignored: process already exited")
        return 0

    targets = [p for p in targets if p.pid not in protected]
    if spare is not None:
        kept = []
        for proc in targets:
            if proc.pid != pid and spare(proc.pid, _process_name(proc)):
                logger.warning(f"Sparing allowlisted pid {proc.pid} in the tree of pid {pid}")
                continue
            kept.append(proc)
        targets = kept
    for proc in targets:
        try:
            proc.terminate()
        except psutil.NoSuchProcess:
            pass
        except psutil.AccessDenied:
            logger.warning(f"Permission denied terminating pid {proc.pid}")

    gone, alive = psutil.wait_procs(targets, timeout=timeout)
    for proc in alive:
        try:
            proc.kill()
        except (psutil.NoSuchProcess, psutil.AccessDenied) as e:
            logger.warning(f"Could not kill pid {proc.pid}: {e}")
    return len(targets)


def sampling_intervals(event_log: Union[str, Path]) -> List[float]:
    """Seconds between consecutive sweeps recorded in a monitor event log."""
    times = []
    with open(event_log, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                record = json.loads(line)
                if record.get("event") == "sweep":
                    times.append(float(record["time"]))
    return [b - a for a, b in zip(times, times[1:])]


class ProcessMonitor:
    """Samples every process once per period, scores it and acts on verdicts.

    All scores and kill decisions of one sweep complete before the next sweep
    starts. Without ``enforce`` nothing is ever terminated.
    """

    def __init__(
        self,
        detector: BaseDetector,
        settings: Optional[MonitorSettings] = None,
        notifiers: Optional[Sequence[BaseNotifier]] = None,
        sampler: Optional[ProcessSampler] = None,
        allowlist: Optional[Allowlist] = None,
        killer: Callable[..., int] = kill_process_tree,
        clock: Callable[[], float] = time.time,
    ):
        self.settings = settings or MonitorSettings()
        self.detector = detector
        if self.settings.threshold is not None:
            self.detector.threshold = self.settings.threshold
        self.decider = OnlineDecider(self.detector.threshold)
        self.sampler = sampler or ProcessSampler(clock=clock)
        self.allowlist = allowlist if allowlist is not None else Allowlist.load(self.settings.allowlist)
        self.notifiers = list(notifiers or [])
        self.killer = killer
        self.clock = clock
        self.protected = protected_pids()
        self.host = socket.gethostname()
        self.stats = MonitorStats()
        self.running = False
        self._stop_event: Optional[asyncio.Event] = None
        self._event_log = None
        self.logger = logger

    @classmethod
    def from_settings(cls, detector: BaseDetector, settings: MonitorSettings,
                      notifications: Optional[Dict] = None) -> "ProcessMonitor":
        """Build a monitor, adding a Telegram notifier when configured."""
        notifiers: List[BaseNotifier] = []
        telegram = (notifications or {}).get("telegram")
        if telegram and telegram.get("enabled"):
            notifier = TelegramNotifier(telegram)
            if notifier.is_enabled():
                notifiers.append(notifier)
            else:
                logger.warning("Telegram notifier failed to initialize")
        return cls(detector, settings, notifiers=notifiers)

    @property
    def enforce(self) -> bool:
        return self.settings.enforce

    def _write_event(self, record: dict):
        if self._event_log is not None:
            self._event_log.write(json.dumps(record, sort_keys=True) + "\n")
            self._event_log.flush()

    def _open_event_log(self):
        if self.settings.event_log:
            path = Path(self.settings.event_log)
            path.parent.mkdir(parents=True, exist_ok=True)
            self._event_log = open(path, "a", encoding="utf-8")

    def _close_event_log(self):
        if self._event_log is not None:
            self._event_log.close()
            self._event_log = None

    def sweep(self) -> List[dict]:
        """Run one sample-score-decide cycle; return the verdict events it produced."""
        now = self.clock()
        snapshots = self.sampler.sample()
        tick = self.sampler.state.tick

        self.stats.sweeps += 1
        self.stats.snapshots += len(snapshots)
        self.stats.warnings += len(self.sampler.state.warnings)
        self.stats.sweep_times.append(now)
        self.stats.last_sweep_time = datetime.now()
        self._write_event({"event": "sweep", "tick": tick, "time": now, "processes": len(snapshots)})

        for pid in self.sampler.terminated:
            self.detector.forget(pid)
            self.decider.forget(pid)

        scores = self.detector.score_batch(snapshots)
        names = {s.process_id: s.app_id for s in snapshots}
        events = []
        for pid in sorted(scores):
            verdict = self.decider.observe(pid, tick, scores[pid])
            if verdict is not None:
                events.append(self._act(verdict, names.get(pid), now))
        return events

    def _act(self, verdict: ProcessVerdict, name: Optional[str], now: float) -> dict:
        pid = verdict.process_id
        self.stats.verdicts += 1
        record = {
            "tick": verdict.decided_at_tick,
            "time": now,
            "pid": pid,
            "name": name,
            "score": verdict.score,
            "tree_size": 0,
        }

        if pid in self.protected:
            self.stats.skipped_protected += 1
            self.logger.warning(f"Flagged pid {pid} ({name}) is the monitor or its ancestor; not killing")
            record["event"] = "protected"
        elif self.allowlist.allows(pid, name):
            self.stats.skipped_allowlist += 1
            self.logger.warning(f"Flagged pid {pid} ({name}) is allowlisted; not killing")
            record["event"] = "allowlisted"
        elif not self.enforce:
            self.stats.dry_run_kills += 1
            self.logger.warning(f"would kill pid {pid} ({name}), score {verdict.score:.3f}")
            record["event"] = "would_kill"
        else:
            record["tree_size"] = self.killer(
                pid,
                timeout=self.settings.kill_timeout_s,
                protected=self.protected,
                spare=self.allowlist.allows,
            )
            self.stats.kills += 1
            self.logger.warning(
                f"Killed pid {pid} ({name}) and {max(record['tree_size'] - 1, 0)} descendants, "
                f"score {verdict.score:.3f}"
            )
            record["event"] = "kill"

        self._write_event(record)
        record["verdict"] = verdict
        return record

    async def _send_alerts(self, events: List[dict]):
        if not self.notifiers:
            return
        tasks = []
        for event in events:
            if event["event"] not in ("kill", "would_kill"):
                continue
            for notifier in self.notifiers:
                if notifier.is_enabled():
                    alert = notifier.create_alert(
                        event["verdict"],
                        event["name"] or str(event["pid"]),
                        self.detector.threshold,
                        enforced=event["event"] == "kill",
                        tree_size=max(event["tree_size"], 1),
                        host=self.host,
                    )
                    tasks.append(asyncio.create_task(notifier.send_notification(alert)))
        if tasks:
            results = await asyncio.gather(*tasks, return_exceptions=True)
            self.stats.notifications_sent += sum(1 for r in results if r is True)

    async def run(self, max_sweeps: Optional[int] = None):
        """Sample on a fixed-rate schedule until stopped.

        Raises:
            SamplerError: when the process table cannot be enumerated
        """
        if self.running:
            self.logger.warning("Monitor is already running")
            return

        self.running = True
        self._stop_event = asyncio.Event()
        self.stats = MonitorStats()
        self._open_event_log()
        if self.settings.high_priority:
            request_high_priority()

        mode = "ENFORCING" if self.enforce else "dry run"
        self.logger.info(
            f"Monitoring host {self.host} every {self.settings.period_s}s with {self.detector} ({mode})"
        )

        loop = asyncio.get_running_loop()
        deadline = loop.time()
        try:
            while self.running and not self._stop_event.is_set():
                events = self.sweep()
                await self._send_alerts(events)
                if max_sweeps is not None and self.stats.sweeps >= max_sweeps:
                    break

                deadline += self.settings.period_s
                delay = deadline - loop.time()
                if delay < 0:
                    self.logger.warning(f"Sweep overran the period by {-delay:.3f}s")
                    deadline = loop.time()
                    delay = 0.0
                try:
                    await asyncio.wait_for(self._stop_event.wait(), timeout=delay)
                except asyncio.TimeoutError:
                    pass
        finally:
            self.running = False
            self._close_event_log()
            self.logger.info("Monitoring stopped")

    def stop(self):
        """Stop the loop after the current sweep."""
        if not self.running:
            return
        self.logger.info("Stopping monitor...")
        self.running = False
        if self._stop_event:
            self._stop_event.set()

    def install_signal_handlers(self):
        """Stop gracefully on SIGINT and SIGTERM."""
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            try:
                loop.add_signal_handler(sig, self.stop)
            except (NotImplementedError, RuntimeError):
                signal.signal(sig, lambda signum, frame: self.stop())
