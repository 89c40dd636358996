"""Live per-process sampler built on psutil.

Counter-like metrics (CPU time, disk I/O) are reported as per-second deltas
against the previous sweep; the first observation of a process reports 0.
"""

import logging
import os
import socket
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Set, Tuple

import psutil

from ..exceptions import SamplerError
from .features import FEATURE_COUNT, FEATURE_INDEX, ProcessSnapshot

logger = logging.getLogger("telemetry.sampler")

# Port status buckets: listen, established, wait-type, other.
_WAIT_STATUSES = frozenset({
    psutil.CONN_TIME_WAIT,
    psutil.CONN_CLOSE_WAIT,
    psutil.CONN_FIN_WAIT1,
    psutil.CONN_FIN_WAIT2,
    psutil.CONN_LAST_ACK,
    psutil.CONN_CLOSING,
})

_IO_FIELDS = ("read_bytes", "write_bytes", "other_bytes", "read_count", "write_count", "other_count")

ProcessKey = Tuple[int, float]


@dataclass
class _Counters:
    """Cumulative counters remembered between sweeps."""

    wall: float
    cpu_user: float
    cpu_system: float
    io: Tuple[float, ...]


@dataclass
class SamplerState:
    """Mutable state owned by exactly one sampler per host."""

    tick: int = -1
    previous: Dict[ProcessKey, _Counters] = field(default_factory=dict)
    terminated: Set[int] = field(default_factory=set)
    # Warnings raised by the latest sweep only.
    warnings: List[str] = field(default_factory=list)
    denied: Set[Tuple[int, Optional[float]]] = field(default_factory=set)


def _port_buckets(connections) -> Tuple[int, int, int, int, int, int]:
    """Return (tcp, udp, listen, established, wait, other) counts."""
    tcp = udp = listen = established = wait = other = 0
    for conn in connections:
        if conn.type == socket.SOCK_STREAM:
            tcp += 1
        elif conn.type == socket.SOCK_DGRAM:
            udp += 1
        if conn.status == psutil.CONN_LISTEN:
            listen += 1
        elif conn.status == psutil.CONN_ESTABLISHED:
            established += 1
        elif conn.status in _WAIT_STATUSES:
            wait += 1
        else:
            other += 1
    return tcp, udp, listen, established, wait, other


def _io_priority(proc: psutil.Process) -> float:
    try:
        value = proc.ionice()
    except (AttributeError, psutil.AccessDenied, NotImplementedError):
        return 0.0
    # Linux returns (ioclass, value); Windows returns a plain int.
    return float(getattr(value, "ioclass", value))


def _connections(proc: psutil.Process):
    getter = getattr(proc, "net_connections", None) or proc.connections
    try:
        return getter(kind="inet")
    except psutil.AccessDenied:
        return []


def _handle_count(proc: psutil.Process) -> float:
    if hasattr(proc, "num_handles"):
        return float(proc.num_handles())
    try:
        return float(proc.num_fds())
    except psutil.AccessDenied:
        return 0.0


def _memory(proc: psutil.Process) -> Tuple[float, float, float]:
    try:
        info = proc.memory_full_info()
    except psutil.AccessDenied:
        info = proc.memory_info()
    return float(info.vms), float(info.rss), float(getattr(info, "swap", 0.0))


def _io_counters(proc: psutil.Process) -> Tuple[float, ...]:
    try:
        counters = proc.io_counters()
    except (AttributeError, psutil.AccessDenied, NotImplementedError):
        return (0.0,) * len(_IO_FIELDS)
    return tuple(float(getattr(counters, name, 0.0)) for name in _IO_FIELDS)


def _denied_key(proc: psutil.Process) -> Tuple[int, Optional[float]]:
    try:
        return proc.pid, proc.create_time()
    except psutil.Error:
        return proc.pid, None


def _sample_one(
    proc: psutil.Process,
    state: SamplerState,
    now: float,
    seen: Set[ProcessKey],
) -> Optional[ProcessSnapshot]:
    with proc.oneshot():
        create_time = proc.create_time()
        key = (proc.pid, create_time)
        cpu = proc.cpu_times()
        vms, rss, swap = _memory(proc)
        children = proc.children()
        io = _io_counters(proc)
        connections = _connections(proc)
        tcp, udp, listen, established, wait, other = _port_buckets(connections)

        current = _Counters(wall=now, cpu_user=cpu.user, cpu_system=cpu.system, io=io)
        previous = state.previous.get(key)
        if previous is None:
            cpu_user_pct = cpu_system_pct = 0.0
            io_delta = (0.0,) * len(_IO_FIELDS)
        else:
            elapsed = max(now - previous.wall, 1e-6)
            cpu_user_pct = max(cpu.user - previous.cpu_user, 0.0) / elapsed * 100.0
            cpu_system_pct = max(cpu.system - previous.cpu_system, 0.0) / elapsed * 100.0
            io_delta = tuple(max(c - p, 0.0) for c, p in zip(io, previous.io))

        values = [0.0] * FEATURE_COUNT
        values[FEATURE_INDEX["cpu_system_pct"]] = cpu_system_pct
        values[FEATURE_INDEX["cpu_user_pct"]] = cpu_user_pct
        values[FEATURE_INDEX["mem_total_bytes"]] = vms
        values[FEATURE_INDEX["mem_physical_bytes"]] = rss
        values[FEATURE_INDEX["mem_swap_bytes"]] = swap
        values[FEATURE_INDEX["child_process_count"]] = float(len(children))
        values[FEATURE_INDEX["max_process_id"]] = float(max((c.pid for c in children), default=0))
        values[FEATURE_INDEX["thread_count"]] = float(proc.num_threads())
        for name, delta in zip(_IO_FIELDS, io_delta):
            values[FEATURE_INDEX[f"io_{name}"]] = delta
        values[FEATURE_INDEX["process_priority"]] = float(proc.nice())
        values[FEATURE_INDEX["io_priority"]] = _io_priority(proc)
        values[FEATURE_INDEX["cmdline_arg_count"]] = float(len(proc.cmdline()))
        values[FEATURE_INDEX["handle_count"]] = _handle_count(proc)
        values[FEATURE_INDEX["seconds_since_start"]] = max(now - create_time, 0.0)
        # psutil has no per-process packet counters; open sockets per protocol
        # stand in for them.
        values[FEATURE_INDEX["tcp_packet_count"]] = float(tcp)
        values[FEATURE_INDEX["udp_packet_count"]] = float(udp)
        values[FEATURE_INDEX["open_connection_count"]] = float(len(connections))
        values[FEATURE_INDEX["port_status_1"]] = float(listen)
        values[FEATURE_INDEX["port_status_2"]] = float(established)
        values[FEATURE_INDEX["port_status_3"]] = float(wait)
        values[FEATURE_INDEX["port_status_4"]] = float(other)

        ppid = proc.ppid()
        name = proc.name()

    state.previous[key] = current
    seen.add(key)
    return ProcessSnapshot(
        process_id=proc.pid,
        parent_id=ppid if ppid and ppid != proc.pid else None,
        app_id=name or str(proc.pid),
        tick=state.tick,
        features=tuple(values),
    )


def sample_processes(
    state: SamplerState,
    clock: Callable[[], float] = time.time,
) -> List[ProcessSnapshot]:
    """Take one snapshot of every visible process.

    Advances ``state.tick``, refreshes the remembered counters and replaces
    ``state.terminated`` with the pids that disappeared since the last sweep.
    Permission problems on a single process never abort the sweep; each
    denied process is warned about once, in the sweep that first meets it,
    and ``state.warnings`` holds only this sweep's warnings.
    """
    state.tick += 1
    state.warnings = []
    now = clock()
    seen: Set[ProcessKey] = set()
    denied: Set[Tuple[int, Optional[float]]] = set()
    snapshots: List[ProcessSnapshot] = []

    try:
        processes = list(psutil.process_iter())
    except psutil.Error as e:
        raise SamplerError(f"Could not enumerate processes: {e}") from e

    for proc in processes:
        try:
            snapshot = _sample_one(proc, state, now, seen)
        except psutil.AccessDenied:
            key = _denied_key(proc)
            denied.add(key)
            if key not in state.denied:
                message = f"Permission denied sampling pid {proc.pid}"
                state.warnings.append(message)
                logger.warning(message)
            continue
        except (psutil.NoSuchProcess, psutil.ZombieProcess):
            continue
        if snapshot is not None:
            snapshots.append(snapshot)

    vanished = set(state.previous) - seen
    state.terminated = {pid for pid, _ in vanished}
    for key in vanished:
        del state.previous[key]
    state.denied = denied

    logger.debug(
        f"Sweep {state.tick}: {len(snapshots)} processes, {len(state.terminated)} terminated"
    )
    return snapshots


class ProcessSampler:
    """Thin owner of a SamplerState for the live monitor."""

    def __init__(self, clock: Callable[[], float] = time.time):
        self.state = SamplerState()
        self.clock = clock
        self.own_pid = os.getpid()

    def sample(self) -> List[ProcessSnapshot]:
        return sample_processes(self.state, clock=self.clock)

    @property
    def terminated(self) -> Set[int]:
        return self.state.terminated
