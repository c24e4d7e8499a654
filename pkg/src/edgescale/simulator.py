"""Discrete-event simulation of the edge cluster.

Poisson arrivals per class, exponential service per replica, per-class
FIFO queues with infinite buffers, a scaling decision at every arrival and
departure, and replica placement by first-fit or random-fit. One run is a
single-threaded, totally ordered event loop; identical (config, seed)
pairs produce bit-identical metrics.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from heapq import heappush, heappop
from typing import Callable, Optional

import numpy as np

from .config import ScalingConfig
from .model import Action, Event, SystemState
from .scalers import Scaler

_ARRIVAL, _DEPARTURE = 0, 1


class SimulationError(RuntimeError):
    pass


class Replica:
    """One running function instance, pinned to a node."""

    __slots__ = ("k", "node", "busy", "request_arrival")

    def __init__(self, k: int, node: int):
        self.k = k
        self.node = node
        self.busy = False
        self.request_arrival = 0.0


class Cluster:
    """Simulator-side ground truth: placements, busy/idle replicas, queues."""

    def __init__(self, cfg: ScalingConfig):
        self.cfg = cfg
        self.capacity = list(cfg.capacity)
        self.used = [0] * cfg.n_nodes
        self.replica_count = [0] * cfg.n_classes
        self.busy_count = [0] * cfg.n_classes
        # idle pools rotate FIFO so long-idle replicas still cycle through
        # service and remain candidates for removal at their completions
        self.idle: list[deque[Replica]] = [deque() for _ in range(cfg.n_classes)]
        self.queues: list[deque[float]] = [deque() for _ in range(cfg.n_classes)]

    # -- ClusterView interface ------------------------------------------------

    def queue_len(self, k: int) -> int:
        return len(self.queues[k])

    def total_queued(self) -> int:
        return sum(len(q) for q in self.queues)

    def can_fit(self, k: int) -> bool:
        need = self.cfg.cpu_demand[k]
        return any(c - u >= need for c, u in zip(self.capacity, self.used))

    def replica_counts(self) -> tuple[int, ...]:
        return tuple(self.replica_count)

    def queue_lengths(self) -> tuple[int, ...]:
        return tuple(len(q) for q in self.queues)

    # -- mutation ---------------------------------------------------------------

    def add_replica(self, k: int, node: int) -> Replica:
        need = self.cfg.cpu_demand[k]
        if self.capacity[node] - self.used[node] < need:
            raise SimulationError(f"node {node} cannot host a class-{k} replica")
        self.used[node] += need
        self.replica_count[k] += 1
        return Replica(k, node)

    def release(self, rep: Replica):
        """Remove a non-busy replica (freed capacity going back to its node)."""
        if rep.busy:
            raise SimulationError("cannot remove a busy replica")
        self.used[rep.node] -= self.cfg.cpu_demand[rep.k]
        self.replica_count[rep.k] -= 1


def allocate_first_fit(cluster: Cluster, k: int) -> Optional[int]:
    """Lowest node index with room for a class-k replica; None when full."""
    need = cluster.cfg.cpu_demand[k]
    for n, (c, u) in enumerate(zip(cluster.capacity, cluster.used)):
        if c - u >= need:
            return n
    return None


def allocate_random_fit(cluster: Cluster, k: int, rng: np.random.Generator) -> Optional[int]:
    """Uniform choice among the nodes with room; None when full."""
    need = cluster.cfg.cpu_demand[k]
    candidates = [n for n, (c, u) in enumerate(zip(cluster.capacity, cluster.used)) if c - u >= need]
    if not candidates:
        return None
    return candidates[int(rng.integers(len(candidates)))]


def remove_replica(cluster: Cluster, k: int, node: int):
    """Remove one idle class-k replica from node `node` (contract error if none)."""
    for i, rep in enumerate(cluster.idle[k]):
        if rep.node == node:
            del cluster.idle[k][i]
            cluster.release(rep)
            return
    raise SimulationError(f"no idle class-{k} replica on node {node}")


def snapshot_state(cluster: Cluster, event: Event) -> SystemState:
    """Bridge from cluster ground truth to the decision model's state triple."""
    return SystemState(cluster.replica_counts(), cluster.queue_lengths(), event)


ALLOCATORS = ("ff", "rf")


@dataclass
class SimConfig:
    """One simulation run: horizon, warmup, seed, placement, delays."""

    horizon_events: int
    warmup_events: Optional[int] = None      # default: first 10% of horizon
    seed: int = 0
    allocator: str = "ff"
    transmission_delay: Optional[tuple[float, ...]] = None  # default 0.001 * node index
    initial_replicas: Optional[tuple[int, ...]] = None
    debug_checks: bool = False
    trace_path: Optional[str] = None

    def resolved_warmup(self) -> int:
        return self.horizon_events // 10 if self.warmup_events is None else self.warmup_events

    def validate(self, cfg: ScalingConfig):
        if self.horizon_events < 1:
            raise SimulationError("horizon_events must be >= 1")
        if self.resolved_warmup() >= self.horizon_events:
            raise SimulationError("warmup_events must be smaller than horizon_events")
        if self.allocator not in ALLOCATORS:
            raise SimulationError(f"unknown allocator {self.allocator!r}; expected one of {ALLOCATORS}")
        delays = self.resolved_delays(cfg)
        if len(delays) != cfg.n_nodes:
            raise SimulationError("transmission_delay needs one entry per node")
        if any(d < 0 for d in delays):
            raise SimulationError("transmission delays must be non-negative")
        if self.initial_replicas is not None and len(self.initial_replicas) != cfg.n_classes:
            raise SimulationError("initial_replicas needs one entry per class")

    def resolved_delays(self, cfg: ScalingConfig) -> tuple[float, ...]:
        if self.transmission_delay is None:
            return tuple(0.001 * n for n in range(cfg.n_nodes))
        return tuple(float(d) for d in self.transmission_delay)


@dataclass
class RunMetrics:
    """Post-warmup aggregates of one run (counts also kept for conservation checks)."""

    seed: int
    arrivals: int
    completed: int
    avg_delay: Optional[float]
    avg_delay_per_class: tuple[Optional[float], ...]
    avg_replicas: float                         # time-weighted, total over classes
    avg_replicas_per_class: tuple[float, ...]
    avg_replicas_event_sampled: float
    throughput: float
    total_reward: float
    max_queue: int
    downgraded_scaleups: int
    measured_time: float
    horizon_time: float
    total_arrivals: int
    total_completed: int
    final_queued: int
    final_in_service: int


def rng_streams(seed: int) -> tuple[np.random.Generator, ...]:
    """Independent, reproducible streams: arrivals, services, allocator, scaler.

    Keeping the streams separate means runs that differ only in placement or
    decision policy share identical arrival processes (common random numbers).
    """
    ss = np.random.SeedSequence(seed)
    return tuple(np.random.default_rng(child) for child in ss.spawn(4))


def scaler_stream(seed: int) -> np.random.Generator:
    return rng_streams(seed)[3]


def run(cfg: ScalingConfig, sim: SimConfig, scaler: Scaler) -> RunMetrics:
    """Drive the event loop for `sim.horizon_events` events and aggregate metrics."""
    sim.validate(cfg)
    K = cfg.n_classes
    lam = cfg.arrival_rate
    mu = cfg.service_rate
    income = cfg.income
    unit_cost = cfg.unit_cost
    demand = cfg.cpu_demand
    delays = sim.resolved_delays(cfg)
    rng_arr, rng_svc, rng_alloc, _ = rng_streams(sim.seed)

    cluster = Cluster(cfg)
    if sim.allocator == "ff":
        allocate: Callable[[int], Optional[int]] = lambda k: allocate_first_fit(cluster, k)
    else:
        allocate = lambda k: allocate_random_fit(cluster, k, rng_alloc)

    if sim.initial_replicas:
        for k, count in enumerate(sim.initial_replicas):
            for _ in range(count):
                node = allocate(k)
                if node is None:
                    raise SimulationError(f"initial replicas of class {k} do not fit")
                cluster.idle[k].append(cluster.add_replica(k, node))

    heap: list[tuple[float, int, int, int, Optional[Replica]]] = []
    seq = 0
    for k in range(K):
        heappush(heap, (rng_arr.exponential(1.0 / lam[k]), seq, _ARRIVAL, k, None))
        seq += 1

    trace = open(sim.trace_path, "w") if sim.trace_path else None
    if trace:
        trace.write("time\tevent\tclass\tnode\taction\tqueues\n")

    warmup = sim.resolved_warmup()
    measuring = warmup == 0
    t_start = 0.0
    t_last = 0.0
    processed = 0

    total_arrivals = 0
    total_completed = 0
    arrivals_m = 0
    completed_m = 0
    completed_k = [0] * K
    delay_sum = 0.0
    delay_sum_k = [0.0] * K
    income_m = 0.0
    hold_area = 0.0
    repl_area = 0.0
    repl_area_k = [0.0] * K
    repl_event_sum = 0
    event_samples = 0
    max_queue = 0
    downgraded = 0

    last_started_arrival = [-math.inf] * K  # FIFO check, debug mode

    def holding_rate() -> float:
        rate = 0.0
        for k in range(K):
            rate += unit_cost * demand[k] * cluster.replica_count[k]
            rate += len(cluster.queues[k]) / lam[k]
        return rate

    def start_service(rep: Replica, now: float):
        arrival_time = cluster.queues[rep.k].popleft()
        if sim.debug_checks:
            if arrival_time < last_started_arrival[rep.k]:
                raise SimulationError("FIFO violated: service starts out of arrival order")
            last_started_arrival[rep.k] = arrival_time
        rep.busy = True
        rep.request_arrival = arrival_time
        cluster.busy_count[rep.k] += 1
        nonlocal seq
        heappush(heap, (now + rng_svc.exponential(1.0 / mu[rep.k]), seq, _DEPARTURE, rep.k, rep))
        seq += 1

    t = 0.0
    while processed < sim.horizon_events:
        t, _, kind, k, rep = heappop(heap)
        if measuring:
            dt = t - t_last
            total_replicas = sum(cluster.replica_count)
            repl_area += total_replicas * dt
            for kk in range(K):
                repl_area_k[kk] += cluster.replica_count[kk] * dt
            hold_area += holding_rate() * dt
            repl_event_sum += total_replicas
            event_samples += 1
        t_last = t
        processed += 1

        if kind == _ARRIVAL:
            total_arrivals += 1
            heappush(heap, (t + rng_arr.exponential(1.0 / lam[k]), seq, _ARRIVAL, k, None))
            seq += 1
            scaler.observe_arrival(k, t)
            action = scaler.decide(Event.arrival(k), cluster, t)
            new_rep = None
            if action is Action.UP:
                node = allocate(k)
                if node is None:
                    action = Action.HOLD
                    downgraded += 1
                else:
                    new_rep = cluster.add_replica(k, node)
            cluster.queues[k].append(t)
            if new_rep is not None:
                start_service(new_rep, t)
            elif cluster.idle[k]:
                start_service(cluster.idle[k].popleft(), t)
            if measuring:
                arrivals_m += 1
                income_m += income[k]
            qlen = len(cluster.queues[k])
            if qlen > max_queue:
                max_queue = qlen
            node_for_trace = new_rep.node if new_rep is not None else -1
        else:
            total_completed += 1
            rep.busy = False
            cluster.busy_count[k] -= 1
            if measuring:
                completed_m += 1
                completed_k[k] += 1
                d = t - rep.request_arrival + delays[rep.node]
                delay_sum += d
                delay_sum_k[k] += d
            action = scaler.decide(Event.departure(k, rep.node), cluster, t)
            if action is Action.DOWN:
                cluster.release(rep)
            elif cluster.queues[k]:
                start_service(rep, t)
            else:
                cluster.idle[k].append(rep)
            node_for_trace = rep.node

        if trace:
            joined = ",".join(str(len(q)) for q in cluster.queues)
            kind_name = "A" if kind == _ARRIVAL else "D"
            trace.write(
                f"{t!r}\t{kind_name}\t{k}\t{node_for_trace}\t{action.short_name}\t{joined}\n"
            )
        if sim.debug_checks:
            _verify_invariants(cluster)
        if not measuring and processed == warmup:
            measuring = True
            t_start = t
            t_last = t

    if trace:
        trace.close()

    in_service = sum(cluster.busy_count)
    queued = cluster.total_queued()
    if total_arrivals != total_completed + queued + in_service:
        raise SimulationError(
            "conservation violated: "
            f"{total_arrivals} arrivals != {total_completed} completed + "
            f"{queued} queued + {in_service} in service"
        )

    measured_time = t_last - t_start
    avg_delay = delay_sum / completed_m if completed_m else None
    per_class_delay = tuple(
        (delay_sum_k[k] / completed_k[k]) if completed_k[k] else None for k in range(K)
    )
    if measured_time > 0:
        avg_repl = repl_area / measured_time
        per_class_repl = tuple(a / measured_time for a in repl_area_k)
        throughput = completed_m / measured_time
    else:
        avg_repl = float(sum(cluster.replica_count))
        per_class_repl = tuple(float(c) for c in cluster.replica_count)
        throughput = 0.0
    return RunMetrics(
        seed=sim.seed,
        arrivals=arrivals_m,
        completed=completed_m,
        avg_delay=avg_delay,
        avg_delay_per_class=per_class_delay,
        avg_replicas=avg_repl,
        avg_replicas_per_class=per_class_repl,
        avg_replicas_event_sampled=(repl_event_sum / event_samples) if event_samples else 0.0,
        throughput=throughput,
        total_reward=income_m - hold_area,
        max_queue=max_queue,
        downgraded_scaleups=downgraded,
        measured_time=measured_time,
        horizon_time=t_last,
        total_arrivals=total_arrivals,
        total_completed=total_completed,
        final_queued=queued,
        final_in_service=in_service,
    )


def _verify_invariants(cluster: Cluster):
    for n, (c, u) in enumerate(zip(cluster.capacity, cluster.used)):
        if u > c:
            raise SimulationError(f"capacity violated on node {n}: {u} > {c}")
        if u < 0:
            raise SimulationError(f"negative usage on node {n}")
    for k in range(cluster.cfg.n_classes):
        if cluster.idle[k] and cluster.queues[k]:
            raise SimulationError(
                f"work conservation violated: class {k} has idle replicas and a non-empty queue"
            )
        if cluster.replica_count[k] != len(cluster.idle[k]) + cluster.busy_count[k]:
            raise SimulationError(f"replica bookkeeping off for class {k}")
