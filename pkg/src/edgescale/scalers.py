"""Scaling decision strategies used by the simulator.

Three interchangeable deciders: a solved-policy lookup, a monitoring
heuristic (scale up when the observed load crosses a threshold, scale down
when the class queue empties), and a random baseline. All of them respect
the event discipline: never scale down on an arrival, never scale up on a
departure.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np

from .config import EventMode, ScalingConfig
from .model import Action, Event, SystemState
from .solver import PolicyTable


@dataclass
class DecisionContext:
    """Everything a heuristic needs to know at one decision epoch."""

    event: Event
    queue_len: int              # waiting requests of the event's class
    total_queue_empty: bool
    capacity_available: bool    # a replica of the event's class fits on some node
    load: float                 # per-class load estimate (heuristics only)
    clock: float


class ClusterView(Protocol):
    """Simulator-side snapshot interface the scalers consume."""

    def queue_len(self, k: int) -> int: ...
    def total_queued(self) -> int: ...
    def can_fit(self, k: int) -> bool: ...
    def replica_counts(self) -> tuple[int, ...]: ...
    def queue_lengths(self) -> tuple[int, ...]: ...


class LoadEstimator:
    """Sliding-window arrival-rate tracker, normalized by service capacity.

    The estimate for class k is (arrivals inside the window / window
    length) / (mu_k * max(replicas_k, 1)) -- an offered-load-per-capacity
    ratio, 0 while the window is empty. Default window length per class is
    50 expected inter-arrival times.
    """

    def __init__(self, cfg: ScalingConfig, window: Optional[float] = None,
                 interarrivals: float = 50.0):
        if window is not None:
            self.windows = tuple(float(window) for _ in range(cfg.n_classes))
        else:
            self.windows = tuple(interarrivals / lam for lam in cfg.arrival_rate)
        self.service_rate = cfg.service_rate
        self.arrivals: list[deque[float]] = [deque() for _ in range(cfg.n_classes)]
        self.replicas: tuple[int, ...] = (0,) * cfg.n_classes

    def observe(self, k: int, now: float):
        self.arrivals[k].append(now)

    def set_replicas(self, counts: Sequence[int]):
        self.replicas = tuple(counts)

    def estimate(self, k: int, now: float) -> float:
        window = self.windows[k]
        buf = self.arrivals[k]
        cutoff = now - window
        while buf and buf[0] < cutoff:
            buf.popleft()
        if not buf:
            return 0.0
        rate = len(buf) / window
        return rate / (self.service_rate[k] * max(self.replicas[k], 1))


def estimate_load(estimator: LoadEstimator, k: int, now: float) -> float:
    """Current load estimate for class k (see LoadEstimator)."""
    return estimator.estimate(k, now)


def monitoring_decide(ctx: DecisionContext, threshold: float) -> Action:
    """Threshold heuristic: on an arrival, scale up iff capacity is available
    and the load exceeds the threshold; on a departure, scale down iff the
    class queue is empty."""
    if ctx.event.is_departure:
        return Action.DOWN if ctx.queue_len == 0 else Action.HOLD
    if ctx.capacity_available and ctx.load > threshold:
        return Action.UP
    return Action.HOLD


def random_decide(ctx: DecisionContext, rng: np.random.Generator, p_up: float = 0.5) -> Action:
    """Coin-flip baseline: scale up with probability p_up whenever an arrival
    finds capacity; departures behave like the monitoring heuristic."""
    if ctx.event.is_departure:
        return Action.DOWN if ctx.queue_len == 0 else Action.HOLD
    if ctx.capacity_available and rng.random() < p_up:
        return Action.UP
    return Action.HOLD


def smdp_decide(ctx: DecisionContext, snapshot: SystemState, table: PolicyTable) -> Action:
    """Policy-table lookup: clamp the live state into the table's enumeration
    bounds, read the action, and downgrade a scale-up the live cluster
    cannot place to hold."""
    action = table.lookup(snapshot)
    if action is Action.UP and not ctx.capacity_available:
        return Action.HOLD
    return action


class Scaler:
    """Base class; concrete scalers override decide()."""

    name = "base"

    def observe_arrival(self, k: int, now: float):
        """Called by the simulator for every arrival, before decide()."""

    def decide(self, event: Event, view: ClusterView, now: float) -> Action:
        raise NotImplementedError

    def context(self, event: Event, view: ClusterView, now: float, load: float = 0.0
                ) -> DecisionContext:
        return DecisionContext(
            event=event,
            queue_len=view.queue_len(event.k),
            total_queue_empty=view.total_queued() == 0,
            capacity_available=view.can_fit(event.k),
            load=load,
            clock=now,
        )


class SmdpScaler(Scaler):
    name = "smdp"

    def __init__(self, table: PolicyTable):
        self.table = table

    def decide(self, event: Event, view: ClusterView, now: float) -> Action:
        if self.table.event_mode is EventMode.AGGREGATED and event.node is not None:
            event = Event.departure(event.k)
        snapshot = SystemState(view.replica_counts(), view.queue_lengths(), event)
        return smdp_decide(self.context(event, view, now), snapshot, self.table)


class MonitoringScaler(Scaler):
    name = "mnt"

    def __init__(self, threshold: float, estimator: LoadEstimator):
        self.threshold = float(threshold)
        self.estimator = estimator

    def observe_arrival(self, k: int, now: float):
        self.estimator.observe(k, now)

    def decide(self, event: Event, view: ClusterView, now: float) -> Action:
        self.estimator.set_replicas(view.replica_counts())
        load = 0.0
        if not event.is_departure:
            load = self.estimator.estimate(event.k, now)
        return monitoring_decide(self.context(event, view, now, load), self.threshold)


class RandomScaler(Scaler):
    name = "rf"

    def __init__(self, rng: np.random.Generator, p_up: float = 0.5):
        self.rng = rng
        self.p_up = p_up

    def decide(self, event: Event, view: ClusterView, now: float) -> Action:
        return random_decide(self.context(event, view, now), self.rng, self.p_up)


class PinnedScaler(Scaler):
    """Never scales; used with a fixed initial replica placement."""

    name = "pinned"

    def decide(self, event: Event, view: ClusterView, now: float) -> Action:
        return Action.HOLD


def make_scaler(
    name: str,
    cfg: ScalingConfig,
    rng: np.random.Generator,
    threshold: Optional[float] = None,
    policy_table: Optional[PolicyTable] = None,
    window: Optional[float] = None,
    window_interarrivals: float = 50.0,
) -> Scaler:
    """Instantiate a scaler by its CLI name: smdp, mnt, rf, or pinned."""
    if name == "smdp":
        if policy_table is None:
            raise ValueError("smdp scaler needs a solved policy (run the solve command first)")
        return SmdpScaler(policy_table)
    if name == "mnt":
        if threshold is None:
            raise ValueError("mnt scaler needs a threshold")
        estimator = LoadEstimator(cfg, window=window, interarrivals=window_interarrivals)
        return MonitoringScaler(threshold, estimator)
    if name == "rf":
        return RandomScaler(rng)
    if name == "pinned":
        return PinnedScaler()
    raise ValueError(f"unknown scaler {name!r}; expected smdp, mnt, rf, or pinned")
