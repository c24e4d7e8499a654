"""Decision model of the scaling problem.

States are (replica vector, queue vector, pending event) triples over a
truncated, enumerable space. Events are request arrivals and request
departures per class; at every event the scaler picks one of scale-up,
hold, or scale-down. Sojourn times between events are exponential, so the
process is a semi-Markov decision process; this module defines its action
sets, event rates, transition kernel, and rewards.
"""
from __future__ import annotations

from enum import Enum, IntEnum
from typing import Iterator, NamedTuple, Optional

from .config import EventMode, ScalingConfig


class ModelError(ValueError):
    """A model-level contract violation (invalid state, infeasible action, ...)."""


class StateSpaceTooLarge(ModelError):
    def __init__(self, count: int, limit: int, exact: bool = True):
        qualifier = "" if exact else "at least "
        super().__init__(
            f"state space too large: {qualifier}{count} states exceed the safety limit of {limit}"
        )
        self.count = count
        self.limit = limit
        self.exact = exact


class Action(IntEnum):
    """Scaling decision. Order encodes the tie-break preference (hold first)."""

    HOLD = 0
    UP = 1
    DOWN = 2

    @property
    def delta(self) -> int:
        """Replica-count change: +1, 0 or -1."""
        return {Action.HOLD: 0, Action.UP: 1, Action.DOWN: -1}[self]

    @classmethod
    def from_name(cls, name: str) -> "Action":
        return {"hold": cls.HOLD, "up": cls.UP, "down": cls.DOWN}[name.lower()]

    @property
    def short_name(self) -> str:
        return {Action.HOLD: "hold", Action.UP: "up", Action.DOWN: "down"}[self]


N_ACTIONS = 3


class Event(NamedTuple):
    """A pending arrival or departure. Class/node indices are 0-based."""

    is_departure: bool
    k: int
    node: Optional[int] = None  # set only for node-indexed departures

    @classmethod
    def arrival(cls, k: int) -> "Event":
        return cls(False, k, None)

    @classmethod
    def departure(cls, k: int, node: Optional[int] = None) -> "Event":
        return cls(True, k, node)

    def label(self) -> str:
        if not self.is_departure:
            return f"A{self.k}"
        if self.node is None:
            return f"D{self.k}"
        return f"D{self.k}@{self.node}"

    @classmethod
    def from_label(cls, text: str) -> "Event":
        if text.startswith("A"):
            return cls.arrival(int(text[1:]))
        if text.startswith("D"):
            body = text[1:]
            if "@" in body:
                k, node = body.split("@")
                return cls.departure(int(k), int(node))
            return cls.departure(int(body))
        raise ModelError(f"bad event label {text!r}")


class SystemState(NamedTuple):
    replicas: tuple[int, ...]
    queue: tuple[int, ...]
    event: Event


class Transition(NamedTuple):
    next: SystemState
    prob: float


def validate_state(s: SystemState, cfg: ScalingConfig):
    """Raise ModelError unless `s` satisfies every state invariant under `cfg`."""
    K = cfg.n_classes
    if len(s.replicas) != K or len(s.queue) != K:
        raise ModelError(f"state arity mismatch for K={K}: {s}")
    if any(d < 0 or d > cfg.max_replicas for d in s.replicas):
        raise ModelError(f"replica count out of [0, {cfg.max_replicas}]: {s}")
    if any(q < 0 or q > cfg.max_queue for q in s.queue):
        raise ModelError(f"queue length out of [0, {cfg.max_queue}]: {s}")
    if _used_units(s.replicas, cfg) > cfg.total_capacity:
        raise ModelError(f"aggregate capacity exceeded: {s}")
    ev = s.event
    if ev.k < 0 or ev.k >= K:
        raise ModelError(f"event class out of range: {s}")
    if ev.is_departure:
        if s.replicas[ev.k] < 1:
            raise ModelError(f"departure event with no replica of class {ev.k}: {s}")
        node_indexed = cfg.event_mode is EventMode.NODE_INDEXED
        if node_indexed and (ev.node is None or not 0 <= ev.node < cfg.n_nodes):
            raise ModelError(f"node-indexed departure with bad node: {s}")
        if not node_indexed and ev.node is not None:
            raise ModelError(f"aggregated config cannot hold node-indexed event: {s}")
    elif ev.node is not None:
        raise ModelError(f"arrival events carry no node: {s}")


def _used_units(replicas, cfg) -> int:
    return sum(b * d for b, d in zip(cfg.cpu_demand, replicas))


def feasible_actions(s: SystemState, cfg: ScalingConfig) -> tuple[Action, ...]:
    """Actions allowed at `s`: hold always; scale-up only on arrivals with
    headroom in both the replica cap and the aggregate capacity; scale-down
    only on departures of a class that has a replica."""
    validate_state(s, cfg)
    k = s.event.k
    if s.event.is_departure:
        if s.replicas[k] >= 1:
            return (Action.HOLD, Action.DOWN)
        return (Action.HOLD,)
    fits = _used_units(s.replicas, cfg) + cfg.cpu_demand[k] <= cfg.total_capacity
    if s.replicas[k] < cfg.max_replicas and fits:
        return (Action.HOLD, Action.UP)
    return (Action.HOLD,)


def apply_action(
    s: SystemState, a: Action, cfg: ScalingConfig
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Post-decision (replicas, queue). Queues move only under hold: an
    arrival joins the (truncated) queue, a departure lets the freed replica
    pull one queued request. Replica counts move only under up/down."""
    if a not in feasible_actions(s, cfg):
        raise ModelError(f"action {a.name} infeasible in {s}")
    k = s.event.k
    replicas, queue = list(s.replicas), list(s.queue)
    if s.event.is_departure:
        if a is Action.DOWN:
            replicas[k] -= 1
        else:
            queue[k] = max(queue[k] - 1, 0)
    else:
        if a is Action.UP:
            replicas[k] += 1
        else:
            queue[k] = min(queue[k] + 1, cfg.max_queue)
    return tuple(replicas), tuple(queue)


def event_rate(s: SystemState, a: Action, cfg: ScalingConfig) -> float:
    """Total event rate gamma(s, a) out of the decision epoch.

    Sum of all arrival rates plus the post-decision aggregate departure
    rate; always strictly positive because arrival rates are positive.
    """
    lam_total = cfg.total_arrival_rate
    theta = sum(d * mu for d, mu in zip(s.replicas, cfg.service_rate))
    mu_k = cfg.service_rate[s.event.k]
    if not s.event.is_departure and a is Action.UP:
        return lam_total + theta + mu_k
    if s.event.is_departure and a is Action.DOWN:
        return lam_total + theta - mu_k
    return lam_total + theta


def transitions(s: SystemState, a: Action, cfg: ScalingConfig) -> list[Transition]:
    """Successor distribution: one arrival target per class with mass
    lambda_k'/gamma, one departure target per class holding a replica with
    mass delta'_k'*mu_k'/gamma (split evenly over nodes when node-indexed).
    """
    replicas, queue = apply_action(s, a, cfg)
    gamma = event_rate(s, a, cfg)
    out = []
    for kp in range(cfg.n_classes):
        out.append(
            Transition(
                SystemState(replicas, queue, Event.arrival(kp)),
                cfg.arrival_rate[kp] / gamma,
            )
        )
    node_indexed = cfg.event_mode is EventMode.NODE_INDEXED
    for kp in range(cfg.n_classes):
        if replicas[kp] < 1:
            continue
        mass = replicas[kp] * cfg.service_rate[kp] / gamma
        if node_indexed:
            share = mass / cfg.n_nodes
            for n in range(cfg.n_nodes):
                out.append(
                    Transition(SystemState(replicas, queue, Event.departure(kp, n)), share)
                )
        else:
            out.append(Transition(SystemState(replicas, queue, Event.departure(kp)), mass))
    return out


def holding_cost(replicas, queue, cfg: ScalingConfig) -> float:
    """Cost rate held until the next epoch, on the post-decision configuration:
    CPU utilization cost plus the Little's-law queue-delay term."""
    processing = sum(
        cfg.unit_cost * b * d for b, d in zip(cfg.cpu_demand, replicas)
    )
    queuing = sum(q / lam for q, lam in zip(queue, cfg.arrival_rate))
    return processing + queuing


def income(s: SystemState, a: Action, cfg: ScalingConfig) -> float:
    """Lump income: w_k when accepting an arrival of class k, zero on departures."""
    if s.event.is_departure:
        return 0.0
    return cfg.income[s.event.k]


def reward(s: SystemState, a: Action, cfg: ScalingConfig) -> float:
    """Expected discounted one-epoch reward r(s,a) = w - c / (alpha + gamma).

    The holding-cost rate is integrated against e^{-alpha t} over the
    exponential sojourn, which contributes the 1/(alpha + gamma) factor.
    """
    replicas, queue = apply_action(s, a, cfg)
    c = holding_cost(replicas, queue, cfg)
    return income(s, a, cfg) - c / (cfg.discount + event_rate(s, a, cfg))


DEFAULT_STATE_LIMIT = 2_000_000


def _iter_states(cfg: ScalingConfig) -> Iterator[SystemState]:
    """All valid states in a stable lexicographic order: replicas, then queue,
    then event (arrivals by class, then departures by class and node)."""
    K = cfg.n_classes
    node_indexed = cfg.event_mode is EventMode.NODE_INDEXED

    def replica_vectors(prefix, units_left, k):
        if k == K:
            yield tuple(prefix)
            return
        b = cfg.cpu_demand[k]
        top = min(cfg.max_replicas, units_left // b)
        for d in range(top + 1):
            prefix.append(d)
            yield from replica_vectors(prefix, units_left - d * b, k + 1)
            prefix.pop()

    def queue_vectors(prefix, k):
        if k == K:
            yield tuple(prefix)
            return
        for q in range(cfg.max_queue + 1):
            prefix.append(q)
            yield from queue_vectors(prefix, k + 1)
            prefix.pop()

    for replicas in replica_vectors([], cfg.total_capacity, 0):
        for queue in queue_vectors([], 0):
            for k in range(K):
                yield SystemState(replicas, queue, Event.arrival(k))
            for k in range(K):
                if replicas[k] < 1:
                    continue
                if node_indexed:
                    for n in range(cfg.n_nodes):
                        yield SystemState(replicas, queue, Event.departure(k, n))
                else:
                    yield SystemState(replicas, queue, Event.departure(k))


def count_states(cfg: ScalingConfig) -> int:
    """Exact size of the enumerable state space (without materializing it)."""
    return sum(1 for _ in _iter_states(cfg))


def enumeration_upper_bound(cfg: ScalingConfig) -> int:
    """Cheap combinatorial bound on the enumerable state count (ignores the
    capacity filter and empty-class departure exclusions)."""
    if cfg.n_classes == 0:
        return 0
    per_event = cfg.n_nodes if cfg.event_mode is EventMode.NODE_INDEXED else 1
    return (
        (cfg.max_replicas + 1) ** cfg.n_classes
        * (cfg.max_queue + 1) ** cfg.n_classes
        * cfg.n_classes
        * (1 + per_event)
    )


def enumerate_states(
    cfg: ScalingConfig, limit: int = DEFAULT_STATE_LIMIT
) -> list[SystemState]:
    """Deterministic, duplicate-free enumeration of the truncated state space.

    The position of each state in the returned list is its index everywhere
    else in the package (value tables, policies, stationary distributions).
    Raises StateSpaceTooLarge when the space exceeds `limit`.
    """
    states = []
    for s in _iter_states(cfg):
        states.append(s)
        if len(states) > limit:
            # Counting the rest could itself be intractable; name the cheap
            # combinatorial bound instead of the exact count.
            raise StateSpaceTooLarge(enumeration_upper_bound(cfg), limit, exact=False)
    return states


class SizeFormula(Enum):
    CLOSED_FORM = "closed_form"
    EXACT = "exact"


def closed_form_state_count(max_replicas: int, max_queue: int, n_classes: int, n_nodes: int) -> int:
    """Closed-form state count M^K * Qm^K * K * (N+1).

    Counts neither capacity-infeasible replica vectors nor the exclusion of
    departure events for empty classes, so it differs from the exact
    enumeration; both are exposed on purpose.
    """
    return (max_replicas ** n_classes) * (max_queue ** n_classes) * n_classes * (n_nodes + 1)


def state_space_size(cfg: ScalingConfig, formula: SizeFormula | str = SizeFormula.EXACT) -> int:
    formula = SizeFormula(formula)
    if formula is SizeFormula.CLOSED_FORM:
        return closed_form_state_count(cfg.max_replicas, cfg.max_queue, cfg.n_classes, cfg.n_nodes)
    return count_states(cfg)
