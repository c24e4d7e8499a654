"""Problem-instance configuration: cluster shape, workload rates, economics, truncation bounds."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import yaml


class ConfigError(ValueError):
    """Raised when a configuration violates its invariants."""


class EventMode(str, Enum):
    """Whether departure events carry the node they occurred on.

    Aggregated is the working mode; node-indexed exists so the enumerated
    state count can be compared against the K*(N+1)-style closed formula.
    """

    AGGREGATED = "aggregated"
    NODE_INDEXED = "node_indexed"


def _as_tuple(xs, cast):
    if isinstance(xs, (int, float, str)):
        xs = [xs]
    return tuple(cast(x) for x in xs)


@dataclass(frozen=True)
class ScalingConfig:
    """One scaling problem instance.

    Per-class sequences are indexed 0..n_classes-1, per-node sequences
    0..n_nodes-1. `max_replicas`/`max_queue` are enumeration truncation
    bounds for the decision model only; the simulator keeps true infinite
    buffers.
    """

    n_nodes: int
    n_classes: int
    cpu_demand: tuple[int, ...]        # CPU units per replica, per class
    capacity: tuple[int, ...]          # CPU units per node
    arrival_rate: tuple[float, ...]    # requests / unit time, per class
    service_rate: tuple[float, ...]    # completions / unit time per replica, per class
    income: tuple[float, ...]          # lump income per accepted request, per class
    unit_cost: float                   # cost per CPU unit per unit time
    discount: float                    # continuous-time discount rate
    epsilon: float                     # value-iteration stopping tolerance
    max_replicas: int                  # per-class replica cap (model truncation)
    max_queue: int                     # per-class queue cap (model truncation)
    event_mode: EventMode = EventMode.AGGREGATED

    def __post_init__(self):
        # YAML 1.1 reads exponent literals without a dot ("1e-06") as strings,
        # so scalars are coerced here rather than trusted from the loader.
        for name, cast in (
            ("n_nodes", int), ("n_classes", int), ("max_replicas", int),
            ("max_queue", int), ("unit_cost", float), ("discount", float),
            ("epsilon", float),
        ):
            object.__setattr__(self, name, cast(getattr(self, name)))
        object.__setattr__(self, "cpu_demand", _as_tuple(self.cpu_demand, int))
        object.__setattr__(self, "capacity", _as_tuple(self.capacity, int))
        object.__setattr__(self, "arrival_rate", _as_tuple(self.arrival_rate, float))
        object.__setattr__(self, "service_rate", _as_tuple(self.service_rate, float))
        object.__setattr__(self, "income", _as_tuple(self.income, float))
        object.__setattr__(self, "event_mode", EventMode(self.event_mode))
        self._validate()

    def _validate(self):
        if self.n_nodes < 1:
            raise ConfigError("n_nodes must be >= 1")
        if self.n_classes < 0:
            raise ConfigError("n_classes must be >= 0")
        for name, want in (
            ("cpu_demand", self.n_classes),
            ("arrival_rate", self.n_classes),
            ("service_rate", self.n_classes),
            ("income", self.n_classes),
            ("capacity", self.n_nodes),
        ):
            got = len(getattr(self, name))
            if got != want:
                raise ConfigError(f"{name} has {got} entries, expected {want}")
        if any(c < 1 for c in self.capacity):
            raise ConfigError("node capacities must be positive integers")
        if any(b < 1 for b in self.cpu_demand):
            raise ConfigError("cpu_demand entries must be positive integers")
        if self.n_classes and max(self.cpu_demand) > max(self.capacity):
            raise ConfigError(
                "every class must fit on at least one node: "
                f"max cpu_demand {max(self.cpu_demand)} > max capacity {max(self.capacity)}"
            )
        if any(r <= 0 for r in self.arrival_rate):
            raise ConfigError("arrival rates must be strictly positive")
        if any(r <= 0 for r in self.service_rate):
            raise ConfigError("service rates must be strictly positive")
        if any(w < 0 for w in self.income):
            raise ConfigError("income must be non-negative")
        if self.unit_cost < 0:
            raise ConfigError("unit_cost must be non-negative")
        if self.discount <= 0:
            raise ConfigError("discount must be strictly positive")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be strictly positive")
        if self.max_replicas < 1:
            raise ConfigError("max_replicas must be >= 1")
        if self.max_queue < 0:
            raise ConfigError("max_queue must be >= 0")

    # -- derived quantities -------------------------------------------------

    @property
    def total_capacity(self) -> int:
        return sum(self.capacity)

    @property
    def total_arrival_rate(self) -> float:
        return sum(self.arrival_rate)

    def scaled_arrivals(self, factor: float) -> "ScalingConfig":
        """Copy of this config with every arrival rate multiplied by `factor`."""
        return self.replace(arrival_rate=tuple(factor * lam for lam in self.arrival_rate))

    def replace(self, **changes) -> "ScalingConfig":
        d = self.to_dict()
        d.update(changes)
        return ScalingConfig.from_dict(d)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["cpu_demand"] = list(self.cpu_demand)
        d["capacity"] = list(self.capacity)
        d["arrival_rate"] = list(self.arrival_rate)
        d["service_rate"] = list(self.service_rate)
        d["income"] = list(self.income)
        d["event_mode"] = self.event_mode.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = known - set(d) - {"event_mode"}
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        return cls(**d)

    def save(self, path: str | Path):
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))

    def hash(self) -> str:
        """Stable content hash, used to tie policy files to the instance they solve."""
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path: str | Path) -> ScalingConfig:
    """Load a ScalingConfig from a YAML (or JSON) file."""
    with open(path) as fh:
        d = yaml.safe_load(fh)
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return ScalingConfig.from_dict(d)


def apply_overrides(d: dict, overrides: Sequence[str]) -> dict:
    """Apply `key=value` (dotted keys allowed) overrides to a config mapping.

    Values are parsed as YAML scalars, so `--set arrival_rate=[2, 11]` and
    `--set unit_cost=0` behave as expected. Returns the parsed overrides.
    """
    parsed: dict[str, Any] = {}
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        value = yaml.safe_load(raw) if raw != "" else None
        target = d
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in target or not isinstance(target[part], dict):
                raise ConfigError(f"override {item!r} references unknown key {part!r}")
            target = target[part]
        if parts[-1] not in target:
            raise ConfigError(f"override {item!r} references unknown key {parts[-1]!r}")
        target[parts[-1]] = value
        parsed[key] = value
    return parsed


# -- bundled scenarios -----------------------------------------------------
#
# Two reference networks. Per-class arrival and service rates are spread
# evenly across the scenario's rate range; sweeps report the mean rate.


def _spread(lo: float, hi: float, n: int) -> tuple[float, ...]:
    if n == 1:
        return (float(lo),)
    step = (hi - lo) / (n - 1)
    return tuple(lo + i * step for i in range(n))


def small_network(n_classes: int = 5, n_nodes: int = 3, **overrides) -> ScalingConfig:
    """Small reference network: 3 nodes x 16 CPU units, 5 classes."""
    d = dict(
        n_nodes=n_nodes,
        n_classes=n_classes,
        cpu_demand=tuple(range(1, n_classes + 1)),
        capacity=(16,) * n_nodes,
        arrival_rate=_spread(2.0, 11.0, n_classes),
        service_rate=_spread(1.0, 11.0, n_classes),
        income=(1.0,) * n_classes,
        unit_cost=1.0,
        discount=5.0,
        epsilon=1e-4,
        max_replicas=2,
        max_queue=2,
        event_mode=EventMode.AGGREGATED.value,
    )
    d.update(overrides)
    return ScalingConfig.from_dict(d)


def large_network(n_classes: int = 10, n_nodes: int = 10, **overrides) -> ScalingConfig:
    """Large reference network: 10 nodes x 100 CPU units, 10 classes."""
    d = dict(
        n_nodes=n_nodes,
        n_classes=n_classes,
        cpu_demand=tuple(range(1, n_classes + 1)),
        capacity=(100,) * n_nodes,
        arrival_rate=_spread(4.0, 12.0, n_classes),
        service_rate=_spread(10.0, 100.0, n_classes),
        income=(1.0,) * n_classes,
        unit_cost=1.0,
        discount=5.0,
        epsilon=1e-4,
        max_replicas=2,
        max_queue=2,
        event_mode=EventMode.AGGREGATED.value,
    )
    d.update(overrides)
    return ScalingConfig.from_dict(d)


_PRESETS = {"small": small_network, "large": large_network}


def load_preset(name: str) -> ScalingConfig:
    """Load a bundled preset by name ('small' or 'large')."""
    try:
        res = resources.files("edgescale.presets").joinpath(f"{name}_network.yaml")
        return ScalingConfig.from_dict(yaml.safe_load(res.read_text()))
    except FileNotFoundError:
        pass
    if name in _PRESETS:
        return _PRESETS[name]()
    raise ConfigError(f"unknown preset {name!r}; available: {sorted(_PRESETS)}")
