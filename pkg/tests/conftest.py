"""Shared tiny problem instances used across the suite."""
import pytest

from edgescale.config import EventMode, ScalingConfig


def tiny_config(**overrides):
    """One class, one 2-unit node; small enough to check by hand."""
    d = dict(
        n_nodes=1, n_classes=1, cpu_demand=(1,), capacity=(2,),
        arrival_rate=(2.0,), service_rate=(1.0,), income=(1.0,),
        unit_cost=1.0, discount=0.1, epsilon=1e-6,
        max_replicas=2, max_queue=2,
    )
    d.update(overrides)
    return ScalingConfig(**d)


def tiny2_config(**overrides):
    """Two classes on two nodes; exercises cross-class capacity coupling."""
    d = dict(
        n_nodes=2, n_classes=2, cpu_demand=(1, 2), capacity=(2, 2),
        arrival_rate=(2.0, 1.0), service_rate=(1.0, 2.0), income=(1.0, 0.5),
        unit_cost=1.0, discount=0.5, epsilon=1e-6,
        max_replicas=2, max_queue=1,
    )
    d.update(overrides)
    return ScalingConfig(**d)


@pytest.fixture
def tiny():
    return tiny_config()


@pytest.fixture
def tiny_node_indexed():
    return tiny_config(event_mode=EventMode.NODE_INDEXED.value)


@pytest.fixture
def tiny2():
    return tiny2_config()


# Instances for exhaustive-policy-search comparisons. Their discount rates
# sit at or above the uniformization constant (lambda_bar <= 0.5), so the
# value-iteration stopping rule's sup-norm error bound collapses below the
# stopping tolerance itself and exact comparisons are meaningful.

def oracle_instances():
    a = tiny_config(discount=6.0, epsilon=1e-9)
    b = ScalingConfig(
        n_nodes=1, n_classes=1, cpu_demand=(1,), capacity=(1,),
        arrival_rate=(1.3,), service_rate=(0.7,), income=(2.0,),
        unit_cost=0.5, discount=3.0, epsilon=1e-9,
        max_replicas=1, max_queue=2,
    )
    c = ScalingConfig(
        n_nodes=1, n_classes=2, cpu_demand=(1, 1), capacity=(2,),
        arrival_rate=(1.0, 0.8), service_rate=(0.9, 1.1), income=(1.0, 2.0),
        unit_cost=0.3, discount=6.0, epsilon=1e-9,
        max_replicas=1, max_queue=0,
    )
    return [a, b, c]
