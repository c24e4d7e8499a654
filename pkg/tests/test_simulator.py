import numpy as np
import pytest

from edgescale.config import ScalingConfig
from edgescale.model import Event
from edgescale.oracle import erlang_c_delay
from edgescale.scalers import MonitoringScaler, LoadEstimator, PinnedScaler, RandomScaler
from edgescale.simulator import (
    Cluster,
    SimConfig,
    SimulationError,
    allocate_first_fit,
    allocate_random_fit,
    remove_replica,
    rng_streams,
    run,
    snapshot_state,
)

def queue_config(lam=0.5, mu=1.0, capacity=4):
    return ScalingConfig(
        n_nodes=1, n_classes=1, cpu_demand=(1,), capacity=(capacity,),
        arrival_rate=(lam,), service_rate=(mu,), income=(1.0,),
        unit_cost=1.0, discount=1.0, epsilon=1e-6,
        max_replicas=capacity, max_queue=10,
    )


# -- allocators -----------------------------------------------------------------


def make_cluster(capacity, used, demand=(2,)):
    cfg = ScalingConfig(
        n_nodes=len(capacity), n_classes=1, cpu_demand=demand, capacity=capacity,
        arrival_rate=(1.0,), service_rate=(1.0,), income=(0.0,),
        unit_cost=0.0, discount=1.0, epsilon=1e-6,
        max_replicas=8, max_queue=4,
    )
    cluster = Cluster(cfg)
    cluster.used = list(used)
    return cluster


def test_first_fit_picks_lowest_feasible_index():
    cluster = make_cluster((5, 5, 5), (5, 2, 0))   # free: 0, 3, 5; demand 2
    assert allocate_first_fit(cluster, 0) == 1


def test_first_fit_none_when_full():
    cluster = make_cluster((2, 2), (2, 2))
    assert allocate_first_fit(cluster, 0) is None


def test_first_fit_none_when_demand_too_large():
    cluster = make_cluster((3, 3), (0, 0), demand=(3,))
    cluster.used = [1, 1]
    assert allocate_first_fit(cluster, 0) is None


def test_random_fit_single_candidate_is_deterministic():
    cluster = make_cluster((5, 5), (5, 0))
    rng = np.random.default_rng(0)
    assert all(allocate_random_fit(cluster, 0, rng) == 1 for _ in range(50))


def test_random_fit_uniform_over_candidates():
    cluster = make_cluster((5, 5), (0, 0))
    rng = np.random.default_rng(7)
    picks = [allocate_random_fit(cluster, 0, rng) for _ in range(10_000)]
    assert abs(np.mean(picks) - 0.5) < 0.02


def test_random_fit_none_when_full():
    cluster = make_cluster((2,), (2,))
    assert allocate_random_fit(cluster, 0, np.random.default_rng(0)) is None


# -- replica removal / snapshot -----------------------------------------------------


def test_remove_replica_frees_capacity():
    cluster = make_cluster((5,), (0,))
    rep1 = cluster.add_replica(0, 0)
    rep2 = cluster.add_replica(0, 0)
    cluster.idle[0].extend([rep1, rep2])
    assert cluster.used[0] == 4
    remove_replica(cluster, 0, 0)
    assert cluster.used[0] == 2
    assert len(cluster.idle[0]) == 1
    assert cluster.used[0] <= cluster.capacity[0]


def test_remove_replica_requires_idle():
    cluster = make_cluster((5,), (0,))
    rep = cluster.add_replica(0, 0)
    rep.busy = True
    with pytest.raises(SimulationError):
        remove_replica(cluster, 0, 0)


def test_snapshot_state():
    cluster = make_cluster((5, 5), (0, 0))
    assert snapshot_state(cluster, Event.arrival(0)) == ((0,), (0,), Event.arrival(0))
    cluster.idle[0].append(cluster.add_replica(0, 0))
    cluster.idle[0].append(cluster.add_replica(0, 1))
    snap = snapshot_state(cluster, Event.arrival(0))
    assert snap.replicas == (2,)                       # aggregated over nodes
    cluster.queues[0].extend([0.1, 0.2, 0.3])
    assert snapshot_state(cluster, Event.arrival(0)).queue == (3,)


# -- the event loop -------------------------------------------------------------------


def test_mm1_sojourn_short_run():
    cfg = queue_config(lam=0.5, mu=1.0)
    sim = SimConfig(horizon_events=120_000, seed=3, transmission_delay=(0.0,),
                    initial_replicas=(1,))
    metrics = run(cfg, sim, PinnedScaler())
    assert metrics.avg_delay == pytest.approx(2.0, rel=0.10)
    assert metrics.avg_replicas == pytest.approx(1.0, abs=1e-9)


def test_mmc_matches_erlang_c_short_run():
    cfg = queue_config(lam=2.0, mu=1.0)
    _, _, sojourn = erlang_c_delay(2.0, 1.0, 3)
    sim = SimConfig(horizon_events=120_000, seed=4, transmission_delay=(0.0,),
                    initial_replicas=(3,))
    metrics = run(cfg, sim, PinnedScaler())
    assert metrics.avg_delay == pytest.approx(sojourn, rel=0.10)


def test_determinism_bit_identical():
    cfg = queue_config(lam=1.0)
    scaler = lambda: RandomScaler(rng_streams(9)[3])
    sim = lambda: SimConfig(horizon_events=30_000, seed=9)
    assert run(cfg, sim(), scaler()) == run(cfg, sim(), scaler())


def test_seed_changes_results():
    cfg = queue_config(lam=1.0)
    a = run(cfg, SimConfig(horizon_events=20_000, seed=1), RandomScaler(rng_streams(1)[3]))
    b = run(cfg, SimConfig(horizon_events=20_000, seed=2), RandomScaler(rng_streams(2)[3]))
    assert a.avg_delay != b.avg_delay


def test_conservation_and_debug_invariants():
    cfg = queue_config(lam=2.0, mu=1.0, capacity=3)
    sim = SimConfig(horizon_events=20_000, seed=5, debug_checks=True)
    scaler = MonitoringScaler(0.1, LoadEstimator(cfg))
    metrics = run(cfg, sim, scaler)
    assert metrics.total_arrivals == (
        metrics.total_completed + metrics.final_queued + metrics.final_in_service
    )


def test_zero_completions_reports_absent_delay():
    cfg = queue_config(lam=1.0)
    sim = SimConfig(horizon_events=3, warmup_events=0, seed=0)
    metrics = run(cfg, sim, PinnedScaler())      # no replicas ever exist
    assert metrics.completed == 0
    assert metrics.avg_delay is None
    assert metrics.avg_delay_per_class == (None,)


def test_transmission_delay_shifts_mean():
    cfg = queue_config(lam=0.5)
    base = SimConfig(horizon_events=20_000, seed=8, transmission_delay=(0.0,),
                     initial_replicas=(1,))
    shifted = SimConfig(horizon_events=20_000, seed=8, transmission_delay=(0.25,),
                        initial_replicas=(1,))
    m0 = run(cfg, base, PinnedScaler())
    m1 = run(cfg, shifted, PinnedScaler())
    assert m1.avg_delay == pytest.approx(m0.avg_delay + 0.25)


def test_default_transmission_delay_is_per_node_index():
    sim = SimConfig(horizon_events=10)
    cfg = ScalingConfig(
        n_nodes=3, n_classes=1, cpu_demand=(1,), capacity=(2, 2, 2),
        arrival_rate=(1.0,), service_rate=(1.0,), income=(0.0,),
        unit_cost=0.0, discount=1.0, epsilon=1e-6, max_replicas=2, max_queue=2,
    )
    assert sim.resolved_delays(cfg) == (0.0, 0.001, 0.002)


def test_trace_file(tmp_path):
    cfg = queue_config(lam=1.0)
    path = tmp_path / "trace.tsv"
    sim = SimConfig(horizon_events=50, seed=0, trace_path=str(path))
    run(cfg, sim, RandomScaler(rng_streams(0)[3]))
    lines = path.read_text().splitlines()
    assert lines[0].startswith("time\t")
    assert len(lines) == 51
    fields = lines[1].split("\t")
    assert len(fields) == 6


def test_config_validation():
    cfg = queue_config()
    with pytest.raises(SimulationError):
        run(cfg, SimConfig(horizon_events=10, warmup_events=10), PinnedScaler())
    with pytest.raises(SimulationError):
        run(cfg, SimConfig(horizon_events=10, allocator="worst"), PinnedScaler())
    with pytest.raises(SimulationError):
        run(cfg, SimConfig(horizon_events=10, transmission_delay=(0.1, 0.2)), PinnedScaler())
    with pytest.raises(SimulationError):
        run(cfg, SimConfig(horizon_events=10, initial_replicas=(99,)), PinnedScaler())


def test_work_conservation_under_scaling():
    # a scaling run in debug mode exercises the idle/queue invariant per event
    cfg = ScalingConfig(
        n_nodes=2, n_classes=2, cpu_demand=(1, 2), capacity=(4, 4),
        arrival_rate=(1.0, 1.5), service_rate=(1.0, 2.0), income=(1.0, 1.0),
        unit_cost=1.0, discount=1.0, epsilon=1e-6, max_replicas=4, max_queue=6,
    )
    sim = SimConfig(horizon_events=15_000, seed=11, debug_checks=True, allocator="rf")
    metrics = run(cfg, sim, RandomScaler(rng_streams(11)[3]))
    assert metrics.completed > 0
