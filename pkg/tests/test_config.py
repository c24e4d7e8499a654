import pytest
import yaml

from edgescale.config import (
    ConfigError,
    EventMode,
    ScalingConfig,
    apply_overrides,
    large_network,
    load_config,
    load_preset,
    small_network,
)

from conftest import tiny_config


def test_roundtrip_yaml(tmp_path):
    cfg = tiny_config()
    path = tmp_path / "cfg.yaml"
    cfg.save(path)
    assert load_config(path) == cfg


def test_json_is_loadable_too(tmp_path):
    cfg = tiny_config()
    path = tmp_path / "cfg.json"
    import json

    path.write_text(json.dumps(cfg.to_dict()))
    assert load_config(path) == cfg


@pytest.mark.parametrize(
    "changes",
    [
        dict(cpu_demand=(3,)),                 # does not fit any node
        dict(arrival_rate=(0.0,)),
        dict(service_rate=(-1.0,)),
        dict(discount=0.0),
        dict(epsilon=0.0),
        dict(max_replicas=0),
        dict(max_queue=-1),
        dict(capacity=(2, 2)),                 # wrong arity
        dict(unit_cost=-0.1),
    ],
)
def test_validation_rejects(changes):
    with pytest.raises(ConfigError):
        tiny_config(**changes)


def test_unknown_and_missing_keys():
    d = tiny_config().to_dict()
    d["bogus"] = 1
    with pytest.raises(ConfigError, match="unknown"):
        ScalingConfig.from_dict(d)
    d2 = tiny_config().to_dict()
    del d2["capacity"]
    with pytest.raises(ConfigError, match="missing"):
        ScalingConfig.from_dict(d2)


def test_hash_tracks_content():
    a, b = tiny_config(), tiny_config()
    assert a.hash() == b.hash()
    assert a.hash() != tiny_config(arrival_rate=(2.5,)).hash()


def test_scaled_arrivals():
    cfg = tiny_config().scaled_arrivals(1.5)
    assert cfg.arrival_rate == (3.0,)


def test_small_preset_matches_reference_parameters():
    cfg = load_preset("small")
    assert cfg.n_nodes == 3 and cfg.n_classes == 5
    assert cfg.cpu_demand == (1, 2, 3, 4, 5)
    assert cfg.capacity == (16, 16, 16)
    assert cfg.unit_cost == 1.0
    assert cfg.income == (1.0,) * 5
    assert cfg.arrival_rate[0] == 2.0 and cfg.arrival_rate[-1] == 11.0
    assert cfg.service_rate[0] == 1.0 and cfg.service_rate[-1] == 11.0
    assert cfg == small_network()


def test_large_preset_matches_reference_parameters():
    cfg = load_preset("large")
    assert cfg.n_nodes == 10 and cfg.n_classes == 10
    assert cfg.capacity == (100,) * 10
    assert cfg.arrival_rate[0] == 4.0 and cfg.arrival_rate[-1] == 12.0
    assert cfg.service_rate[0] == 10.0 and cfg.service_rate[-1] == 100.0
    assert cfg == large_network()


def test_overrides_round_trip():
    d = tiny_config().to_dict()
    parsed = apply_overrides(d, ["arrival_rate=[4.0]", "unit_cost=0"])
    assert d["arrival_rate"] == [4.0]
    assert d["unit_cost"] == 0
    assert parsed == {"arrival_rate": [4.0], "unit_cost": 0}
    cfg = ScalingConfig.from_dict(d)
    assert cfg.arrival_rate == (4.0,) and cfg.unit_cost == 0.0


def test_overrides_reject_unknown_keys():
    d = tiny_config().to_dict()
    with pytest.raises(ConfigError):
        apply_overrides(d, ["nope=1"])
    with pytest.raises(ConfigError):
        apply_overrides(d, ["no-equals-sign"])


def test_dotted_override_path():
    d = {"outer": {"inner": 1}}
    apply_overrides(d, ["outer.inner=7"])
    assert d["outer"]["inner"] == 7


def test_event_mode_parse():
    cfg = tiny_config(event_mode="node_indexed")
    assert cfg.event_mode is EventMode.NODE_INDEXED


def test_degenerate_zero_class_config_is_expressible():
    cfg = ScalingConfig(
        n_nodes=1, n_classes=0, cpu_demand=(), capacity=(1,),
        arrival_rate=(), service_rate=(), income=(),
        unit_cost=0.0, discount=1.0, epsilon=1e-6,
        max_replicas=1, max_queue=0,
    )
    assert cfg.total_arrival_rate == 0
