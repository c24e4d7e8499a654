import numpy as np
import pytest
import yaml

from edgescale.reporting import (
    CSV_HEADER,
    ScalerSpec,
    SweepRow,
    SweepSpec,
    aggregate,
    emit,
    emit_aggregate,
    read_rows,
    run_sweep,
    write_metadata,
)

from conftest import tiny_config


def small_spec(**overrides):
    d = dict(
        scenario=tiny_config(),
        scenario_id="tiny",
        scalers=(ScalerSpec("mnt", 0.1), ScalerSpec("rf")),
        allocators=("ff",),
        seeds=(1, 2),
        horizon_events=4_000,
        lambda_scales=(0.5, 1.0, 1.5),
        max_workers=1,
    )
    d.update(overrides)
    return SweepSpec(**d)


@pytest.fixture(scope="module")
def rows():
    return run_sweep(small_spec())


def test_row_count_is_grid_product(rows):
    assert len(rows) == 2 * 3 * 2          # scalers x points x seeds


def test_rows_are_deterministic(rows):
    again = run_sweep(small_spec())
    assert again == rows


def test_rows_have_metrics_and_thresholds(rows):
    mnt = [r for r in rows if r.scaler == "mnt"]
    rf = [r for r in rows if r.scaler == "rf"]
    assert all(r.threshold == 0.1 for r in mnt)
    assert all(r.threshold is None for r in rf)
    assert all(r.error is None for r in rows)
    assert all(np.isfinite(r.avg_delay) for r in rows)
    assert all(np.isfinite(r.total_reward) for r in rows)


def test_lambda_column_is_mean_rate(rows):
    lams = sorted(set(r.lam for r in rows))
    assert lams == [1.0, 2.0, 3.0]          # tiny's rate is 2.0; scales 0.5/1/1.5


def test_emit_line_counts(tmp_path, rows):
    path = emit(rows, tmp_path / "out.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == len(rows) + 1


def test_emit_empty_rows_is_header_only(tmp_path):
    path = emit([], tmp_path / "empty.csv")
    assert path.read_text().splitlines() == [CSV_HEADER]


def test_emit_round_trip(tmp_path, rows):
    path = emit(rows, tmp_path / "rt.csv")
    parsed = read_rows(path)
    assert parsed == rows


def test_emit_byte_identical(tmp_path, rows):
    a = emit(rows, tmp_path / "a.csv").read_bytes()
    b = emit(rows, tmp_path / "b.csv").read_bytes()
    assert a == b


def test_aggregate_mean_and_ci(rows):
    agg = aggregate(rows)
    assert len(agg) == 2 * 3                 # seeds collapsed
    for a in agg:
        assert a.n_seeds == 2
        assert a.ci95["avg_delay"] is not None


def test_aggregate_single_seed_has_no_ci():
    row = SweepRow("s", "rf", "ff", None, 1.0, 7, 1.5, 2.0, 0.5, 0.1)
    agg = aggregate([row])
    assert agg[0].mean["avg_delay"] == 1.5
    assert agg[0].ci95["avg_delay"] is None


def test_aggregate_identical_rows_zero_width():
    rows = [
        SweepRow("s", "rf", "ff", None, 1.0, seed, 2.0, 3.0, 0.5, 0.1)
        for seed in (1, 2)
    ]
    agg = aggregate(rows)
    assert agg[0].ci95["avg_delay"] == 0.0


def test_aggregate_arithmetic():
    rows = [
        SweepRow("s", "rf", "ff", None, 1.0, seed, float(seed), 0.0, 0.0, 0.0)
        for seed in (1, 2, 3)
    ]
    assert aggregate(rows)[0].mean["avg_delay"] == pytest.approx(2.0)


def test_emit_aggregate_columns(tmp_path, rows):
    path = emit_aggregate(aggregate(rows), tmp_path / "agg.csv")
    header = path.read_text().splitlines()[0].split(",")
    assert "avg_delay_mean" in header and "avg_delay_ci95" in header
    assert "total_reward_mean" in header


def test_smdp_cells_skip_when_state_space_refused(tmp_path):
    spec = small_spec(
        scalers=(ScalerSpec("smdp"), ScalerSpec("rf")),
        state_limit=5,                        # force the refusal
        lambda_scales=(1.0,),
        seeds=(1,),
    )
    rows = run_sweep(spec)
    smdp = [r for r in rows if r.scaler == "smdp"]
    rf = [r for r in rows if r.scaler == "rf"]
    assert all(r.error is not None and "too large" in r.error for r in smdp)
    assert all(r.error is None for r in rf)

    path = emit(rows, tmp_path / "skip.csv")
    parsed = read_rows(path)
    assert parsed[0].avg_delay is None        # skipped row keeps empty metrics

    meta = write_metadata(tmp_path / "skip.meta.yaml", {"note": "test"}, rows)
    doc = yaml.safe_load(meta.read_text())
    assert doc["skipped_rows"] and "too large" in doc["skipped_rows"][0]["reason"]
    assert "lambda" in doc["lambda_convention"]


def test_smdp_cells_solve_when_tractable():
    # with free processing the solved policy actually provisions replicas,
    # so the smdp cell produces completions (with unit_cost=1 the tiny
    # instance's optimal policy is to serve nothing at all)
    spec = small_spec(
        scenario=tiny_config(unit_cost=0.0),
        scalers=(ScalerSpec("smdp"),),
        lambda_scales=(1.0,),
        seeds=(1,),
        horizon_events=3_000,
    )
    rows = run_sweep(spec)
    assert rows[0].error is None
    assert rows[0].avg_delay is not None


def test_sweep_spec_from_dict(tmp_path):
    cfg = tiny_config()
    cfg_path = tmp_path / "scenario.yaml"
    cfg.save(cfg_path)
    doc = {
        "scenario": "scenario.yaml",
        "scenario_id": "t",
        "scalers": [{"name": "mnt", "threshold": 0.2}, "rf"],
        "allocators": ["ff", "rf"],
        "seeds": [1],
        "horizon_events": 1000,
        "lambda_scales": [1.0],
    }
    spec_path = tmp_path / "sweep.yaml"
    spec_path.write_text(yaml.safe_dump(doc))
    spec = SweepSpec.from_file(spec_path)
    assert spec.scenario == cfg
    assert spec.scalers[0].threshold == 0.2
    assert spec.allocators == ("ff", "rf")


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        small_spec(lambda_scales=None)        # no points at all
    with pytest.raises(ValueError):
        small_spec(lambda_points=((2.0,),))   # both kinds of points
    with pytest.raises(ValueError):
        small_spec(seeds=())


def test_parallel_matches_serial():
    serial = run_sweep(small_spec(max_workers=1, lambda_scales=(1.0,), horizon_events=2000))
    parallel = run_sweep(small_spec(max_workers=2, lambda_scales=(1.0,), horizon_events=2000))
    assert serial == parallel


def test_absolute_lambda_points():
    spec = small_spec(lambda_scales=None, lambda_points=((3.0,),), seeds=(1,))
    rows = run_sweep(spec)
    assert all(r.lam == 3.0 for r in rows)
