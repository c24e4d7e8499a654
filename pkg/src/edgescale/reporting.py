"""Sweep orchestration: run scaler/allocator/threshold grids over arrival-rate
points and seeds, aggregate across seeds, and emit plot-ready CSV tables."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml
from scipy import stats

from . import model, solver
from .config import ScalingConfig, load_config
from .scalers import make_scaler
from .simulator import SimConfig, rng_streams, run

CSV_HEADER = "scenario,scaler,allocator,threshold,lambda,seed,avg_delay,avg_replicas,throughput,total_reward"

# The lambda column reports the MEAN per-class arrival rate of the sweep
# point (per-class rates are spread over the scenario's range, so a single
# per-class axis does not exist). Recorded in every emitted sidecar.
LAMBDA_CONVENTION = (
    "lambda = mean of the per-class arrival-rate vector at this sweep point"
)


@dataclass(frozen=True)
class ScalerSpec:
    name: str                      # smdp | mnt | rf | pinned
    threshold: Optional[float] = None

    def label(self) -> str:
        return self.name

    @classmethod
    def parse(cls, item) -> "ScalerSpec":
        if isinstance(item, str):
            return cls(name=item)
        return cls(name=item["name"], threshold=item.get("threshold"))


@dataclass
class SweepSpec:
    """Experiment grid: scenario x lambda points x scalers x allocators x seeds."""

    scenario: ScalingConfig
    scenario_id: str
    scalers: tuple[ScalerSpec, ...]
    allocators: tuple[str, ...]
    seeds: tuple[int, ...]
    horizon_events: int
    lambda_scales: Optional[tuple[float, ...]] = None
    lambda_points: Optional[tuple[tuple[float, ...], ...]] = None
    warmup_events: Optional[int] = None
    transmission_delay: Optional[tuple[float, ...]] = None
    mnt_window: Optional[float] = None
    mnt_window_interarrivals: float = 50.0
    state_limit: int = model.DEFAULT_STATE_LIMIT
    max_workers: Optional[int] = None

    def __post_init__(self):
        if not self.scalers or not self.allocators or not self.seeds:
            raise ValueError("sweep grid must not be empty")
        if bool(self.lambda_scales) == bool(self.lambda_points):
            raise ValueError("provide exactly one of lambda_scales / lambda_points")

    def arrival_vectors(self) -> list[tuple[float, ...]]:
        if self.lambda_points:
            return [tuple(float(x) for x in p) for p in self.lambda_points]
        base = self.scenario.arrival_rate
        return [tuple(s * lam for lam in base) for s in self.lambda_scales]

    @classmethod
    def from_dict(cls, d: dict, base_dir: Optional[Path] = None) -> "SweepSpec":
        d = dict(d)
        scenario = d.pop("scenario")
        if isinstance(scenario, str):
            path = Path(scenario)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            scenario = load_config(path)
        else:
            scenario = ScalingConfig.from_dict(scenario)
        scalers = tuple(ScalerSpec.parse(s) for s in d.pop("scalers"))
        for key in ("lambda_scales", "lambda_points", "allocators", "seeds", "transmission_delay"):
            if d.get(key) is not None:
                d[key] = tuple(tuple(x) if isinstance(x, list) else x for x in d[key])
        return cls(scenario=scenario, scalers=scalers, **d)

    @classmethod
    def from_file(cls, path: str | Path) -> "SweepSpec":
        path = Path(path)
        with open(path) as fh:
            d = yaml.safe_load(fh)
        return cls.from_dict(d, base_dir=path.parent)


@dataclass
class SweepRow:
    scenario: str
    scaler: str
    allocator: str
    threshold: Optional[float]
    lam: float
    seed: int
    avg_delay: Optional[float] = None
    avg_replicas: Optional[float] = None
    throughput: Optional[float] = None
    total_reward: Optional[float] = None
    error: Optional[str] = None     # set when the cell was skipped


def _cell_config(spec: SweepSpec, arrivals: tuple[float, ...]) -> ScalingConfig:
    return spec.scenario.replace(arrival_rate=arrivals)


def _run_cell(args) -> SweepRow:
    (scenario_id, cfg_dict, scaler_spec, allocator, seed, horizon, warmup,
     delays, window, window_ia, policy_table) = args
    cfg = ScalingConfig.from_dict(cfg_dict)
    lam_mean = float(np.mean(cfg.arrival_rate))
    row = SweepRow(
        scenario=scenario_id,
        scaler=scaler_spec.label(),
        allocator=allocator,
        threshold=scaler_spec.threshold,
        lam=lam_mean,
        seed=seed,
    )
    try:
        scaler = make_scaler(
            scaler_spec.name,
            cfg,
            rng_streams(seed)[3],
            threshold=scaler_spec.threshold,
            policy_table=policy_table,
            window=window,
            window_interarrivals=window_ia,
        )
        sim = SimConfig(
            horizon_events=horizon,
            warmup_events=warmup,
            seed=seed,
            allocator=allocator,
            transmission_delay=delays,
        )
        metrics = run(cfg, sim, scaler)
    except Exception as exc:  # recorded per-row, the sweep keeps going
        row.error = f"{type(exc).__name__}: {exc}"
        return row
    row.avg_delay = metrics.avg_delay
    row.avg_replicas = metrics.avg_replicas
    row.throughput = metrics.throughput
    row.total_reward = metrics.total_reward
    return row


def run_sweep(spec: SweepSpec) -> list[SweepRow]:
    """Execute the full grid; rows come back in deterministic cell order.

    SMDP cells share one policy solve per lambda point; unsolvable points
    (state-space limit or solver failure) mark their cells as skipped with
    the reason instead of aborting the sweep.
    """
    vectors = spec.arrival_vectors()
    need_smdp = any(s.name == "smdp" for s in spec.scalers)
    policies: list[Optional[solver.PolicyTable]] = [None] * len(vectors)
    solve_errors: list[Optional[str]] = [None] * len(vectors)
    if need_smdp:
        for i, arrivals in enumerate(vectors):
            cfg = _cell_config(spec, arrivals)
            try:
                states, umodel, policy = solver.solve(cfg, state_limit=spec.state_limit)
                policies[i] = solver.PolicyTable.from_solution(policy, states, cfg)
            except Exception as exc:
                solve_errors[i] = f"{type(exc).__name__}: {exc}"

    tasks = []
    skipped: list[SweepRow] = []
    order: list[tuple[bool, int]] = []   # (is_task, index into tasks or skipped)
    for i, arrivals in enumerate(vectors):
        cfg = _cell_config(spec, arrivals)
        lam_mean = float(np.mean(arrivals))
        for scaler_spec in spec.scalers:
            for allocator in spec.allocators:
                for seed in spec.seeds:
                    if scaler_spec.name == "smdp" and policies[i] is None:
                        skipped.append(
                            SweepRow(
                                scenario=spec.scenario_id,
                                scaler=scaler_spec.label(),
                                allocator=allocator,
                                threshold=scaler_spec.threshold,
                                lam=lam_mean,
                                seed=seed,
                                error=solve_errors[i] or "policy solve failed",
                            )
                        )
                        order.append((False, len(skipped) - 1))
                        continue
                    tasks.append(
                        (
                            spec.scenario_id, cfg.to_dict(), scaler_spec, allocator,
                            seed, spec.horizon_events, spec.warmup_events,
                            spec.transmission_delay, spec.mnt_window,
                            spec.mnt_window_interarrivals, policies[i],
                        )
                    )
                    order.append((True, len(tasks) - 1))

    workers = spec.max_workers if spec.max_workers is not None else (os.cpu_count() or 1)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, tasks, chunksize=4))
    else:
        results = [_run_cell(t) for t in tasks]

    rows: list[SweepRow] = []
    for is_task, idx in order:
        rows.append(results[idx] if is_task else skipped[idx])
    return rows


# -- aggregation ---------------------------------------------------------------

_METRICS = ("avg_delay", "avg_replicas", "throughput", "total_reward")


@dataclass
class AggRow:
    scenario: str
    scaler: str
    allocator: str
    threshold: Optional[float]
    lam: float
    n_seeds: int
    mean: dict = field(default_factory=dict)     # metric -> mean (or None)
    ci95: dict = field(default_factory=dict)     # metric -> half-width (or None)


def aggregate(rows: Sequence[SweepRow]) -> list[AggRow]:
    """Per-cell mean and 95% half-width (Student t on the sample std) over seeds."""
    groups: dict[tuple, list[SweepRow]] = {}
    order = []
    for row in rows:
        if row.error is not None:
            continue
        key = (row.scenario, row.scaler, row.allocator, row.threshold, row.lam)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)

    out = []
    for key in order:
        cell = groups[key]
        agg = AggRow(*key, n_seeds=len(cell))
        for metric in _METRICS:
            values = [getattr(r, metric) for r in cell if getattr(r, metric) is not None]
            if not values:
                agg.mean[metric] = None
                agg.ci95[metric] = None
                continue
            agg.mean[metric] = float(np.mean(values))
            if len(values) >= 2:
                half = float(
                    stats.t.ppf(0.975, len(values) - 1) * np.std(values, ddof=1) / math.sqrt(len(values))
                )
                agg.ci95[metric] = half
            else:
                agg.ci95[metric] = None
        out.append(agg)
    return out


# -- emission --------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def emit(rows: Sequence[SweepRow], path: str | Path) -> Path:
    """Write the per-run table with the fixed header; skipped rows keep empty metrics."""
    path = Path(path)
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                (
                    r.scenario, r.scaler, r.allocator, _fmt(r.threshold), _fmt(r.lam),
                    str(r.seed), _fmt(r.avg_delay), _fmt(r.avg_replicas),
                    _fmt(r.throughput), _fmt(r.total_reward),
                )
            )
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def emit_aggregate(agg: Sequence[AggRow], path: str | Path) -> Path:
    path = Path(path)
    cols = ["scenario", "scaler", "allocator", "threshold", "lambda", "n_seeds"]
    for metric in _METRICS:
        cols.append(f"{metric}_mean")
        cols.append(f"{metric}_ci95")
    lines = [",".join(cols)]
    for a in agg:
        cells = [a.scenario, a.scaler, a.allocator, _fmt(a.threshold), _fmt(a.lam), str(a.n_seeds)]
        for metric in _METRICS:
            cells.append(_fmt(a.mean[metric]))
            cells.append(_fmt(a.ci95[metric]))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_metadata(path: str | Path, spec_summary: dict, rows: Sequence[SweepRow]) -> Path:
    """YAML sidecar: conventions, grid summary, and per-row skip reasons."""
    path = Path(path)
    skipped = [
        {
            "scaler": r.scaler, "allocator": r.allocator, "threshold": r.threshold,
            "lambda": r.lam, "seed": r.seed, "reason": r.error,
        }
        for r in rows
        if r.error is not None
    ]
    doc = {
        "lambda_convention": LAMBDA_CONVENTION,
        "spec": spec_summary,
        "skipped_rows": skipped,
        "rows": len(rows),
    }
    path.write_text(yaml.safe_dump(doc, sort_keys=False))
    return path


def read_rows(path: str | Path) -> list[SweepRow]:
    """Parse a table written by emit(); exact round-trip of values."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: missing the expected header")
    rows = []
    for line in lines[1:]:
        parts = line.split(",", 9)
        scenario, scaler, allocator, threshold, lam, seed = parts[:6]
        metrics = parts[6:]
        rows.append(
            SweepRow(
                scenario=scenario,
                scaler=scaler,
                allocator=allocator,
                threshold=float(threshold) if threshold else None,
                lam=float(lam),
                seed=int(seed),
                avg_delay=float(metrics[0]) if metrics[0] else None,
                avg_replicas=float(metrics[1]) if metrics[1] else None,
                throughput=float(metrics[2]) if metrics[2] else None,
                total_reward=float(metrics[3]) if metrics[3] else None,
            )
        )
    return rows
