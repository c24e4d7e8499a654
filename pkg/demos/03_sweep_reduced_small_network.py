"""Reproduce the delay / replica-count trend curves on the reduced small network.

Sweeps the arrival-rate scale over a grid, runs {solved policy, monitoring at
two thresholds, random} x 5 seeds per point, and writes the plot-ready CSV
tables plus (when matplotlib is importable) the two trend figures.
"""
import numpy as np

from edgescale import ScalingConfig
from edgescale.reporting import (
    ScalerSpec,
    SweepSpec,
    aggregate,
    emit,
    emit_aggregate,
    run_sweep,
    write_metadata,
)

scenario = ScalingConfig(
    n_nodes=2, n_classes=2, cpu_demand=(1, 2), capacity=(16, 16),
    arrival_rate=(2.0, 2.0), service_rate=(1.0, 1.0), income=(1.0, 1.0),
    unit_cost=0.0, discount=25.0, epsilon=1e-6, max_replicas=14, max_queue=8,
)

spec = SweepSpec(
    scenario=scenario,
    scenario_id="small-reduced",
    scalers=(ScalerSpec("smdp"), ScalerSpec("mnt", 0.1), ScalerSpec("mnt", 0.05),
             ScalerSpec("rf")),
    allocators=("ff",),
    seeds=(1, 2, 3, 4, 5),
    horizon_events=60_000,
    lambda_scales=tuple(float(s) for s in np.linspace(0.3, 0.75, 8).round(4)),
    transmission_delay=(0.0, 0.0),
)

rows = run_sweep(spec)
emit(rows, "small_trend.csv")
agg = aggregate(rows)
emit_aggregate(agg, "small_trend_agg.csv")
write_metadata("small_trend.meta.yaml", {"demo": "03_sweep_reduced_small_network"}, rows)
print(f"{len(rows)} runs -> small_trend.csv / small_trend_agg.csv")

labels = {("smdp", None): "solved policy", ("mnt", 0.1): "monitoring 0.1",
          ("mnt", 0.05): "monitoring 0.05", ("rf", None): "random"}
points = sorted({a.lam for a in agg})
print(f"\n{'lambda':>8}" + "".join(f" | {v:>16}" for v in labels.values()))
for lam in points:
    row = [next(a for a in agg if a.lam == lam and (a.scaler, a.threshold) == key)
           for key in labels]
    print(f"{lam:8.3f}" + "".join(f" | {a.mean['avg_delay']:7.4f} d "
                                  f"{a.mean['avg_replicas']:5.2f} r" for a in row))

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("\nmatplotlib not available; skipping figures")
else:
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    for key, label in labels.items():
        series = [next(a for a in agg if a.lam == lam and (a.scaler, a.threshold) == key)
                  for lam in points]
        axes[0].plot(points, [a.mean["avg_delay"] for a in series], marker="o", label=label)
        axes[1].plot(points, [a.mean["avg_replicas"] for a in series], marker="o", label=label)
    axes[0].set_xlabel("mean arrival rate")
    axes[0].set_ylabel("average service delay")
    axes[1].set_xlabel("mean arrival rate")
    axes[1].set_ylabel("average number of replicas")
    axes[0].legend()
    fig.tight_layout()
    fig.savefig("small_trend.png", dpi=120)
    print("\nfigures -> small_trend.png")
