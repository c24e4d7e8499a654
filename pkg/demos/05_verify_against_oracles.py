"""Cross-examine the solver with its independent references.

Three separate routes to the same answers: exhaustive policy enumeration
with exact linear solves, Monte-Carlo simulation of the continuous-time
chain, and closed-form queueing formulas. None of them share code with the
value-iteration path they check.
"""
import numpy as np

from edgescale import ScalingConfig, erlang_c_delay, solve
from edgescale.oracle import brute_force_optimal, monte_carlo_value, policy_count
from edgescale.solver import default_start_state

cfg = ScalingConfig(
    n_nodes=1, n_classes=1, cpu_demand=(1,), capacity=(2,),
    arrival_rate=(2.0,), service_rate=(1.0,), income=(1.0,),
    unit_cost=1.0, discount=6.0, epsilon=1e-9, max_replicas=2, max_queue=2,
)

states, umodel, policy = solve(cfg)
print(f"instance: {len(states)} states, "
      f"{policy_count(states, cfg)} deterministic policies")

# 1. every single policy, evaluated exactly
bf = brute_force_optimal(umodel)
gap = np.abs(bf.values - policy.values).max()
print(f"exhaustive search vs value iteration: max value gap {gap:.2e}")
assert gap <= cfg.epsilon + 1e-8
assert np.array_equal(bf.actions, policy.actions)
print("argmax policies agree action-for-action")

# 2. discounting re-derived by simulating the continuous-time chain
start = default_start_state(umodel)
est = monte_carlo_value(policy.actions, umodel, start, horizon=3.0,
                        n_paths=20_000, rng=np.random.default_rng(0))
z = (est.mean - policy.values[start]) / est.stderr
print(f"Monte-Carlo value {est.mean:.4f} +/- {est.stderr:.4f} "
      f"vs solver {policy.values[start]:.4f}  (z = {z:+.2f})")

# 3. the closed forms the simulator is tested against
wait_prob, mean_wait, sojourn = erlang_c_delay(2.0, 1.0, 3)
print(f"Erlang C at (lambda=2, mu=1, m=3): wait probability {wait_prob:.4f}, "
      f"mean sojourn {sojourn:.4f}")
