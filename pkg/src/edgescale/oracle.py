"""Independent correctness references for the solver and simulator.

Everything here deliberately avoids the solver's code paths: policies are
enumerated exhaustively and evaluated by direct linear solves, queueing
delays come from closed forms, and discounted values are re-estimated by
Monte-Carlo simulation of the continuous-time chain.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import model
from .config import ScalingConfig
from .model import Action, SystemState
from .solver import UniformizedModel

MAX_ORACLE_STATES = 200
MAX_ORACLE_POLICIES = 1_000_000


class OracleError(RuntimeError):
    pass


def policy_count(states: Sequence[SystemState], cfg: ScalingConfig) -> int:
    """Number of deterministic stationary policies (product of choice counts)."""
    count = 1
    for s in states:
        count *= len(model.feasible_actions(s, cfg))
    return count


def assert_tiny(states: Sequence[SystemState], cfg: ScalingConfig):
    if len(states) > MAX_ORACLE_STATES:
        raise OracleError(f"{len(states)} states exceed the oracle bound of {MAX_ORACLE_STATES}")
    n_policies = policy_count(states, cfg)
    if n_policies > MAX_ORACLE_POLICIES:
        raise OracleError(
            f"{n_policies} deterministic policies exceed the oracle bound of {MAX_ORACLE_POLICIES}"
        )


@dataclass
class BruteForceResult:
    actions: np.ndarray          # an optimal policy (canonical tie-break)
    values: np.ndarray           # pointwise-maximal value table
    n_policies: int


def evaluate_policy_exact(umodel: UniformizedModel, actions: Sequence[int]) -> np.ndarray:
    """Exact discounted value of a fixed policy: solve (I - lbar P_d) v = r_d."""
    n = umodel.n_states
    P = np.zeros((n, n))
    r = np.zeros(n)
    dense = [umodel.pmats[a].toarray() for a in range(model.N_ACTIONS)]
    for i, a in enumerate(actions):
        P[i] = dense[int(a)][i]
        r[i] = umodel.rbar[i, int(a)]
    return np.linalg.solve(np.eye(n) - umodel.lambda_bar * P, r)


def brute_force_optimal(umodel: UniformizedModel) -> BruteForceResult:
    """Enumerate every deterministic policy, evaluate each exactly, and return
    the pointwise-maximal value table with a policy achieving it everywhere."""
    cfg = umodel.cfg
    states = umodel.states
    assert_tiny(states, cfg)
    choices = [model.feasible_actions(s, cfg) for s in states]

    best_values = np.full(len(states), -np.inf)
    evaluated: list[tuple[tuple[int, ...], np.ndarray]] = []
    for combo in itertools.product(*choices):
        acts = tuple(int(a) for a in combo)
        v = evaluate_policy_exact(umodel, acts)
        evaluated.append((acts, v))
        np.maximum(best_values, v, out=best_values)

    # By SMDP theory a single policy attains the pointwise maximum; pick the
    # first such policy in enumeration order (canonical because HOLD < UP <
    # DOWN in the per-state choice tuples).
    for acts, v in evaluated:
        if np.all(v >= best_values - 1e-9):
            return BruteForceResult(
                actions=np.array(acts, dtype=np.int8),
                values=best_values,
                n_policies=len(evaluated),
            )
    raise OracleError("no single policy attains the pointwise-maximal value table")


# -- closed-form queueing ----------------------------------------------------


def erlang_b(servers: int, offered: float) -> float:
    """Erlang-B blocking probability via the standard recursion."""
    b = 1.0
    for m in range(1, servers + 1):
        b = offered * b / (m + offered * b)
    return b


def erlang_c_delay(lam: float, mu: float, servers: int) -> tuple[float, float, float]:
    """M/M/m waiting probability, mean wait, and mean sojourn.

    Raises for unstable systems (lam >= servers * mu).
    """
    if lam <= 0 or mu <= 0 or servers < 1:
        raise ValueError("need lam > 0, mu > 0, servers >= 1")
    if lam >= servers * mu:
        raise ValueError(f"unstable queue: lam={lam} >= servers*mu={servers * mu}")
    a = lam / mu
    b = erlang_b(servers, a)
    wait_prob = servers * b / (servers - a * (1.0 - b))
    mean_wait = wait_prob / (servers * mu - lam)
    return wait_prob, mean_wait, mean_wait + 1.0 / mu


# -- Monte-Carlo discounted value ---------------------------------------------


@dataclass
class MonteCarloEstimate:
    mean: float
    stderr: float
    n_paths: int


def monte_carlo_value(
    policy_actions: Sequence[int] | np.ndarray,
    umodel: UniformizedModel,
    state: SystemState | int,
    horizon: float,
    n_paths: int,
    rng: np.random.Generator,
) -> MonteCarloEstimate:
    """Estimate the discounted value of a policy by simulating the
    continuous-time chain: lump incomes at decision epochs, holding-cost
    rate integrated against e^{-alpha t} between epochs.
    """
    cfg = umodel.cfg
    alpha = cfg.discount
    if math.exp(-alpha * horizon) >= 1e-6:
        raise ValueError(
            f"horizon {horizon} too short: e^(-alpha*horizon) must be < 1e-6"
        )
    actions = np.asarray(policy_actions, dtype=np.int8)
    start = state if isinstance(state, int) else umodel.index[state]

    # Per-state caches for the chosen action: event rate, income, cost rate,
    # and the successor distribution of the raw (non-uniformized) chain.
    n = umodel.n_states
    gamma = np.empty(n)
    lump = np.empty(n)
    cost = np.empty(n)
    cum: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    targets: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for i, s in enumerate(umodel.states):
        a = Action(int(actions[i]))
        gamma[i] = model.event_rate(s, a, cfg)
        lump[i] = model.income(s, a, cfg)
        replicas, queue = model.apply_action(s, a, cfg)
        cost[i] = model.holding_cost(replicas, queue, cfg)
        trs = model.transitions(s, a, cfg)
        probs = np.array([t.prob for t in trs])
        cum[i] = np.cumsum(probs)
        targets[i] = np.array([umodel.index[t.next] for t in trs], dtype=np.int64)

    totals = np.empty(n_paths)
    for p in range(n_paths):
        t = 0.0
        i = start
        total = 0.0
        disc = 1.0  # e^{-alpha t}
        while t < horizon:
            tau = rng.exponential(1.0 / gamma[i])
            disc_next = math.exp(-alpha * (t + tau))
            total += lump[i] * disc - cost[i] * (disc - disc_next) / alpha
            t += tau
            disc = disc_next
            i = int(targets[i][np.searchsorted(cum[i], rng.random())])
        totals[p] = total

    mean = float(totals.mean())
    stderr = float(totals.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    return MonteCarloEstimate(mean, stderr, n_paths)
