"""Uniformized value-iteration solver and policy artifacts.

The continuous-time decision process is turned into an equivalent
discrete-time one with a common event rate rho (adding self-loops), then
solved by value iteration to the configured sup-norm tolerance. The result
is an indexed action/value table usable online as an O(1) lookup.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components

from . import model
from .config import EventMode, ScalingConfig
from .model import Action, Event, N_ACTIONS, SystemState


class SolverError(RuntimeError):
    pass


class NotConverged(SolverError):
    def __init__(self, what: str, iterations: int, residual: float):
        super().__init__(
            f"{what} did not converge within {iterations} iterations "
            f"(last residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


def uniformization_rate(cfg: ScalingConfig) -> float:
    """rho = sum_k lambda_k + sum_n sum_k C_n * mu_k, an upper bound on every
    event rate the model can produce (replica CPU demands are >= 1 unit)."""
    return cfg.total_arrival_rate + cfg.total_capacity * sum(cfg.service_rate)


@dataclass
class UniformizedModel:
    """Discrete-time equivalent of the decision process.

    rbar[s, a] is -inf where action a is infeasible in state s; pmats[a]
    holds the uniformized transition rows for action a (rows of infeasible
    pairs are empty).
    """

    cfg: ScalingConfig
    states: list[SystemState]
    index: dict[SystemState, int]
    rho: float
    lambda_bar: float
    rbar: np.ndarray                 # (n_states, N_ACTIONS)
    feasible: np.ndarray             # bool (n_states, N_ACTIONS)
    pmats: list[sp.csr_matrix]       # one (n_states, n_states) matrix per action

    @property
    def n_states(self) -> int:
        return len(self.states)

    def transition_row(self, s: int, a: Action) -> np.ndarray:
        return self.pmats[int(a)].getrow(s).toarray().ravel()


def uniformize(states: Sequence[SystemState], cfg: ScalingConfig) -> UniformizedModel:
    """Build the uniformized rewards and transition matrices over `states`.

    rbar = r * (gamma + alpha) / (rho + alpha); off-diagonal probabilities
    shrink by gamma / rho and the freed mass becomes a self-loop.
    """
    states = list(states)
    index = {s: i for i, s in enumerate(states)}
    n = len(states)
    rho = uniformization_rate(cfg)
    alpha = cfg.discount
    lambda_bar = rho / (rho + alpha)

    rbar = np.full((n, N_ACTIONS), -np.inf)
    feasible = np.zeros((n, N_ACTIONS), dtype=bool)
    rows: list[list[int]] = [[] for _ in range(N_ACTIONS)]
    cols: list[list[int]] = [[] for _ in range(N_ACTIONS)]
    vals: list[list[float]] = [[] for _ in range(N_ACTIONS)]

    for i, s in enumerate(states):
        for a in model.feasible_actions(s, cfg):
            gamma = model.event_rate(s, a, cfg)
            if gamma > rho + 1e-9:
                raise SolverError(
                    f"event rate {gamma} exceeds uniformization constant {rho} at {s}"
                )
            ai = int(a)
            feasible[i, ai] = True
            rbar[i, ai] = model.reward(s, a, cfg) * (gamma + alpha) / (rho + alpha)
            shrink = gamma / rho
            self_mass = 1.0 - shrink
            for t in model.transitions(s, a, cfg):
                j = index[t.next]
                if j == i:
                    self_mass += t.prob * shrink
                else:
                    rows[ai].append(i)
                    cols[ai].append(j)
                    vals[ai].append(t.prob * shrink)
            if self_mass > 1e-15:
                rows[ai].append(i)
                cols[ai].append(i)
                vals[ai].append(self_mass)

    pmats = [
        sp.csr_matrix(
            (np.asarray(vals[a]), (np.asarray(rows[a], dtype=np.int64), np.asarray(cols[a], dtype=np.int64))),
            shape=(n, n),
        )
        for a in range(N_ACTIONS)
    ]
    return UniformizedModel(cfg, states, index, rho, lambda_bar, rbar, feasible, pmats)


def action_values(umodel: UniformizedModel, v: np.ndarray) -> np.ndarray:
    """One-step lookahead Q(s, a) = rbar + lambda_bar * Pbar v; -inf where infeasible."""
    q = np.empty((umodel.n_states, N_ACTIONS))
    for a in range(N_ACTIONS):
        q[:, a] = umodel.rbar[:, a] + umodel.lambda_bar * (umodel.pmats[a] @ v)
    q[~umodel.feasible] = -np.inf
    return q


def greedy_policy(
    umodel: UniformizedModel, v: np.ndarray, tie_atol: float = 0.0
) -> np.ndarray:
    """Best action per state under `v`, preferring hold, then up, then down.

    Values within `tie_atol` of the per-state maximum count as tied, so the
    preference order decides; a nonzero tolerance keeps the extracted policy
    stable against value-iteration convergence noise.
    """
    q = action_values(umodel, v)
    best = q.max(axis=1, keepdims=True)
    tied = q >= best - tie_atol
    return np.argmax(tied, axis=1).astype(np.int8)


@dataclass
class Policy:
    """Solved scaling policy: per-state action and value, plus solve telemetry."""

    actions: np.ndarray              # int8, one Action code per state
    values: np.ndarray               # float64 value table
    residual_history: list[float]
    iterations: int
    epsilon: float
    rho: float
    lambda_bar: float
    config_hash: str

    def action_at(self, i: int) -> Action:
        return Action(int(self.actions[i]))


def value_iteration(
    umodel: UniformizedModel,
    epsilon: Optional[float] = None,
    max_iter: int = 100_000,
    tie_atol: Optional[float] = None,
) -> Policy:
    """Iterate v <- max_a [rbar + lambda_bar Pbar v] from v = 0 until the
    sup-norm change is <= epsilon, then extract the greedy policy.

    `tie_atol` (default: 10x the stopping tolerance) widens the tie window
    of the final argmax so the hold-first preference is applied to ties that
    differ only by residual convergence error.
    """
    eps = umodel.cfg.epsilon if epsilon is None else float(epsilon)
    if eps <= 0:
        raise SolverError("epsilon must be strictly positive")
    atol = 10.0 * eps if tie_atol is None else tie_atol
    v = np.zeros(umodel.n_states)
    history: list[float] = []
    for _ in range(max_iter):
        v_next = action_values(umodel, v).max(axis=1)
        residual = float(np.abs(v_next - v).max())
        history.append(residual)
        v = v_next
        if residual <= eps:
            return Policy(
                actions=greedy_policy(umodel, v, tie_atol=atol),
                values=v,
                residual_history=history,
                iterations=len(history),
                epsilon=eps,
                rho=umodel.rho,
                lambda_bar=umodel.lambda_bar,
                config_hash=umodel.cfg.hash(),
            )
    raise NotConverged("value iteration", max_iter, history[-1])


def policy_transition_matrix(umodel: UniformizedModel, actions: np.ndarray) -> sp.csr_matrix:
    """Uniformized chain induced by following `actions` in every state."""
    n = umodel.n_states
    parts = []
    for a in range(N_ACTIONS):
        mask = (actions == a).astype(float)
        parts.append(sp.diags(mask) @ umodel.pmats[a])
    return sum(parts).tocsr()


def default_start_state(umodel: UniformizedModel) -> int:
    """Index of the designated initial state: empty system, first-class arrival."""
    zeros = (0,) * umodel.cfg.n_classes
    return umodel.index[SystemState(zeros, zeros, Event.arrival(0))]


DIRECT_SOLVE_MAX_STATES = 5_000


def stationary_distribution(
    policy: Policy | np.ndarray,
    umodel: UniformizedModel,
    start: Optional[int] = None,
    tol: float = 1e-10,
    max_iter: int = 200_000,
) -> np.ndarray:
    """Long-run occupancy pi with pi P = pi, sum(pi) = 1 for the policy chain.

    Power iteration from the designated initial state (on the half-damped
    kernel, which has the same fixed points but no periodicity), with a
    direct least-squares solve on the reachable recurrent class as fallback
    for small chains.
    """
    actions = policy.actions if isinstance(policy, Policy) else np.asarray(policy)
    P = policy_transition_matrix(umodel, actions)
    n = umodel.n_states
    if start is None:
        start = default_start_state(umodel)

    pi = np.zeros(n)
    pi[start] = 1.0
    PT = P.T.tocsr()
    for _ in range(max_iter):
        nxt = 0.5 * (pi + PT @ pi)
        nxt /= nxt.sum()
        if float(np.abs(PT @ nxt - nxt).sum()) <= tol:
            return nxt
        pi = nxt

    if n <= DIRECT_SOLVE_MAX_STATES:
        return _stationary_direct(P, start, n)
    raise NotConverged("stationary distribution", max_iter, float(np.abs(PT @ pi - pi).sum()))


def _stationary_direct(P: sp.csr_matrix, start: int, n: int) -> np.ndarray:
    reach_idx = breadth_first_order(P, start, directed=True, return_predecessors=False)
    reachable = np.zeros(n, dtype=bool)
    reachable[reach_idx] = True
    sub = P[reach_idx][:, reach_idx].toarray()

    # Terminal strongly connected components of the reachable subchain are
    # its recurrent classes; restrict the solve to the one containing the
    # lowest global state index.
    n_comp, labels = connected_components(sp.csr_matrix(sub), directed=True, connection="strong")
    terminal = np.ones(n_comp, dtype=bool)
    src, dst = sub.nonzero()
    for i, j in zip(labels[src], labels[dst]):
        if i != j:
            terminal[i] = False
    candidates = [c for c in range(n_comp) if terminal[c]]
    chosen = min(candidates, key=lambda c: reach_idx[labels == c].min())
    members = np.where(labels == chosen)[0]
    block = sub[np.ix_(members, members)]

    m = len(members)
    a = np.vstack([block.T - np.eye(m), np.ones((1, m))])
    b = np.zeros(m + 1)
    b[-1] = 1.0
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.zeros(n)
    pi[reach_idx[members]] = np.clip(sol, 0.0, None)
    pi /= pi.sum()
    return pi


@dataclass
class ExpectedMetrics:
    avg_queue: np.ndarray        # per class
    avg_replicas: np.ndarray     # per class
    avg_reward_rate: float


def expected_metrics(
    pi: np.ndarray,
    policy: Policy | np.ndarray,
    states: Sequence[SystemState],
    cfg: ScalingConfig,
) -> ExpectedMetrics:
    """Stationary expectations of queue lengths, replica counts, and the
    reward accrual rate r(s, policy(s)) * gamma(s, policy(s))."""
    actions = policy.actions if isinstance(policy, Policy) else np.asarray(policy)
    K = cfg.n_classes
    queue = np.array([s.queue for s in states], dtype=float)
    replicas = np.array([s.replicas for s in states], dtype=float)
    avg_queue = pi @ queue if K else np.zeros(0)
    avg_replicas = pi @ replicas if K else np.zeros(0)
    rate = 0.0
    for i, s in enumerate(states):
        if pi[i] == 0.0:
            continue
        a = Action(int(actions[i]))
        rate += pi[i] * model.reward(s, a, cfg) * model.event_rate(s, a, cfg)
    return ExpectedMetrics(avg_queue, avg_replicas, float(rate))


def complexity_bounds(cfg: ScalingConfig, gamma_discount: float) -> tuple[float, float]:
    """Printed asymptotic time/space bounds for the solve, as functions of the
    truncation bounds and a discrete discount factor in (0, 1)."""
    if not 0.0 < gamma_discount < 1.0:
        raise ValueError("gamma_discount must lie in (0, 1)")
    space = model.closed_form_state_count(
        cfg.max_replicas, cfg.max_queue, cfg.n_classes, cfg.n_nodes
    )
    try:
        time = (float(space) / (1.0 - gamma_discount)) * math.log(1.0 / (1.0 - gamma_discount))
    except OverflowError as exc:
        raise OverflowError(f"complexity bound overflows a float: |S|={space}") from exc
    if math.isinf(time):
        raise OverflowError(f"complexity bound overflows a float: |S|={space}")
    return time, float(space)


# -- policy file format ------------------------------------------------------
#
# Text format, one header block of '# key: value' lines followed by a
# tab-separated table. Class/node indices are 0-based.

POLICY_FORMAT = "edgescale-policy-v1"


@dataclass
class PolicyTable:
    """A solved policy bound to its state enumeration, usable as a lookup table."""

    states: list[SystemState]
    actions: np.ndarray
    values: np.ndarray
    meta: dict
    index: dict[SystemState, int] = field(init=False)

    def __post_init__(self):
        self.index = {s: i for i, s in enumerate(self.states)}

    @property
    def max_replicas(self) -> int:
        return int(self.meta["max_replicas"])

    @property
    def max_queue(self) -> int:
        return int(self.meta["max_queue"])

    @property
    def event_mode(self) -> EventMode:
        return EventMode(self.meta["event_mode"])

    def lookup(self, state: SystemState) -> Action:
        """Action at `state` after clamping it into the enumeration bounds."""
        clamped = SystemState(
            tuple(min(d, self.max_replicas) for d in state.replicas),
            tuple(min(q, self.max_queue) for q in state.queue),
            state.event,
        )
        try:
            return Action(int(self.actions[self.index[clamped]]))
        except KeyError:
            raise model.ModelError(
                f"state {clamped} missing from policy table (enumeration not total?)"
            ) from None

    @classmethod
    def from_solution(
        cls, policy: Policy, states: Sequence[SystemState], cfg: ScalingConfig
    ) -> "PolicyTable":
        meta = {
            "format": POLICY_FORMAT,
            "config_hash": policy.config_hash,
            "rho": policy.rho,
            "lambda_bar": policy.lambda_bar,
            "epsilon": policy.epsilon,
            "iterations": policy.iterations,
            "final_residual": policy.residual_history[-1] if policy.residual_history else 0.0,
            "n_states": len(states),
            "n_classes": cfg.n_classes,
            "n_nodes": cfg.n_nodes,
            "max_replicas": cfg.max_replicas,
            "max_queue": cfg.max_queue,
            "event_mode": cfg.event_mode.value,
        }
        return cls(list(states), policy.actions.copy(), policy.values.copy(), meta)


def save_policy(table: PolicyTable, path: str | Path):
    lines = []
    for key in (
        "format", "config_hash", "rho", "lambda_bar", "epsilon", "iterations",
        "final_residual", "n_states", "n_classes", "n_nodes", "max_replicas",
        "max_queue", "event_mode",
    ):
        lines.append(f"# {key}: {table.meta[key]}")
    lines.append("replicas\tqueue\tevent\taction\tvalue")
    for s, a, v in zip(table.states, table.actions, table.values):
        repl = ",".join(map(str, s.replicas))
        queue = ",".join(map(str, s.queue))
        lines.append(
            f"{repl}\t{queue}\t{s.event.label()}\t{Action(int(a)).short_name}\t{float(v)!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_policy(path: str | Path) -> PolicyTable:
    meta: dict = {}
    states: list[SystemState] = []
    actions: list[int] = []
    values: list[float] = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
                continue
            if line.startswith("replicas\t"):
                continue
            repl, queue, event, action, value = line.split("\t")
            states.append(
                SystemState(
                    tuple(int(x) for x in repl.split(",")),
                    tuple(int(x) for x in queue.split(",")),
                    Event.from_label(event),
                )
            )
            actions.append(int(Action.from_name(action)))
            values.append(float(value))
    if meta.get("format") != POLICY_FORMAT:
        raise SolverError(f"{path}: not a {POLICY_FORMAT} file")
    for key in ("rho", "lambda_bar", "epsilon", "final_residual"):
        meta[key] = float(meta[key])
    for key in ("iterations", "n_states", "n_classes", "n_nodes", "max_replicas", "max_queue"):
        meta[key] = int(meta[key])
    if len(states) != meta["n_states"]:
        raise SolverError(
            f"{path}: header promises {meta['n_states']} states, found {len(states)}"
        )
    return PolicyTable(states, np.array(actions, dtype=np.int8), np.array(values), meta)


def solve(
    cfg: ScalingConfig,
    epsilon: Optional[float] = None,
    state_limit: int = model.DEFAULT_STATE_LIMIT,
    max_iter: int = 100_000,
) -> tuple[list[SystemState], UniformizedModel, Policy]:
    """Enumerate, uniformize, and run value iteration for `cfg`."""
    states = model.enumerate_states(cfg, limit=state_limit)
    umodel = uniformize(states, cfg)
    policy = value_iteration(umodel, epsilon=epsilon, max_iter=max_iter)
    return states, umodel, policy
