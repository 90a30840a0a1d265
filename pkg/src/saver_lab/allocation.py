"""Variance-optimal allocation quantities and problem-hardness parameters."""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .env import LayeredMdp, TargetPolicy, backup, true_value


class AllZeroMass(ValueError):
    pass


class BaselineCostZero(ValueError):
    def __init__(self, state):
        self.state = state
        super().__init__(f"baseline cost mean is zero at state {state!r}")


class BaselineValueZero(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AllocationTable:
    m: np.ndarray
    b_star: np.ndarray
    m_total: float
    m_min: float


@dataclass
class ComplexityReport:
    h2_per_state: np.ndarray
    h2_total: float
    h1: float
    delta_c: np.ndarray
    delta_c_alpha: np.ndarray
    c_sigma: float
    worst_cost_value: float
    tractable: bool
    n_min: float
    m_root: float = float("nan")
    m_total: float = float("nan")
    baseline_cost_value: float = float("nan")

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            if isinstance(v, np.ndarray):
                v = v.tolist()
            elif isinstance(v, float) and math.isinf(v):
                v = "inf"
            elif isinstance(v, (np.bool_, bool)):
                v = bool(v)
            out[k] = v
        return out


def _probs(policy) -> np.ndarray:
    return policy.probs if isinstance(policy, TargetPolicy) else np.asarray(policy, float)


def _weights(mdp: LayeredMdp, pi: np.ndarray, sigma: np.ndarray, s: int, child_m: np.ndarray) -> np.ndarray:
    # sqrt(pi^2 [sigma^2 + gamma^2 sum_s' P M^2(s')]); zero where pi = 0
    P = mdp.transitions[s]
    spread = np.array([float(P[a][P[a] > 0] @ child_m[P[a] > 0] ** 2) for a in range(mdp.num_actions)])
    with np.errstate(invalid="ignore"):
        w = np.sqrt(pi[s] ** 2 * (sigma[s] ** 2 + mdp.gamma ** 2 * spread))
    return np.where(pi[s] > 0, w, 0.0)


def _normalize_row(w: np.ndarray, support: np.ndarray) -> np.ndarray:
    if np.isinf(w).any():
        row = np.isinf(w).astype(float)
        return row / row.sum()
    total = w.sum()
    if total > 0:
        return w / total
    # M(s) = 0: every allocation is MSE-equivalent; spread over the target's support
    row = support.astype(float)
    return row / row.sum()


def _backward(mdp: LayeredMdp, pi: np.ndarray, sigma: np.ndarray):
    M = np.zeros(mdp.num_states)
    B = np.zeros((mdp.num_states, mdp.num_actions))
    for level in range(mdp.L, 0, -1):
        for s in mdp.states_at(level):
            w = _weights(mdp, pi, sigma, s, M)
            M[s] = np.inf if np.isinf(w).any() else w.sum()
            B[s] = _normalize_row(w, pi[s] > 0)
    return M, B


def compute_M(mdp: LayeredMdp, policy, sigma=None) -> np.ndarray:
    """Normalization factors M(s), computed from the last level back to the root."""
    sigma = mdp.reward_std if sigma is None else np.asarray(sigma, float)
    return _backward(mdp, _probs(policy), sigma)[0]


def compute_b_star(mdp: LayeredMdp, policy, sigma=None) -> AllocationTable:
    """Oracle sampling proportions b*(a|s) together with M(s).

    ``sigma`` overrides the environment's reward stds (used for plug-in
    allocations); infinite entries force uniform mass on those actions.
    """
    sigma = mdp.reward_std if sigma is None else np.asarray(sigma, float)
    M, B = _backward(mdp, _probs(policy), sigma)
    return AllocationTable(m=M, b_star=B, m_total=float(M.sum()), m_min=float(M.min()))


def bandit_b_star(pi, sigma) -> np.ndarray:
    pi, sigma = np.asarray(pi, float), np.asarray(sigma, float)
    w = pi * sigma
    total = w.sum()
    if not total > 0:
        raise AllZeroMass("sum of pi * sigma is zero; proportions undefined")
    return w / total


def dag_B0(mdp: LayeredMdp, policy, sigma=None) -> np.ndarray:
    """Iterative B_0 estimate for layered DAGs (each state read at its own level).

    Runs the value-iteration style sweep for t' = L-1 .. 0 over all states and
    keeps, for a state at level l, the value produced at sweep index l-1.
    """
    pi = _probs(policy)
    sigma = mdp.reward_std if sigma is None else np.asarray(sigma, float)
    S, L = mdp.num_states, mdp.L
    nxt = np.zeros(S)  # B_{t'+1}
    out = np.zeros(S)
    for t in range(L - 1, -1, -1):
        cur = np.zeros(S)
        for s in range(S):
            cur[s] = _weights(mdp, pi, sigma, s, nxt).sum()
        for s in mdp.states_at(t + 1):
            out[s] = cur[s]
        nxt = cur
    return out


def dag_allocation(mdp: LayeredMdp, policy, sigma=None) -> AllocationTable:
    """Allocation rows proportional to sqrt(pi^2 [sigma^2 + gamma^2 sum P B0^2])."""
    pi = _probs(policy)
    sigma = mdp.reward_std if sigma is None else np.asarray(sigma, float)
    B0 = dag_B0(mdp, pi, sigma)
    B = np.zeros((mdp.num_states, mdp.num_actions))
    for s in range(mdp.num_states):
        B[s] = _normalize_row(_weights(mdp, pi, sigma, s, B0), pi[s] > 0)
    return AllocationTable(m=B0, b_star=B, m_total=float(B0.sum()), m_min=float(B0.min()))


def min_plus(x: float, y: float) -> float:
    return abs(min(x, y))


def cost_gaps(mdp: LayeredMdp) -> np.ndarray:
    """Delta_c(s, a) = max_a' mu_c(s, a') - mu_c(s, a)."""
    cm = mdp.cost_mean
    return cm.max(axis=1, keepdims=True) - cm


def hardness_h2(mdp: LayeredMdp, policy, alpha: float, weights: str = "pi_sigma"):
    """Per-state and total H_{*,(2)}.

    ``weights="pi_sigma"`` is the main-text form with the 1/(alpha mu_c(s,0))
    prefactor; ``weights="b_star"`` is the appendix variant sum_a b*(a|s) min+.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha={alpha} outside (0, 1]")
    pi = _probs(policy)
    gaps = cost_gaps(mdp)
    S, A = mdp.num_states, mdp.num_actions
    per_state = np.zeros(S)
    if weights == "pi_sigma":
        for s in range(S):
            base = mdp.cost_mean[s, 0]
            if base <= 0:
                raise BaselineCostZero(mdp.state_names[s])
            acc = 0.0
            for a in range(1, A):
                acc += pi[s, a] * mdp.reward_std[s, a] * min_plus(gaps[s, a], gaps[s, 0] - gaps[s, a])
            per_state[s] = acc / (alpha * base)
    elif weights == "b_star":
        b = compute_b_star(mdp, pi).b_star
        for s in range(S):
            per_state[s] = sum(b[s, a] * min_plus(gaps[s, a], gaps[s, 0] - gaps[s, a]) for a in range(A))
    else:
        raise ValueError(f"unknown weights variant {weights!r}")
    return per_state, float(per_state.sum())


def hardness_h1(v_c_baseline: float, v_c_oracle: float, alpha: float) -> float:
    delta0 = abs(v_c_oracle - v_c_baseline)
    return (alpha * v_c_baseline + delta0) / (alpha * v_c_baseline)


def worst_cost_policy(mdp: LayeredMdp):
    """Deterministic policy minimizing the cost value; ties go to the lowest action."""
    V = np.zeros(mdp.num_states)
    choice = np.zeros(mdp.num_states, dtype=int)
    for level in range(mdp.L, 0, -1):
        for s in mdp.states_at(level):
            q = mdp.cost_mean[s] + mdp.gamma * (mdp.transitions[s] @ V)
            a = int(np.argmin(q))
            choice[s], V[s] = a, q[a]
    probs = np.zeros((mdp.num_states, mdp.num_actions))
    probs[np.arange(mdp.num_states), choice] = 1.0
    return TargetPolicy(probs), float(V[0])


def c_sigma(table: AllocationTable) -> float:
    best = 0.0
    for s in range(len(table.m)):
        if table.m[s] > 0 and np.isfinite(table.m[s]):
            best = max(best, float(table.b_star[s].max() / table.m[s]))
    return best


def tractability_bound(mdp: LayeredMdp, policy, alpha: float):
    """(tractable, n_min) from the budget condition on sqrt(n)."""
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha={alpha} outside (0, 1]")
    v_base = true_value(mdp, TargetPolicy.baseline(mdp), "cost")[0]
    if v_base <= 0:
        raise BaselineValueZero("baseline cost value must be positive")
    _, v_worst = worst_cost_policy(mdp)
    cs = c_sigma(compute_b_star(mdp, policy))
    return tractability_from_parts(alpha, v_worst / v_base, cs)


def tractability_from_parts(alpha: float, ratio: float, c_sig: float):
    gap = 1.0 - ratio
    num = gap / alpha
    den = (c_sig / alpha) * gap - 1.0
    if num <= 0:
        return True, 0
    if den <= 0:
        return False, math.inf
    return True, int(math.ceil((num / den) ** 2 - 1e-12))


def complexity_report(mdp: LayeredMdp, policy, alpha: float, allocation=None) -> ComplexityReport:
    pi = _probs(policy)
    table = allocation or compute_b_star(mdp, pi)
    gaps = cost_gaps(mdp)
    delta_alpha = (1 - alpha) * mdp.cost_mean[:, :1] - mdp.cost_mean
    try:
        h2_per_state, h2_total = hardness_h2(mdp, pi, alpha)
    except BaselineCostZero:
        h2_per_state, h2_total = np.full(mdp.num_states, np.nan), float("nan")
    v_base = float(true_value(mdp, TargetPolicy.baseline(mdp), "cost")[0])
    v_oracle = float(backup(mdp, table.b_star, mdp.cost_mean)[0])
    _, v_worst = worst_cost_policy(mdp)
    cs = c_sigma(table)
    if v_base > 0:
        tractable, n_min = tractability_from_parts(alpha, v_worst / v_base, cs)
        h1 = hardness_h1(v_base, v_oracle, alpha)
    else:
        tractable, n_min, h1 = False, math.inf, float("nan")
    return ComplexityReport(
        h2_per_state=h2_per_state,
        h2_total=h2_total,
        h1=h1,
        delta_c=gaps,
        delta_c_alpha=delta_alpha,
        c_sigma=cs,
        worst_cost_value=v_worst,
        tractable=bool(tractable),
        n_min=n_min,
        m_root=float(table.m[0]),
        m_total=table.m_total,
        baseline_cost_value=v_base,
    )
