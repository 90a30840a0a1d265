"""Behavior strategies, the lower-confidence safety budget and the tracking rule.

The functions here are the readable single-step building blocks. Whole runs
are executed by :mod:`saver_lab.kernels` (compiled core with a pure-Python
fallback); :func:`run_reference` replays the same logic from these building
blocks and is used to cross-check the kernels.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .allocation import AllocationTable, compute_b_star
from .env import EpisodeRecord, LayeredMdp, Step, TargetPolicy, backup
from .estimator import (
    EstimateView,
    SufficientStats,
    WidthParams,
    estimates,
    path_value,
    plug_in_allocation,
)


class StrategyKind(str, enum.Enum):
    OnPolicy = "OnPolicy"
    BaselineOnly = "BaselineOnly"
    OracleUnconstrained = "OracleUnconstrained"
    SafeOracle = "SafeOracle"
    SaVeR = "SaVeR"
    BanditSaVeR = "BanditSaVeR"


class Phase(enum.IntEnum):
    Baseline = 0
    Explore = 1
    Track = 2
    OnPolicy = 3


@dataclass(frozen=True)
class StrategyConfig:
    """Strategy kind plus the knobs shared by every strategy.

    ``inject_sigma`` makes SaVeR / BanditSaVeR use the true reward stds in place
    of their upper confidence bounds. ``known_baseline`` credits baseline
    episodes with the known baseline cost value instead of a lower confidence
    bound. ``gate_onpolicy`` makes OnPolicy fall back to the baseline while
    the budget is negative.
    """

    kind: StrategyKind = StrategyKind.SaVeR
    alpha: float = 0.25
    delta: float = 0.1
    eta: float | None = None
    width_mode: str = "appendix"
    width_scale: float = 1.0
    explore: bool = True
    inject_sigma: bool = False
    known_baseline: bool = False
    gate_onpolicy: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha={self.alpha} outside (0, 1]")

    def width_params(self, mdp: LayeredMdp, n: int) -> WidthParams:
        eta = mdp.eta if self.eta is None else self.eta
        return WidthParams.for_mdp(mdp, n, delta=self.delta, eta=eta, mode=self.width_mode, scale=self.width_scale)

    def with_kind(self, kind) -> "StrategyConfig":
        return replace(self, kind=StrategyKind(kind))


def exploration_horizon(K: int) -> int:
    """ceil(sqrt(K)) computed exactly on integers."""
    if K <= 0:
        return 0
    return math.isqrt(K - 1) + 1


def phase_for_episode(k: int, K: int, z: float) -> Phase:
    if not 1 <= k <= K:
        raise ValueError(f"episode index {k} outside [1, {K}]")
    if z < 0:
        return Phase.Baseline
    if k <= exploration_horizon(K):
        return Phase.Explore
    return Phase.Track


def _counts(counts) -> np.ndarray:
    return counts.count if isinstance(counts, SufficientStats) else np.asarray(counts)


def track_action(state: int, counts, alloc) -> int:
    """argmax_a b(a|s) / T(s, a); unvisited actions rank first, ties go low."""
    b = alloc.b_star[state] if isinstance(alloc, AllocationTable) else np.asarray(alloc)[state]
    T = _counts(counts)[state]
    best, choice = -1.0, 0
    for a in range(len(b)):
        ratio = math.inf if T[a] == 0 else b[a] / T[a]
        if ratio > best:
            best, choice = ratio, a
    return choice


def explore_action(state: int, rng, num_actions: int) -> int:
    a = int(rng.random() * num_actions)
    return min(a, num_actions - 1)


def on_policy_action(state: int, policy, rng) -> int:
    row = policy.probs[state] if isinstance(policy, TargetPolicy) else np.asarray(policy)[state]
    u = rng.random()
    cum, last = 0.0, 0
    for a, p in enumerate(row):
        if p > 0:
            last = a
        cum += p
        if u < cum:
            return a
    return last


@dataclass
class SafetyBudgetState:
    alpha: float
    baseline_cost_value: float
    z: float = 0.0
    credit: float = 0.0
    episodes_seen: int = 0
    violation_count: int = 0
    trace: list = field(default_factory=list)

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha={self.alpha} outside (0, 1]")

    def record(self, credit: float) -> "SafetyBudgetState":
        self.episodes_seen += 1
        self.credit += credit
        self.z = self.credit - (1.0 - self.alpha) * self.episodes_seen * self.baseline_cost_value
        self.trace.append(self.z)
        if self.z < 0:
            self.violation_count += 1
        return self


def update_budget_mdp(budget: SafetyBudgetState, episode: EpisodeRecord, view: EstimateView, mdp: LayeredMdp,
                      baseline_episode: bool = False, known_baseline: bool = False) -> SafetyBudgetState:
    """Add the episode's lower-confidence cost value and refresh Z.

    The value is the discounted sum of cost lower bounds along the realized
    trajectory (the tracking rule is deterministic, so this is the plug-in
    value of the policy actually run along the visited path).
    """
    if baseline_episode and known_baseline:
        credit = budget.baseline_cost_value
    else:
        credit = path_value(mdp, episode, view.cost_lcb)
    return budget.record(credit)


def bandit_budget(realized_credit: float, round_index: int, lookahead_lcb, alpha: float, baseline_mean: float) -> float:
    """Lookahead safety budget for round ``round_index`` (1-based).

    Without a lookahead estimate (candidate never pulled) the budget covers the
    ``round_index - 1`` past rounds only.
    """
    if lookahead_lcb is None or not math.isfinite(lookahead_lcb):
        return realized_credit - (1.0 - alpha) * (round_index - 1) * baseline_mean
    return realized_credit + lookahead_lcb - (1.0 - alpha) * round_index * baseline_mean


def bandit_allocation(pi, sigma_ucb) -> np.ndarray:
    """Normalized pi * sigma_ucb with infinite entries taking all the mass."""
    pi = np.asarray(pi, float)
    sig = np.asarray(sigma_ucb, float)
    w = np.where(pi > 0, pi * np.where(np.isinf(sig), 1.0, sig), 0.0)
    inf = (pi > 0) & np.isinf(sig)
    if inf.any():
        return inf / inf.sum()
    tot = 0.0
    for x in w:
        tot += x
    if tot > 0:
        return w / tot
    return (pi > 0) / (pi > 0).sum()


def bandit_step(round_index: int, n: int, stats: SufficientStats, view: EstimateView, budget_credit: float,
                alpha: float, baseline_mean: float, pi, rng, sigma=None):
    """One bandit decision: returns (action, phase, budget, candidate)."""
    sig = view.std_ucb[0] if sigma is None else np.asarray(sigma, float)
    b = bandit_allocation(pi, sig)
    J = track_action(0, stats.count[:1], b[None, :])
    look = view.cost_lcb[0, J] if stats.count[0, J] > 0 else None
    z = bandit_budget(budget_credit, round_index, look, alpha, baseline_mean)
    if z < 0:
        return 0, Phase.Baseline, z, J
    if round_index <= exploration_horizon(n):
        return explore_action(0, rng, len(b)), Phase.Explore, z, J
    return J, Phase.Track, z, J


def dag_strategy_action(state: int, counts, b0, mdp: LayeredMdp, policy, view: EstimateView) -> int:
    """Tracking action with rows built from the upper-bound stds and a B0 table."""
    pi = policy.probs if isinstance(policy, TargetPolicy) else np.asarray(policy)
    from .allocation import _normalize_row, _weights

    row = _normalize_row(_weights(mdp, pi, view.std_ucb, state, np.asarray(b0, float)), pi[state] > 0)
    return track_action(state, counts, row[None, :].repeat(mdp.num_states, 0))


def behavior_probs(mdp: LayeredMdp, phase: Phase, policy, counts=None, alloc=None) -> np.ndarray:
    """Full behavior policy of an episode (tracking rows use episode-start counts)."""
    S, A = mdp.num_states, mdp.num_actions
    probs = np.zeros((S, A))
    if phase == Phase.Baseline:
        probs[:, 0] = 1.0
    elif phase == Phase.Explore:
        probs[:] = 1.0 / A
    elif phase == Phase.OnPolicy:
        probs[:] = policy.probs if isinstance(policy, TargetPolicy) else policy
    else:
        for s in range(S):
            probs[s, track_action(s, counts, alloc)] = 1.0
    return probs


class _Replay:
    """Feeds pre-drawn uniforms to the ``rng.random()`` call sites."""

    def __init__(self, values):
        self._it = iter(np.asarray(values, float).ravel())

    def random(self):
        return float(next(self._it))


def run_reference(mdp: LayeredMdp, policy: TargetPolicy, cfg: StrategyConfig, n: int, noise,
                  baseline_value: float | None = None):
    """Slow episode loop assembled from the single-step functions above.

    ``noise`` is a :class:`saver_lab.kernels.NoiseTables`. Returns a dict with
    the action trace (pair ids), the budget trace, phases and final stats.
    """
    if cfg.kind == StrategyKind.BanditSaVeR:
        return _run_reference_bandit(mdp, policy, cfg, n, noise)
    S, A, L = mdp.num_states, mdp.num_actions, mdp.L
    K = n // L
    params = cfg.width_params(mdp, n)
    if baseline_value is None:
        baseline_value = float(backup(mdp, TargetPolicy.baseline(mdp).probs, mdp.cost_mean)[0])
    stats = SufficientStats.empty(S, A)
    budget = SafetyBudgetState(cfg.alpha, baseline_value)
    oracle = compute_b_star(mdp, policy)
    kind = cfg.kind
    actions, phases = [], []
    for k in range(1, K + 1):
        z = budget.z
        if kind == StrategyKind.BaselineOnly:
            phase = Phase.Baseline
        elif kind == StrategyKind.OracleUnconstrained:
            phase = Phase.Track
        elif kind == StrategyKind.OnPolicy:
            phase = Phase.Baseline if (cfg.gate_onpolicy and z < 0) else Phase.OnPolicy
        else:
            phase = phase_for_episode(k, K, z)
            if phase == Phase.Explore and not cfg.explore:
                phase = Phase.Track
        alloc = oracle
        if phase == Phase.Track and kind == StrategyKind.SaVeR:
            view = estimates(stats, params)
            sig = mdp.reward_std if cfg.inject_sigma else view.std_ucb
            alloc = compute_b_star(mdp, policy, sigma=sig) if cfg.inject_sigma else plug_in_allocation(mdp, policy, view)
        u_act = _Replay(noise.ua[k - 1])
        steps = []
        s = 0
        for _ in range(L):
            if phase == Phase.Baseline:
                a = 0
            elif phase == Phase.Track:
                a = track_action(s, stats, alloc)
            elif phase == Phase.Explore:
                a = explore_action(s, u_act, A)
            else:
                a = on_policy_action(s, policy, u_act)
            u_act_consumed = phase in (Phase.Explore, Phase.OnPolicy)
            if not u_act_consumed:
                u_act.random()
            r, c, nxt = noise.sample(mdp, s, a, int(stats.count[s, a]))
            stats.add(s, a, r, c)
            steps.append(Step(s, a, r, c))
            actions.append(s * A + a)
            s = nxt
        stats.steps += L
        stats.episodes += 1
        view = estimates(stats, params)
        update_budget_mdp(budget, EpisodeRecord(tuple(steps)), view, mdp,
                          baseline_episode=phase == Phase.Baseline, known_baseline=cfg.known_baseline)
        phases.append(int(phase))
    return {"actions": np.array(actions), "z": np.array(budget.trace), "phases": np.array(phases),
            "violations": budget.violation_count, "stats": stats}


def _run_reference_bandit(mdp, policy, cfg, n, noise):
    A = mdp.num_actions
    params = cfg.width_params(mdp, n)
    mu_c0 = float(mdp.cost_mean[0, 0])
    pi = policy.probs[0]
    stats = SufficientStats.empty(1, A)
    credit, viol = 0.0, 0
    actions, zs, phases = [], [], []
    for l in range(1, n + 1):
        view = estimates(stats, params)
        sigma = mdp.reward_std[0] if cfg.inject_sigma else None
        a, phase, z, _ = bandit_step(l, n, stats, view, credit, cfg.alpha, mu_c0, pi,
                                     _Replay(noise.ua[l - 1]), sigma=sigma)
        if phase == Phase.Explore and not cfg.explore:
            phase, a = Phase.Track, _
        r, c, _n = noise.sample(mdp, 0, a, int(stats.count[0, a]))
        stats.add(0, a, r, c)
        stats.steps += 1
        view = estimates(stats, params)
        credit += mu_c0 if (phase == Phase.Baseline and cfg.known_baseline) else float(view.cost_lcb[0, a])
        viol += z < 0
        actions.append(a)
        zs.append(z)
        phases.append(int(phase))
    return {"actions": np.array(actions), "z": np.array(zs), "phases": np.array(phases),
            "violations": int(viol), "stats": stats}
