"""Running sufficient statistics, confidence widths and certainty-equivalence values."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .allocation import AllocationTable, compute_b_star
from .env import EpisodeRecord, LayeredMdp, TargetPolicy, backup

WIDTH_MODES = ("appendix", "main")


@dataclass(frozen=True)
class WidthParams:
    """Confidence-width configuration.

    ``appendix``: (2 eta + 4 eta^2) sqrt(log(S A n (n+1) / delta) / (2 T)).
    ``main``: L sqrt(log(S A n (n+1)) / T).
    Both are multiplied by ``scale``; ``scale=0`` gives zero width for T >= 1.
    """

    delta: float = 0.1
    eta: float = 1.0
    S: int = 1
    A: int = 2
    n: int = 1
    L: int = 1
    mode: str = "appendix"
    scale: float = 1.0

    def __post_init__(self):
        if self.mode not in WIDTH_MODES:
            raise ValueError(f"width mode must be one of {WIDTH_MODES}, got {self.mode!r}")
        if self.n < 1:
            raise ValueError("budget n must be >= 1")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta={self.delta} outside (0, 1)")
        if self.scale < 0:
            raise ValueError("width scale must be nonnegative")

    @classmethod
    def for_mdp(cls, mdp: LayeredMdp, n: int, **kw) -> "WidthParams":
        kw.setdefault("eta", mdp.eta)
        return cls(S=mdp.num_states, A=mdp.num_actions, n=int(n), L=mdp.L, **kw)

    def log_term(self) -> float:
        base = self.S * self.A * self.n * (self.n + 1)
        if self.mode == "appendix":
            return math.log(base / self.delta)
        return math.log(base)

    def coefficient(self) -> float:
        """Width at T = 1; the width at T is ``coefficient() / sqrt(T)``."""
        if self.mode == "appendix":
            c = 2 * self.eta + 4 * self.eta ** 2
            return self.scale * c * math.sqrt(self.log_term() / 2)
        return self.scale * self.L * math.sqrt(self.log_term())


def width(T, params: WidthParams):
    """Confidence radius for a pair visited T times (+inf when T = 0)."""
    coef = params.coefficient()
    T = np.asarray(T)
    with np.errstate(divide="ignore"):
        out = np.where(T > 0, coef / np.sqrt(np.maximum(T, 1)), np.inf)
    return float(out) if out.ndim == 0 else out


@dataclass
class SufficientStats:
    count: np.ndarray
    sum_r: np.ndarray
    sum_r2: np.ndarray
    sum_c: np.ndarray
    steps: int = 0
    episodes: int = 0

    @classmethod
    def empty(cls, num_states: int, num_actions: int) -> "SufficientStats":
        shape = (num_states, num_actions)
        return cls(np.zeros(shape, dtype=np.int64), np.zeros(shape), np.zeros(shape), np.zeros(shape))

    def copy(self) -> "SufficientStats":
        return SufficientStats(
            self.count.copy(), self.sum_r.copy(), self.sum_r2.copy(), self.sum_c.copy(), self.steps, self.episodes
        )

    def add(self, s: int, a: int, reward: float, cost: float) -> None:
        self.count[s, a] += 1
        self.sum_r[s, a] += reward
        self.sum_r2[s, a] += reward * reward
        self.sum_c[s, a] += cost


def update(stats: SufficientStats, episode: EpisodeRecord) -> SufficientStats:
    """Fold one episode into ``stats`` in place and return it."""
    for step in episode:
        stats.add(step.state, step.action, step.reward, step.cost)
    stats.steps += len(episode)
    stats.episodes += 1
    return stats


@dataclass(frozen=True, eq=False)
class EstimateView:
    mean: np.ndarray
    std: np.ndarray
    std_ucb: np.ndarray
    cost_mean: np.ndarray
    cost_lcb: np.ndarray
    width: np.ndarray
    params: WidthParams = field(default_factory=WidthParams)


def estimates(stats: SufficientStats, params: WidthParams) -> EstimateView:
    T = stats.count
    seen = T > 0
    safe_T = np.maximum(T, 1)
    mean = np.where(seen, stats.sum_r / safe_T, 0.0)
    var = np.where(seen, stats.sum_r2 / safe_T - mean ** 2, 0.0)
    std = np.sqrt(np.maximum(var, 0.0))
    cmean = np.where(seen, stats.sum_c / safe_T, 0.0)
    w = np.asarray(width(T, params), dtype=float).reshape(T.shape)
    return EstimateView(
        mean=mean,
        std=std,
        std_ucb=std + w,
        cost_mean=cmean,
        cost_lcb=cmean - w,
        width=w,
        params=params,
    )


def certainty_value(mdp: LayeredMdp, policy, mean_source) -> np.ndarray:
    """Plug-in value Y(s) for every state using known transitions.

    ``policy`` may be a TargetPolicy, a (S, A) probability matrix, or a
    sequence/dict giving one deterministic action per state.
    """
    means = np.asarray(mean_source, float)
    if isinstance(policy, TargetPolicy):
        probs = policy.probs
    else:
        arr = policy
        if isinstance(arr, dict):
            arr = [arr.get(s, 0) for s in range(mdp.num_states)]
        arr = np.asarray(arr)
        if arr.ndim == 1:
            probs = np.zeros((mdp.num_states, mdp.num_actions))
            probs[np.arange(mdp.num_states), arr.astype(int)] = 1.0
        else:
            probs = arr.astype(float)
    return backup(mdp, probs, means)


def plug_in_allocation(mdp: LayeredMdp, policy, view: EstimateView) -> AllocationTable:
    """Oracle allocation with the variance upper bounds in place of the true stds.

    Unvisited pairs carry an infinite upper bound, which puts all of a state's
    mass (uniformly) on its unvisited supported actions.
    """
    return compute_b_star(mdp, policy, sigma=view.std_ucb)


def path_value(mdp: LayeredMdp, steps, means) -> float:
    """Discounted sum of ``means`` along a realized trajectory, accumulated backwards."""
    y = 0.0
    for st in reversed(list(steps)):
        s, a = (st.state, st.action) if hasattr(st, "state") else st
        y = means[s, a] + mdp.gamma * y
    return float(y)
