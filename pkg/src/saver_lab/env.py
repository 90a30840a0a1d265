"""Layered tabular environments: bandits, tree MDPs and layered DAG MDPs.

States are stored level by level (the root is state 0) and every state has the
same number of actions; action 0 is the baseline (safe) action. Rewards and
costs are Gaussian with per-(state, action) mean and standard deviation, and
transitions are known.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

STOCHASTIC_TOL = 1e-9
MODES = ("tree", "dag", "bandit")


class MdpValidationError(ValueError):
    pass


class RowNotStochastic(MdpValidationError):
    def __init__(self, state, action, detail=""):
        self.state, self.action = state, action
        super().__init__(f"transition row ({state!r}, {action}) is not a probability vector {detail}".rstrip())


class TreeMultiParent(MdpValidationError):
    def __init__(self, state, parents=()):
        self.state, self.parents = state, tuple(parents)
        super().__init__(f"state {state!r} is reachable from several (state, action) pairs: {list(parents)}")


class LevelSkip(MdpValidationError):
    def __init__(self, state, action=None, target=None):
        self.state, self.action, self.target = state, action, target
        super().__init__(
            f"transition ({state!r}, {action}) -> {target!r} does not go to the next level"
        )


class NegativeStd(MdpValidationError):
    def __init__(self, state, action):
        self.state, self.action = state, action
        super().__init__(f"negative standard deviation at ({state!r}, {action})")


class MeanOutOfRange(MdpValidationError):
    def __init__(self, state, action, value=None, eta=None):
        self.state, self.action = state, action
        super().__init__(f"mean {value} at ({state!r}, {action}) outside [0, {eta}]")


class SelectorInvalidAction(ValueError):
    def __init__(self, state, action):
        self.state, self.action = state, action
        super().__init__(f"selector returned invalid action {action!r} at state {state!r}")


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LayeredMdp:
    """Tabular finite-horizon MDP with one root and level-by-level transitions.

    ``transitions[s, a]`` is a probability vector over all states (zero for
    states at the last level). Arrays are copied and made read-only.
    """

    level_sizes: tuple
    num_actions: int
    transitions: np.ndarray
    reward_mean: np.ndarray
    reward_std: np.ndarray
    cost_mean: np.ndarray
    cost_std: np.ndarray
    gamma: float = 1.0
    eta: float = 1.0
    state_names: tuple = ()
    action_names: tuple = ()
    level: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        sizes = tuple(int(x) for x in self.level_sizes)
        if not sizes or sizes[0] != 1 or min(sizes) < 1:
            raise MdpValidationError(f"bad level sizes {sizes}: need a single root and non-empty levels")
        S, A = sum(sizes), int(self.num_actions)
        if A < 1:
            raise MdpValidationError("need at least one action")
        object.__setattr__(self, "level_sizes", sizes)
        object.__setattr__(self, "num_actions", A)
        for name in ("reward_mean", "reward_std", "cost_mean", "cost_std"):
            arr = _frozen(getattr(self, name))
            if arr.shape != (S, A):
                raise MdpValidationError(f"{name} has shape {arr.shape}, expected {(S, A)}")
            object.__setattr__(self, name, arr)
        P = _frozen(self.transitions)
        if P.shape != (S, A, S):
            raise MdpValidationError(f"transitions have shape {P.shape}, expected {(S, A, S)}")
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "eta", float(self.eta))
        if not 0.0 <= self.gamma <= 1.0:
            raise MdpValidationError(f"gamma={self.gamma} outside [0, 1]")
        if not self.eta > 0:
            raise MdpValidationError(f"eta={self.eta} must be positive")
        names = tuple(self.state_names) or tuple(f"s{i}" for i in range(S))
        if len(names) != S or len(set(names)) != S:
            raise MdpValidationError("state_names must be unique, one per state")
        object.__setattr__(self, "state_names", tuple(str(x) for x in names))
        anames = tuple(self.action_names) or tuple(str(a) for a in range(A))
        if len(anames) != A:
            raise MdpValidationError("action_names must have one entry per action")
        object.__setattr__(self, "action_names", tuple(str(x) for x in anames))
        object.__setattr__(self, "level", _frozen(np.repeat(np.arange(1, len(sizes) + 1), sizes), int))

    @property
    def L(self) -> int:
        return len(self.level_sizes)

    @property
    def num_states(self) -> int:
        return len(self.state_names)

    @property
    def level_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.level_sizes)])

    def states_at(self, level: int) -> range:
        off = self.level_offsets
        return range(int(off[level - 1]), int(off[level]))

    def index(self, state) -> int:
        if isinstance(state, (int, np.integer)):
            return int(state)
        return self.state_names.index(state)

    def successors(self, s: int, a: int) -> np.ndarray:
        return np.flatnonzero(self.transitions[s, a] > 0)

    def is_bandit(self) -> bool:
        return self.num_states == 1

    @classmethod
    def bandit(cls, reward_mean, reward_std, cost_mean, cost_std=None, eta=None, action_names=()):
        rm = np.atleast_2d(np.asarray(reward_mean, float))
        A = rm.shape[1]
        cs = np.zeros((1, A)) if cost_std is None else np.atleast_2d(np.asarray(cost_std, float))
        cm = np.atleast_2d(np.asarray(cost_mean, float))
        if eta is None:
            eta = max(1.0, float(rm.max()), float(cm.max()))
        return cls(
            level_sizes=(1,),
            num_actions=A,
            transitions=np.zeros((1, A, 1)),
            reward_mean=rm,
            reward_std=np.atleast_2d(np.asarray(reward_std, float)),
            cost_mean=cm,
            cost_std=cs,
            gamma=1.0,
            eta=eta,
            state_names=("root",),
            action_names=action_names,
        )


@dataclass(frozen=True, eq=False)
class TargetPolicy:
    """Row-stochastic matrix ``probs[s, a]``."""

    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 2:
            raise ValueError("policy probs must be a (states, actions) matrix")
        if (p < 0).any() or np.abs(p.sum(axis=1) - 1.0).max() > STOCHASTIC_TOL:
            raise ValueError("every policy row must be a probability vector")
        object.__setattr__(self, "probs", p)

    @classmethod
    def baseline(cls, mdp: LayeredMdp) -> "TargetPolicy":
        p = np.zeros((mdp.num_states, mdp.num_actions))
        p[:, 0] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, mdp: LayeredMdp) -> "TargetPolicy":
        return cls(np.full((mdp.num_states, mdp.num_actions), 1.0 / mdp.num_actions))

    @classmethod
    def stationary(cls, mdp: LayeredMdp, row) -> "TargetPolicy":
        return cls(np.tile(np.asarray(row, float), (mdp.num_states, 1)))

    def __getitem__(self, s):
        return self.probs[s]


@dataclass(frozen=True)
class Step:
    state: int
    action: int
    reward: float
    cost: float


@dataclass(frozen=True)
class EpisodeRecord:
    steps: tuple

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)


def validate(mdp: LayeredMdp, mode: str = "tree") -> bool:
    """Check the structural invariants for ``mode``; raise on the first violation."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    names, P, L = mdp.state_names, mdp.transitions, mdp.L
    if mode == "bandit" and (L != 1 or mdp.num_states != 1):
        raise MdpValidationError("bandit mode needs exactly one level with one state")
    for s in range(mdp.num_states):
        for a in range(mdp.num_actions):
            if mdp.reward_std[s, a] < 0 or mdp.cost_std[s, a] < 0:
                raise NegativeStd(names[s], a)
            for m in (mdp.reward_mean[s, a], mdp.cost_mean[s, a]):
                if not 0.0 <= m <= mdp.eta:
                    raise MeanOutOfRange(names[s], a, m, mdp.eta)
            row = P[s, a]
            if (row < 0).any():
                raise RowNotStochastic(names[s], a, "(negative entry)")
            lvl = mdp.level[s]
            for t in np.flatnonzero(row):
                if mdp.level[t] != lvl + 1:
                    raise LevelSkip(names[s], a, names[t])
            if lvl < L and abs(row.sum() - 1.0) > STOCHASTIC_TOL:
                raise RowNotStochastic(names[s], a, f"(sums to {row.sum()!r})")
    if mode == "tree":
        for t in range(1, mdp.num_states):
            parents = [(names[s], a) for s, a in zip(*np.nonzero(P[:, :, t] > 0))]
            if len(parents) > 1:
                raise TreeMultiParent(names[t], parents)
    return True


def _channel_means(mdp: LayeredMdp, channel: str) -> np.ndarray:
    if channel == "reward":
        return mdp.reward_mean
    if channel == "cost":
        return mdp.cost_mean
    raise ValueError(f"channel must be 'reward' or 'cost', got {channel!r}")


def backup(mdp: LayeredMdp, probs: np.ndarray, means: np.ndarray) -> np.ndarray:
    """Exact backward recursion V(s) = sum_a probs[s,a] (means[s,a] + gamma P V)."""
    V = np.zeros(mdp.num_states)
    for level in range(mdp.L, 0, -1):
        for s in mdp.states_at(level):
            q = means[s] + mdp.gamma * (mdp.transitions[s] @ V)
            V[s] = float(probs[s] @ q)
    return V


def true_value(mdp: LayeredMdp, policy, channel: str = "reward") -> np.ndarray:
    """Exact value of ``policy`` for every state (array indexed like ``mdp.state_names``)."""
    probs = policy.probs if isinstance(policy, TargetPolicy) else np.asarray(policy, float)
    return backup(mdp, probs, _channel_means(mdp, channel))


def sample_step(mdp: LayeredMdp, state: int, action: int, rng: np.random.Generator):
    """Draw (reward, cost, next_state) for one step; next_state is None at the last level.

    Samples are unclipped Gaussians.
    """
    reward = mdp.reward_mean[state, action] + mdp.reward_std[state, action] * rng.standard_normal()
    cost = mdp.cost_mean[state, action] + mdp.cost_std[state, action] * rng.standard_normal()
    if mdp.level[state] == mdp.L:
        return float(reward), float(cost), None
    row = mdp.transitions[state, action]
    nxt = int(np.searchsorted(np.cumsum(row), rng.random(), side="right"))
    nxt = min(nxt, int(np.flatnonzero(row)[-1]))
    return float(reward), float(cost), nxt


def run_episode(mdp: LayeredMdp, action_selector: Callable[[int], int], rng) -> EpisodeRecord:
    steps = []
    s = 0
    for _ in range(mdp.L):
        a = action_selector(s)
        if not isinstance(a, (int, np.integer)) or not 0 <= a < mdp.num_actions:
            raise SelectorInvalidAction(mdp.state_names[s], a)
        r, c, nxt = sample_step(mdp, s, int(a), rng)
        steps.append(Step(s, int(a), r, c))
        s = nxt
    return EpisodeRecord(tuple(steps))


def enumerate_trajectories(mdp: LayeredMdp, probs: np.ndarray) -> list:
    """All (probability, [(s, a), ...]) trajectories with positive probability."""
    out = []

    def rec(s, prob, path):
        for a in range(mdp.num_actions):
            pa = prob * probs[s, a]
            if pa == 0:
                continue
            here = path + [(s, a)]
            if mdp.level[s] == mdp.L:
                out.append((pa, here))
                continue
            for t in np.flatnonzero(mdp.transitions[s, a]):
                rec(t, pa * mdp.transitions[s, a, t], here)

    rec(0, 1.0, [])
    return out


def build_mdp(levels: Sequence[Sequence[str]], num_actions: int, pairs: dict, gamma=1.0, eta=1.0,
              action_names=()) -> LayeredMdp:
    """Assemble an MDP from named states.

    ``pairs`` maps ``(state, action)`` to a dict with ``reward`` (mean, std),
    ``cost`` (mean, std) and ``next`` ({state: prob}); missing pairs default to
    zero reward/cost.
    """
    names = [str(s) for lvl in levels for s in lvl]
    idx = {s: i for i, s in enumerate(names)}
    S, A = len(names), int(num_actions)
    P = np.zeros((S, A, S))
    rm, rs, cm, cs = (np.zeros((S, A)) for _ in range(4))
    for (s, a), spec in pairs.items():
        i = idx[str(s)]
        rm[i, a], rs[i, a] = spec.get("reward", (0.0, 0.0))
        cm[i, a], cs[i, a] = spec.get("cost", (0.0, 0.0))
        for t, p in spec.get("next", {}).items():
            P[i, a, idx[str(t)]] = p
    return LayeredMdp(
        level_sizes=tuple(len(lvl) for lvl in levels),
        num_actions=A,
        transitions=P,
        reward_mean=rm,
        reward_std=rs,
        cost_mean=cm,
        cost_std=cs,
        gamma=gamma,
        eta=eta,
        state_names=tuple(names),
        action_names=action_names,
    )
