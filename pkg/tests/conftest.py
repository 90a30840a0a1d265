import numpy as np
import pytest

from saver_lab.env import LayeredMdp, TargetPolicy


def random_tree(rng, max_levels=4, max_states=15, num_actions=2, gamma=1.0):
    """Random tree MDP: every non-root state hangs off exactly one (state, action) pair."""
    A = num_actions
    levels = [[0]]
    parents = {}  # child -> (parent, action)
    S = 1
    while len(levels) < max_levels:
        pairs = [(s, a) for s in levels[-1] for a in range(A)]
        fan = [int(rng.integers(1, 3)) for _ in pairs]
        if S + sum(fan) > max_states:
            fan = [1] * len(pairs)
            if S + len(pairs) > max_states:
                break
        nxt = []
        for (s, a), k in zip(pairs, fan):
            for _ in range(k):
                parents[S] = (s, a)
                nxt.append(S)
                S += 1
        levels.append(nxt)
    P = np.zeros((S, A, S))
    for child, (s, a) in parents.items():
        P[s, a, child] = rng.uniform(0.1, 1.0)
    sums = P.sum(axis=2, keepdims=True)
    P = np.divide(P, sums, out=np.zeros_like(P), where=sums > 0)
    return _with_params(rng, [len(lv) for lv in levels], A, P, gamma)


def random_dag(rng, level_sizes=(1, 3, 3, 2), num_actions=3, gamma=1.0):
    S = sum(level_sizes)
    off = np.concatenate([[0], np.cumsum(level_sizes)])
    P = np.zeros((S, num_actions, S))
    for lvl in range(len(level_sizes) - 1):
        lo, hi = off[lvl + 1], off[lvl + 2]
        for s in range(off[lvl], off[lvl + 1]):
            for a in range(num_actions):
                k = int(rng.integers(1, hi - lo + 1))
                targets = rng.choice(np.arange(lo, hi), size=k, replace=False)
                w = rng.uniform(0.1, 1.0, size=k)
                P[s, a, targets] = w / w.sum()
    return _with_params(rng, list(level_sizes), num_actions, P, gamma)


def _with_params(rng, sizes, A, P, gamma):
    S = sum(sizes)
    return LayeredMdp(
        level_sizes=tuple(sizes),
        num_actions=A,
        transitions=P,
        reward_mean=rng.uniform(0, 1, (S, A)),
        reward_std=rng.uniform(0, 2, (S, A)),
        cost_mean=rng.uniform(0.05, 1, (S, A)),
        cost_std=rng.uniform(0, 0.3, (S, A)),
        gamma=gamma,
        eta=1.0,
    )


def random_policy(rng, mdp):
    p = rng.uniform(0.05, 1, (mdp.num_states, mdp.num_actions))
    return TargetPolicy(p / p.sum(axis=1, keepdims=True))


def two_level_tree(leaf_means=(1.0, 3.0), root_mean=0.0, leaf_std=(1.0, 3.0), num_actions=1):
    """Root with a single action branching 1/2, 1/2 onto two leaves."""
    A = num_actions
    P = np.zeros((3, A, 3))
    P[0, 0, 1] = P[0, 0, 2] = 0.5
    for a in range(1, A):
        P[0, a, 1] = 1.0
    rm = np.zeros((3, A))
    rm[0, 0] = root_mean
    rm[1, :], rm[2, :] = leaf_means[0], leaf_means[1]
    rs = np.zeros((3, A))
    rs[1, :], rs[2, :] = leaf_std[0], leaf_std[1]
    return LayeredMdp(
        level_sizes=(1, 2),
        num_actions=A,
        transitions=P,
        reward_mean=rm,
        reward_std=rs,
        cost_mean=np.full((3, A), 0.5),
        cost_std=np.zeros((3, A)),
        eta=max(3.0, *leaf_means),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
