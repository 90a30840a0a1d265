"""Built-in problem instances.

Values the source experiments leave open are fixed here as documented
choices (marked ``# choice`` where they appear):

* bandit11: suboptimal-arm means are evenly spaced over [0.02, 0.03]; cost
  noise std is 0.05 on every arm.
* intractable_bandit: reward means are all 0.5; cost noise std is 0.05.
* tree4x2: reward means 0.5 (low-variance action) and 0.4 (high-variance
  action); cost means 0.5 and 0.3 so that tracking the high-variance action
  alone would break the constraint; cost noise std 0.05.
* grid4x4: the 4x4 grid is unrolled over 4 time steps into a layered DAG
  whose state is (time, row, col) and which starts in the top-left cell.
  Moves succeed with probability 0.8 and slip to each perpendicular
  direction with probability 0.1; moving into a wall stays put. R is the
  baseline action. Rewards and costs depend on the action only.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..env import LayeredMdp, TargetPolicy, build_mdp, validate


class UnknownScenario(KeyError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}")


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    mdp: LayeredMdp
    policy: TargetPolicy
    alpha: float
    mode: str
    defaults: dict = field(default_factory=dict)


# Shared run defaults. The width scale shrinks the confidence radius from its
# worst-case constant: at scale 1 the lower cost bounds stay below the
# baseline threshold for every budget on the default grid, so every safe
# strategy degenerates to the baseline.
BUDGETS = (500, 1000, 2000, 4000, 8000)
RUN_DEFAULTS = {
    "delta": 0.1,
    "width_mode": "appendix",
    "width_scale": 0.01,
    "known_baseline": False,
    "repetitions": 200,
    "seed": 2024,
}


def intractable_bandit(alpha: float = 0.25, std_scale: float = 1.0) -> Scenario:
    stds = np.array([0.001, 0.001, 0.25]) * std_scale
    mdp = LayeredMdp.bandit(
        reward_mean=[0.5, 0.5, 0.5],  # choice
        reward_std=stds,
        cost_mean=[0.5, 0.5 + alpha, 0.0],
        cost_std=[0.05, 0.05, 0.05],  # choice
        action_names=("base", "safe", "risky"),
    )
    policy = TargetPolicy(np.full((1, 3), 1.0 / 3))
    return Scenario("intractable_bandit", mdp, policy, alpha, "bandit", dict(RUN_DEFAULTS, budgets=BUDGETS))


def bandit11(alpha: float = 0.25) -> Scenario:
    n_sub = 10
    sub_means = np.linspace(0.02, 0.03, n_sub)  # choice
    means = np.concatenate([[0.5, 0.9], sub_means])
    stds = np.concatenate([[0.01, 0.01], np.full(n_sub, np.sqrt(40.0))])
    mdp = LayeredMdp.bandit(
        reward_mean=means,
        reward_std=stds,
        cost_mean=means,
        cost_std=np.full(len(means), 0.05),  # choice
    )
    pi = np.concatenate([[0.4, 0.4], np.full(n_sub, 0.2 / n_sub)])
    return Scenario("bandit11", mdp, TargetPolicy(pi[None, :]), alpha, "bandit", dict(RUN_DEFAULTS, budgets=BUDGETS))


def tree4x2(alpha: float = 0.25, depth: int = 4) -> Scenario:
    levels, pairs = [], {}
    for d in range(depth):
        levels.append([f"n{d}_{i}" for i in range(2 ** d)])
    for d in range(depth):
        for i in range(2 ** d):
            s = f"n{d}_{i}"
            for a, (rm, rs, cm) in enumerate([(0.5, 0.1, 0.5), (0.4, np.sqrt(20.0), 0.3)]):
                spec = {"reward": (rm, rs), "cost": (cm, 0.05)}
                if d + 1 < depth:
                    spec["next"] = {f"n{d + 1}_{2 * i + a}": 1.0}
                pairs[(s, a)] = spec
    mdp = build_mdp(levels, 2, pairs, action_names=("low_var", "high_var"))
    policy = TargetPolicy.stationary(mdp, [0.95, 0.05])
    defaults = dict(RUN_DEFAULTS, budgets=BUDGETS, delta=0.05, known_baseline=True)
    return Scenario("tree4x2", mdp, policy, alpha, "tree", defaults)


GRID_MOVES = {"R": (0, 1), "D": (1, 0), "L": (0, -1), "U": (-1, 0)}
GRID_PERP = {"R": ("D", "U"), "L": ("D", "U"), "D": ("R", "L"), "U": ("R", "L")}


def grid4x4(alpha: float = 0.25, size: int = 4, horizon: int = 4, slip: float = 0.2,
            literal_low_variance: bool = False) -> Scenario:
    """Gridworld unrolled over ``horizon`` steps.

    ``literal_low_variance=True`` gives L/U the same 0.01 variance as R/D
    (as printed in the source description); the default uses 20.0 so that L/U
    are the high-variance actions the description talks about.
    """
    actions = ("R", "D", "L", "U")
    hv = 0.1 if literal_low_variance else np.sqrt(20.0)
    arm = {"R": (0.6, 0.1, 0.5), "D": (0.5, 0.1, 0.5), "L": (0.2, hv, 0.3), "U": (0.3, hv, 0.3)}

    def move(cell, name):
        r, c = cell[0] + GRID_MOVES[name][0], cell[1] + GRID_MOVES[name][1]
        return (r, c) if 0 <= r < size and 0 <= c < size else cell

    layers = [[(0, 0)]]
    for _ in range(horizon - 1):
        nxt = set()
        for cell in layers[-1]:
            nxt.update(move(cell, m) for m in actions)
        layers.append(sorted(nxt))
    name = lambda t, cell: f"t{t}_r{cell[0]}c{cell[1]}"
    pairs = {}
    for t, layer in enumerate(layers):
        for cell in layer:
            for a, act in enumerate(actions):
                rm, rs, cm = arm[act]
                spec = {"reward": (rm, rs), "cost": (cm, 0.05)}
                if t + 1 < horizon:
                    out = {}
                    for m, p in [(act, 1 - slip)] + [(q, slip / 2) for q in GRID_PERP[act]]:
                        key = name(t + 1, move(cell, m))
                        out[key] = out.get(key, 0.0) + p
                    spec["next"] = out
                pairs[(name(t, cell), a)] = spec
    levels = [[name(t, cell) for cell in layer] for t, layer in enumerate(layers)]
    mdp = build_mdp(levels, 4, pairs, action_names=actions)
    policy = TargetPolicy.stationary(mdp, [0.45, 0.45, 0.05, 0.05])
    defaults = dict(RUN_DEFAULTS, budgets=BUDGETS, known_baseline=True, literal_low_variance=literal_low_variance)
    return Scenario("grid4x4", mdp, policy, alpha, "dag", defaults)


SCENARIOS = {
    "intractable_bandit": intractable_bandit,
    "bandit11": bandit11,
    "tree4x2": tree4x2,
    "grid4x4": grid4x4,
}


def scenario(name: str, **kw) -> Scenario:
    try:
        factory = SCENARIOS[name]
    except KeyError:
        raise UnknownScenario(name) from None
    sc = factory(**kw)
    validate(sc.mdp, sc.mode)
    return sc
