import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from saver_lab.allocation import compute_b_star
from saver_lab.env import EpisodeRecord, LayeredMdp, Step, TargetPolicy, run_episode, true_value
from saver_lab.estimator import (
    SufficientStats,
    WidthParams,
    certainty_value,
    estimates,
    path_value,
    plug_in_allocation,
    update,
    width,
)

from conftest import random_policy, random_tree
from test_env import enumerate_value


def stats_from(samples_by_arm, num_actions=None):
    A = num_actions or len(samples_by_arm)
    st_ = SufficientStats.empty(1, A)
    for a, xs in enumerate(samples_by_arm):
        for x in xs:
            st_.add(0, a, x, x)
    return st_


def test_update_counts_and_doubling():
    from saver_lab.harness.scenarios import tree4x2
    mdp = tree4x2(depth=3).mdp
    ep = run_episode(mdp, lambda s: 0, np.random.default_rng(1))
    st_ = update(SufficientStats.empty(mdp.num_states, mdp.num_actions), ep)
    assert st_.count.sum() == 3 and st_.steps == 3 and st_.episodes == 1
    single = st_.copy()
    update(st_, ep)
    for name in ("count", "sum_r", "sum_r2", "sum_c"):
        np.testing.assert_array_equal(getattr(st_, name), 2 * getattr(single, name))


def test_deterministic_arm_mean_is_exact():
    mdp = LayeredMdp.bandit([0.37], [0.0], [0.2])
    st_ = SufficientStats.empty(1, 1)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        update(st_, run_episode(mdp, lambda s: 0, rng))
    view = estimates(st_, WidthParams())
    assert view.mean[0, 0] == pytest.approx(0.37, abs=1e-12)
    assert view.std[0, 0] == pytest.approx(0.0, abs=1e-6)


def test_width_examples():
    assert width(0, WidthParams()) == math.inf
    eta = (-2 + math.sqrt(20)) / 8  # 2 eta + 4 eta^2 = 1
    p = WidthParams(delta=2 / math.e ** 2, eta=eta, S=1, A=1, n=1)
    assert width(1, p) == pytest.approx(1.0, abs=1e-12)
    main = WidthParams(S=2, A=3, n=10, L=2, mode="main")
    assert width(4, main) == pytest.approx(2 * math.sqrt(math.log(2 * 3 * 10 * 11) / 4))
    assert width(5, WidthParams(scale=0.0)) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 10**6), st.sampled_from(["appendix", "main"]))
def test_width_strictly_decreasing(T, mode):
    p = WidthParams(n=1000, S=3, A=2, mode=mode)
    assert width(T + 1, p) < width(T, p)


def test_width_params_reject_bad_values():
    with pytest.raises(ValueError):
        WidthParams(mode="other")
    with pytest.raises(ValueError):
        WidthParams(delta=1.0)


def test_estimate_examples():
    view = estimates(stats_from([[], [1, 1, 1], [0, 2]]), WidthParams(n=10, A=3))
    assert view.mean[0, 0] == 0 and view.std[0, 0] == 0
    assert view.std_ucb[0, 0] == math.inf and view.cost_lcb[0, 0] == -math.inf
    assert view.mean[0, 1] == 1 and view.std[0, 1] == 0
    assert view.mean[0, 2] == 1 and view.std[0, 2] == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=40), st.randoms())
def test_std_is_order_invariant_and_bounds_hold(xs, rnd):
    p = WidthParams(n=100, A=1)
    a = estimates(stats_from([xs]), p)
    shuffled = list(xs)
    rnd.shuffle(shuffled)
    b = estimates(stats_from([shuffled]), p)
    assert a.std[0, 0] == pytest.approx(b.std[0, 0], rel=1e-6, abs=1e-6)
    assert a.std_ucb[0, 0] >= a.std[0, 0] >= 0
    assert a.cost_lcb[0, 0] <= a.cost_mean[0, 0]


def test_certainty_value_examples(rng):
    mdp = LayeredMdp.bandit([0.4, 0.6], [1, 1], [0.5, 0.5])
    pol = TargetPolicy(np.array([[0.5, 0.5]]))
    assert certainty_value(mdp, pol, [[0.4, 0.6]])[0] == pytest.approx(0.5)
    tree = random_tree(rng)
    tp = random_policy(rng, tree)
    assert certainty_value(tree, tp, tree.reward_mean)[0] == true_value(tree, tp)[0]


def test_certainty_value_matches_enumeration_on_depth_two_tree(rng):
    tree = random_tree(rng, max_levels=2, max_states=5, gamma=0.7)
    pol = random_policy(rng, tree)
    table = rng.normal(size=(tree.num_states, tree.num_actions))
    assert certainty_value(tree, pol, table)[0] == pytest.approx(enumerate_value(tree, pol.probs, table), abs=1e-12)


def test_certainty_value_accepts_deterministic_choices(rng):
    tree = random_tree(rng)
    choice = rng.integers(tree.num_actions, size=tree.num_states)
    probs = np.zeros((tree.num_states, tree.num_actions))
    probs[np.arange(tree.num_states), choice] = 1
    np.testing.assert_allclose(certainty_value(tree, choice, tree.cost_mean),
                               certainty_value(tree, probs, tree.cost_mean))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_certainty_value_is_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, gamma=float(rng.uniform(0, 1)))
    pol = random_policy(rng, tree)
    m1 = rng.normal(size=(tree.num_states, tree.num_actions))
    m2 = rng.normal(size=m1.shape)
    lhs = certainty_value(tree, pol, a * m1 + b * m2)
    rhs = a * certainty_value(tree, pol, m1) + b * certainty_value(tree, pol, m2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_path_value_sums_discounted_means():
    from saver_lab.harness.scenarios import tree4x2
    mdp = tree4x2(depth=3).mdp
    steps = [Step(0, 1, 0, 0), Step(2, 0, 0, 0), Step(5, 1, 0, 0)]
    assert path_value(mdp, steps, mdp.cost_mean) == pytest.approx(0.3 + 0.5 + 0.3)


def test_plug_in_allocation_examples():
    mdp = LayeredMdp.bandit([0.5, 0.5], [1, 3], [0.5, 0.5])
    pol = TargetPolicy(np.array([[0.5, 0.5]]))
    view = estimates(stats_from([[0, 2], [1]]), WidthParams(n=10, scale=0.0))
    assert view.std_ucb[0, 1] == 0  # scale 0 gives zero width
    np.testing.assert_allclose(plug_in_allocation(mdp, pol, view).b_star[0], [1.0, 0.0])

    view = estimates(stats_from([[0, 2], []]), WidthParams(n=10))
    np.testing.assert_allclose(plug_in_allocation(mdp, pol, view).b_star[0], [0.0, 1.0])


def test_plug_in_allocation_approaches_oracle(rng):
    mdp = LayeredMdp.bandit([0.5, 0.5, 0.5], [0.5, 1.0, 2.0], [0.5, 0.5, 0.5])
    pol = TargetPolicy(np.array([[0.2, 0.3, 0.5]]))
    draws = [0.5 + s * rng.standard_normal(200_000) for s in (0.5, 1.0, 2.0)]
    p = WidthParams(n=600_000, A=3, scale=0.001)
    view = estimates(stats_from(draws), p)
    b_hat = plug_in_allocation(mdp, pol, view).b_star[0]
    b = compute_b_star(mdp, pol).b_star[0]
    tol = 10 * max(view.width[0].max(), np.abs(view.std[0] - mdp.reward_std[0]).max())
    np.testing.assert_allclose(b_hat, b, atol=tol)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_plug_in_rows_are_distributions(seed):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng)
    pol = random_policy(rng, tree)
    st_ = SufficientStats.empty(tree.num_states, tree.num_actions)
    for _ in range(int(rng.integers(0, 30))):
        update(st_, run_episode(tree, lambda s: int(rng.integers(tree.num_actions)), rng))
    view = estimates(st_, WidthParams.for_mdp(tree, 100))
    rows = plug_in_allocation(tree, pol, view).b_star
    np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-9)
    assert (rows >= 0).all()


def good_event_failure_rate(runs=500, n=400, delta=0.1, seed=0):
    """Fraction of runs where some cost mean leaves its confidence interval."""
    mu = np.array([0.5, 0.3, 0.8])
    sd = np.array([0.2, 0.2, 0.2])
    A = len(mu)
    p = WidthParams(delta=delta, eta=1.0, S=1, A=A, n=n)
    pulls = n // A
    T = np.arange(1, pulls + 1)
    w = width(T, p)
    rng = np.random.default_rng(seed)
    fails = 0
    for _ in range(runs):
        x = mu[:, None] + sd[:, None] * rng.standard_normal((A, pulls))
        running = np.cumsum(x, axis=1) / T
        fails += bool((np.abs(running - mu[:, None]) > w).any())
    return fails / runs


def test_good_event_frequency():
    rate = good_event_failure_rate()
    assert rate <= 0.1 + 3 * math.sqrt(0.1 * 0.9 / 500)
