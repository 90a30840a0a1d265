"""Backend selection and the array-level entry points for whole simulation runs.

The compiled extension ``_kernels`` is used when importable; otherwise the
pure-Python twin ``_kernels_py`` is loaded. Set ``SAVER_LAB_BACKEND=python``
to force the fallback.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _kernels_py
from .env import LayeredMdp, TargetPolicy, true_value
from .strategies import Phase, StrategyConfig, StrategyKind, exploration_horizon

if os.environ.get("SAVER_LAB_BACKEND", "").lower() == "python":
    _impl, BACKEND = _kernels_py, "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl, BACKEND = _kernels_py, "python"

_KIND_CODE = {
    StrategyKind.OnPolicy: _kernels_py.K_ONPOLICY,
    StrategyKind.BaselineOnly: _kernels_py.K_BASELINE,
    StrategyKind.OracleUnconstrained: _kernels_py.K_ORACLE,
    StrategyKind.SafeOracle: _kernels_py.K_SAFE_ORACLE,
    StrategyKind.SaVeR: _kernels_py.K_SAVER,
}


def backends() -> dict:
    """Every importable backend by name."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels

        out["cython"] = _kernels
    except ImportError:
        pass
    return out


@dataclass(frozen=True, eq=False)
class NoiseTables:
    """Pre-drawn randomness for one repetition.

    ``zr``/``zc``/``ut`` are indexed by (pair, visit number) and hold the
    reward noise, cost noise and transition uniform used on that visit; ``ua``
    is indexed by (episode, step) and holds the uniform used by randomized
    action choices. Strategies that share a table see the same outcomes
    whenever they visit a pair for the same time.
    """

    zr: np.ndarray
    zc: np.ndarray
    ut: np.ndarray
    ua: np.ndarray

    @classmethod
    def draw(cls, mdp: LayeredMdp, episodes: int, seed) -> "NoiseTables":
        rng = np.random.Generator(np.random.PCG64(seed))
        pairs = mdp.num_states * mdp.num_actions
        zr = rng.standard_normal((pairs, episodes))
        zc = rng.standard_normal((pairs, episodes))
        ut = rng.random((pairs, episodes))
        ua = rng.random((episodes, mdp.L))
        return cls(zr, zc, ut, ua)

    def sample(self, mdp: LayeredMdp, s: int, a: int, visit: int):
        """(reward, cost, next_state) for the ``visit``-th pull of (s, a)."""
        p = s * mdp.num_actions + a
        r = mdp.reward_mean[s, a] + mdp.reward_std[s, a] * self.zr[p, visit]
        c = mdp.cost_mean[s, a] + mdp.cost_std[s, a] * self.zc[p, visit]
        if mdp.level[s] == mdp.L:
            return float(r), float(c), None
        row = mdp.transitions[s, a]
        support = np.flatnonzero(row > 0)
        u, cum, nxt = self.ut[p, visit], 0.0, int(support[-1])
        for t in support:
            cum += row[t]
            if u < cum:
                nxt = int(t)
                break
        return float(r), float(c), nxt


@dataclass(frozen=True, eq=False)
class CompiledProblem:
    """Flat arrays the kernels consume (transitions in compressed-row form)."""

    mdp: LayeredMdp
    policy: TargetPolicy
    level_ptr: np.ndarray
    succ_ptr: np.ndarray
    succ_idx: np.ndarray
    succ_prob: np.ndarray
    pi: np.ndarray
    sigma: np.ndarray
    mu_r: np.ndarray
    sd_r: np.ndarray
    mu_c: np.ndarray
    sd_c: np.ndarray
    baseline_value: float

    @classmethod
    def build(cls, mdp: LayeredMdp, policy: TargetPolicy) -> "CompiledProblem":
        S, A = mdp.num_states, mdp.num_actions
        flatP = mdp.transitions.reshape(S * A, S)
        ptr, idx, prob = [0], [], []
        for row in flatP:
            nz = np.flatnonzero(row > 0)
            idx.extend(nz.tolist())
            prob.extend(row[nz].tolist())
            ptr.append(len(idx))
        flat = lambda x: np.ascontiguousarray(np.asarray(x, float).ravel())
        v_base = float(true_value(mdp, TargetPolicy.baseline(mdp), "cost")[0])
        return cls(
            mdp=mdp,
            policy=policy,
            level_ptr=np.asarray(mdp.level_offsets, np.int64),
            succ_ptr=np.asarray(ptr, np.int64),
            succ_idx=np.asarray(idx, np.int64),
            succ_prob=np.asarray(prob, float),
            pi=flat(policy.probs),
            sigma=flat(mdp.reward_std),
            mu_r=flat(mdp.reward_mean),
            sd_r=flat(mdp.reward_std),
            mu_c=flat(mdp.cost_mean),
            sd_c=flat(mdp.cost_std),
            baseline_value=v_base,
        )


@dataclass(eq=False)
class RunResult:
    count: np.ndarray  # (S, A)
    sum_r: np.ndarray
    sum_r2: np.ndarray
    sum_c: np.ndarray
    z_trace: np.ndarray  # budget after each episode (bandit: at each decision)
    phases: np.ndarray
    violations: int
    actions: np.ndarray | None = None  # pair ids s * A + a, episode-major
    true_surplus: np.ndarray | None = None  # cumulative true cost minus the constraint threshold

    @property
    def true_failures(self) -> int:
        if self.true_surplus is None:
            raise ValueError("run was made without true-cost tracking")
        return int((self.true_surplus < 0).sum())

    def mean_estimates(self) -> np.ndarray:
        return np.where(self.count > 0, self.sum_r / np.maximum(self.count, 1), 0.0)

    def phase_counts(self) -> dict:
        return {p.name: int((self.phases == p).sum()) for p in Phase}


def _flags(cfg: StrategyConfig, record: bool, track_true: bool) -> int:
    k = _kernels_py
    f = 0
    f |= k.F_INJECT if cfg.inject_sigma else 0
    f |= k.F_KNOWN_BASE if cfg.known_baseline else 0
    f |= k.F_GATE if cfg.gate_onpolicy else 0
    f |= k.F_RECORD if record else 0
    f |= k.F_TRUE if track_true else 0
    f |= k.F_EXPLORE if cfg.explore else 0
    return f


def simulate(problem: CompiledProblem, cfg: StrategyConfig, n: int, noise: NoiseTables, record: bool = False,
             track_true: bool = False, backend=None) -> RunResult:
    """Run one repetition of ``cfg.kind`` with budget ``n`` samples."""
    impl = _impl if backend is None else backends()[backend]
    mdp = problem.mdp
    S, A, L = mdp.num_states, mdp.num_actions, mdp.L
    if n % L:
        raise ValueError(f"budget {n} is not a multiple of the horizon {L}")
    K = n // L
    if noise.zr.shape[1] < K or noise.ua.shape[0] < K:
        raise ValueError("noise tables are shorter than the number of episodes")
    if track_true and cfg.kind == StrategyKind.BanditSaVeR:
        record = True
    coef = cfg.width_params(mdp, n).coefficient()
    flags = _flags(cfg, record, track_true)
    count = np.zeros(S * A, np.int64)
    sum_r, sum_r2, sum_c = np.zeros(S * A), np.zeros(S * A), np.zeros(S * A)
    z_trace = np.zeros(K)
    phases = np.zeros(K, np.int8)
    acts = np.zeros(K * L if record else 1, np.int32)
    true_tr = np.zeros(K if track_true else 1)
    zr, zc, ut, ua = _flat_noise(noise, K)
    p = problem
    if cfg.kind == StrategyKind.BanditSaVeR:
        if not mdp.is_bandit():
            raise ValueError("BanditSaVeR needs a single-state problem")
        viol = impl.run_bandit(A, p.pi, p.sigma, p.mu_r, p.sd_r, p.mu_c, p.sd_c, cfg.alpha, float(p.mu_c[0]),
                               coef, K, exploration_horizon(K), flags, zr, zc, ua, count, sum_r, sum_r2, sum_c,
                               z_trace, phases, acts)
        if track_true:
            true_tr = _bandit_true_surplus(p, cfg.alpha, phases, acts if record else None)
    else:
        viol = impl.run_mdp(S, A, L, p.level_ptr, p.succ_ptr, p.succ_idx, p.succ_prob, p.pi, p.sigma, p.mu_r,
                            p.sd_r, p.mu_c, p.sd_c, mdp.gamma, cfg.alpha, p.baseline_value, coef, K,
                            exploration_horizon(K), _KIND_CODE[cfg.kind], flags, zr, zc, ut, ua, count, sum_r,
                            sum_r2, sum_c, z_trace, phases, acts, true_tr)
    shape = (S, A)
    return RunResult(
        count=count.reshape(shape),
        sum_r=sum_r.reshape(shape),
        sum_r2=sum_r2.reshape(shape),
        sum_c=sum_c.reshape(shape),
        z_trace=z_trace,
        phases=phases,
        violations=int(viol),
        actions=acts if record else None,
        true_surplus=true_tr if track_true else None,
    )


def _flat_noise(noise: NoiseTables, K: int):
    cut = lambda x: np.ascontiguousarray(x[:, :K]).ravel()
    return cut(noise.zr), cut(noise.zc), cut(noise.ut), np.ascontiguousarray(noise.ua[:K]).ravel()


def _bandit_true_surplus(p: CompiledProblem, alpha: float, phases, acts):
    if acts is None:
        raise ValueError("true-cost tracking for the bandit rule needs record=True")
    costs = p.mu_c[acts]
    k = np.arange(1, len(costs) + 1)
    return np.cumsum(costs) - (1.0 - alpha) * k * p.baseline_value
