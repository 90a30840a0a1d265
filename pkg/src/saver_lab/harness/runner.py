"""Monte Carlo runs over (strategy, budget, repetition) and their aggregation."""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..allocation import ComplexityReport, complexity_report
from ..env import backup, true_value
from ..kernels import CompiledProblem, NoiseTables, simulate
from ..strategies import StrategyKind
from .config import BudgetNotDivisible, ExperimentConfig

REFERENCE = StrategyKind.SafeOracle.value


class NonPositiveValue(ValueError):
    pass


def fit_slope(points) -> float:
    """Least-squares slope of log(y) against log(n)."""
    pts = [(float(n), float(y)) for n, y in points]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points to fit a slope, got {len(pts)}")
    for n, y in pts:
        if not (n > 0 and y > 0) or not (math.isfinite(n) and math.isfinite(y)):
            raise NonPositiveValue(f"slope fit needs positive finite values, got ({n}, {y})")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    xc = x - x.mean()
    return float((xc @ (y - y.mean())) / (xc @ xc))


@dataclass(frozen=True)
class RepRecord:
    strategy: str
    n: int
    rep: int
    sq_error: float
    violations: int
    final_budget: float
    true_failures: int


@dataclass
class CellSummary:
    strategy: str
    n: int
    mse: float
    mse_stderr: float
    violation_mean: float
    violation_max: int
    budget_quantiles: dict
    true_constraint_rate: float
    regret: float | None = None


@dataclass
class RunMetrics:
    records: list
    cells: dict  # (strategy, n) -> CellSummary
    strategies: tuple
    budgets: tuple
    repetitions: int
    complexity: ComplexityReport | None = None
    config_label: str = ""
    wall_clock: float = field(default=0.0, compare=False)

    def curve(self, strategy: str, field_name: str = "mse"):
        return [(n, getattr(self.cells[(strategy, n)], field_name)) for n in self.budgets]

    def mse_slope(self, strategy: str):
        try:
            return fit_slope(self.curve(strategy))
        except (NonPositiveValue, ValueError):
            return None

    def excess_curve(self, strategy: str, reference: str = REFERENCE):
        return [(n, self.cells[(strategy, n)].mse - self.cells[(reference, n)].mse) for n in self.budgets]

    def excess_slope(self, strategy: str, reference: str = REFERENCE):
        try:
            return fit_slope(self.excess_curve(strategy, reference))
        except (NonPositiveValue, ValueError):
            return None


def _seed(cfg: ExperimentConfig, strategy_index: int | None, n_index: int, rep: int) -> np.random.SeedSequence:
    # With common random numbers every strategy of a (budget, repetition) cell
    # reads the same noise tables.
    if strategy_index is None:
        return np.random.SeedSequence([cfg.seed, 0, n_index, rep])
    return np.random.SeedSequence([cfg.seed, 1 + strategy_index, n_index, rep])


def _run_cell(cfg: ExperimentConfig, problem: CompiledProblem, v_true: float, n_index: int, rep: int):
    n = cfg.budgets[n_index]
    K = n // cfg.horizon
    out = []
    shared = NoiseTables.draw(cfg.mdp, K, _seed(cfg, None, n_index, rep)) if cfg.common_random_numbers else None
    for si, name in enumerate(cfg.strategies):
        noise = shared if shared is not None else NoiseTables.draw(cfg.mdp, K, _seed(cfg, si, n_index, rep))
        res = simulate(problem, cfg.strategy_config(name), n, noise, track_true=True)
        y = backup(cfg.mdp, cfg.policy.probs, res.mean_estimates())[0]
        out.append(
            RepRecord(
                strategy=name,
                n=n,
                rep=rep,
                sq_error=float((y - v_true) ** 2),
                violations=res.violations,
                final_budget=float(res.z_trace[-1]),
                true_failures=res.true_failures,
            )
        )
    return out


def aggregate(records, strategies, budgets, repetitions) -> dict:
    cells = {}
    by_key = {}
    for r in records:
        by_key.setdefault((r.strategy, r.n), []).append(r)
    for s in strategies:
        for n in budgets:
            rows = sorted(by_key.get((s, n), []), key=lambda r: r.rep)
            if len(rows) != repetitions:
                raise RuntimeError(f"cell ({s}, {n}) has {len(rows)} runs, expected {repetitions}")
            err = np.array([r.sq_error for r in rows])
            viol = np.array([r.violations for r in rows])
            fb = np.array([r.final_budget for r in rows])
            q = np.quantile(fb, [0.1, 0.5, 0.9])
            cells[(s, n)] = CellSummary(
                strategy=s,
                n=n,
                mse=float(err.mean()),
                mse_stderr=float(err.std(ddof=1) / math.sqrt(len(err))) if len(err) > 1 else 0.0,
                violation_mean=float(viol.mean()),
                violation_max=int(viol.max()),
                budget_quantiles={"q10": float(q[0]), "q50": float(q[1]), "q90": float(q[2])},
                true_constraint_rate=float(np.mean([r.true_failures == 0 for r in rows])),
            )
    if REFERENCE in strategies:
        for s in strategies:
            for n in budgets:
                cells[(s, n)].regret = 0.0 if s == REFERENCE else cells[(s, n)].mse - cells[(REFERENCE, n)].mse
    return cells


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> RunMetrics:
    """Run every (strategy, budget, repetition) cell; aggregation order is fixed by rep index."""
    start = time.perf_counter()
    for n in cfg.budgets:
        if n % cfg.horizon:
            raise BudgetNotDivisible(n, cfg.horizon)
    problem = CompiledProblem.build(cfg.mdp, cfg.policy)
    v_true = float(true_value(cfg.mdp, cfg.policy)[0])
    tasks = [(ni, rep) for ni in range(len(cfg.budgets)) for rep in range(cfg.repetitions)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda t: _run_cell(cfg, problem, v_true, *t), tasks))
    else:
        results = [_run_cell(cfg, problem, v_true, *t) for t in tasks]
    records = [r for chunk in results for r in chunk]
    expected = cfg.repetitions * len(cfg.budgets) * len(cfg.strategies)
    if len(records) != expected:
        raise RuntimeError(f"collected {len(records)} runs, expected {expected}")
    cells = aggregate(records, cfg.strategies, cfg.budgets, cfg.repetitions)
    report = complexity_report(cfg.mdp, cfg.policy, cfg.alpha)
    return RunMetrics(
        records=records,
        cells=cells,
        strategies=tuple(cfg.strategies),
        budgets=tuple(cfg.budgets),
        repetitions=cfg.repetitions,
        complexity=report,
        config_label=cfg.environment_label,
        wall_clock=time.perf_counter() - start,
    )
