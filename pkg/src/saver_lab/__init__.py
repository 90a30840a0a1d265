"""Safe variance-reducing behavior policies for off-policy evaluation in layered tabular MDPs."""
from .allocation import (
    AllocationTable,
    ComplexityReport,
    bandit_b_star,
    compute_b_star,
    compute_M,
    complexity_report,
    dag_allocation,
    dag_B0,
    hardness_h1,
    hardness_h2,
    tractability_bound,
)
from .env import EpisodeRecord, LayeredMdp, Step, TargetPolicy, build_mdp, run_episode, true_value, validate
from .estimator import SufficientStats, WidthParams, certainty_value, estimates, plug_in_allocation, update, width
from .kernels import BACKEND, CompiledProblem, NoiseTables, RunResult, simulate
from .strategies import Phase, SafetyBudgetState, StrategyConfig, StrategyKind

__version__ = "0.1.0"
