"""Experiment orchestration: scenarios, configs, Monte Carlo runs and outputs."""
from .arms import EmptyTable, MissingColumn, ParseError, load_arm_table_csv
from .config import BudgetNotDivisible, ConfigError, ExperimentConfig, config_from_dict, load_config
from .output import IoError, read_curves, write_outputs
from .runner import NonPositiveValue, RunMetrics, fit_slope, run_experiment
from .scenarios import SCENARIOS, Scenario, UnknownScenario, scenario
