"""Experiment configuration documents (YAML), their schema and resolution."""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from ..env import LayeredMdp, TargetPolicy, build_mdp, validate
from ..strategies import StrategyConfig, StrategyKind
from .arms import load_arm_table_csv
from .scenarios import RUN_DEFAULTS, scenario

SEED_ENV = "SAVER_SEED"


class ConfigError(ValueError):
    pass


class BudgetNotDivisible(ConfigError):
    def __init__(self, n, horizon):
        self.n, self.horizon = n, horizon
        super().__init__(f"budget n={n} is not divisible by the horizon L={horizon}")


_pair = {
    "type": "object",
    "required": ["state", "action"],
    "additionalProperties": False,
    "properties": {
        "state": {"type": "string"},
        "action": {"type": "integer", "minimum": 0},
        "reward": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "cost": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "next": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
    },
}

SCHEMA = {
    "type": "object",
    "required": ["environment", "strategies"],
    "additionalProperties": False,
    "properties": {
        "environment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "scenario": {"type": "string"},
                "options": {"type": "object"},
                "csv": {"type": "string"},
                "inline": {
                    "type": "object",
                    "required": ["levels", "num_actions", "pairs"],
                    "additionalProperties": False,
                    "properties": {
                        "mode": {"enum": ["tree", "dag", "bandit"]},
                        "gamma": {"type": "number", "minimum": 0, "maximum": 1},
                        "eta": {"type": "number", "exclusiveMinimum": 0},
                        "num_actions": {"type": "integer", "minimum": 1},
                        "action_names": {"type": "array", "items": {"type": "string"}},
                        "levels": {
                            "type": "array",
                            "minItems": 1,
                            "items": {"type": "array", "minItems": 1, "items": {"type": "string"}},
                        },
                        "pairs": {"type": "array", "items": _pair},
                    },
                },
            },
            "oneOf": [{"required": ["scenario"]}, {"required": ["csv"]}, {"required": ["inline"]}],
        },
        "policy": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "uniform": {"type": "boolean"},
                "stationary": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "rows": {"type": "array", "items": {"type": "array", "items": {"type": "number", "minimum": 0}}},
            },
            "maxProperties": 1,
        },
        "strategies": {
            "type": "array",
            "minItems": 1,
            "uniqueItems": True,
            "items": {"enum": [k.value for k in StrategyKind]},
        },
        "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "budgets": {"type": "array", "minItems": 1, "uniqueItems": True, "items": {"type": "integer", "minimum": 1}},
        "repetitions": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "width": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "eta": {"type": "number", "exclusiveMinimum": 0},
                "mode": {"enum": ["appendix", "main"]},
                "scale": {"type": "number", "minimum": 0},
            },
        },
        "known_baseline": {"type": "boolean"},
        "explore": {"type": "boolean"},
        "gate_onpolicy": {"type": "boolean"},
        "inject_sigma": {"type": "boolean"},
        "common_random_numbers": {"type": "boolean"},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
    },
}


@dataclass(eq=False)
class ExperimentConfig:
    mdp: LayeredMdp
    policy: TargetPolicy
    mode: str
    strategies: tuple
    alpha: float
    budgets: tuple
    repetitions: int
    seed: int
    delta: float = 0.1
    eta: float | None = None
    width_mode: str = "appendix"
    width_scale: float = 1.0
    known_baseline: bool = False
    explore: bool = True
    gate_onpolicy: bool = True
    inject_sigma: bool = False
    common_random_numbers: bool = True
    output_dir: str = "out"
    environment_label: str = "inline"
    document: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.strategies:
            raise ConfigError("strategies must be nonempty")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        for n in self.budgets:
            if n % self.mdp.L:
                raise BudgetNotDivisible(n, self.mdp.L)
        if StrategyKind.BanditSaVeR.value in self.strategies and not self.mdp.is_bandit():
            raise ConfigError("BanditSaVeR needs a single-state environment")

    @property
    def horizon(self) -> int:
        return self.mdp.L

    def strategy_config(self, kind) -> StrategyConfig:
        return StrategyConfig(
            kind=kind,
            alpha=self.alpha,
            delta=self.delta,
            eta=self.eta,
            width_mode=self.width_mode,
            width_scale=self.width_scale,
            explore=self.explore,
            inject_sigma=self.inject_sigma,
            known_baseline=self.known_baseline,
            gate_onpolicy=self.gate_onpolicy,
        )


def _inline_mdp(spec: dict) -> tuple[LayeredMdp, str]:
    known = {s for lvl in spec["levels"] for s in lvl}
    pairs = {}
    for item in spec["pairs"]:
        if item["state"] not in known:
            raise ConfigError(f"pair refers to unknown state {item['state']!r}")
        if item["action"] >= spec["num_actions"]:
            raise ConfigError(f"pair action {item['action']} out of range at state {item['state']!r}")
        for t in item.get("next", {}):
            if t not in known:
                raise ConfigError(f"transition to unknown state {t!r}")
        pairs[(item["state"], item["action"])] = {
            "reward": tuple(item.get("reward", (0.0, 0.0))),
            "cost": tuple(item.get("cost", (0.0, 0.0))),
            "next": dict(item.get("next", {})),
        }
    mdp = build_mdp(
        spec["levels"],
        spec["num_actions"],
        pairs,
        gamma=spec.get("gamma", 1.0),
        eta=spec.get("eta", 1.0),
        action_names=tuple(spec.get("action_names", ())),
    )
    mode = spec.get("mode", "bandit" if mdp.is_bandit() else "dag")
    return mdp, mode


def _policy(spec: dict | None, mdp: LayeredMdp, fallback: TargetPolicy | None) -> TargetPolicy:
    try:
        if not spec:
            return fallback if fallback is not None else TargetPolicy.uniform(mdp)
        if spec.get("uniform"):
            return TargetPolicy.uniform(mdp)
        if "stationary" in spec:
            row = np.asarray(spec["stationary"], float)
            if row.shape != (mdp.num_actions,):
                raise ConfigError(f"stationary policy needs {mdp.num_actions} entries")
            return TargetPolicy.stationary(mdp, row)
        rows = np.asarray(spec["rows"], float)
        if rows.shape != (mdp.num_states, mdp.num_actions):
            raise ConfigError(f"policy rows must have shape {(mdp.num_states, mdp.num_actions)}")
        return TargetPolicy(rows)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid policy: {exc}") from exc


def config_from_dict(doc: dict, base_dir: str | os.PathLike = ".") -> ExperimentConfig:
    """Validate a parsed document and resolve it into an :class:`ExperimentConfig`."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    doc = copy.deepcopy(doc)
    env = doc["environment"]
    defaults = dict(RUN_DEFAULTS)
    fallback_policy, alpha_default = None, 0.25
    if "scenario" in env:
        try:
            sc = scenario(env["scenario"], **env.get("options", {}))
        except TypeError as exc:
            raise ConfigError(f"bad scenario options: {exc}") from None
        except KeyError as exc:
            raise ConfigError(str(exc.args[0] if exc.args else exc)) from None
        mdp, mode, fallback_policy, alpha_default = sc.mdp, sc.mode, sc.policy, sc.alpha
        defaults.update(sc.defaults)
        label = env["scenario"]
    elif "csv" in env:
        path = Path(env["csv"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        mdp, mode, label = load_arm_table_csv(path), "bandit", f"csv:{env['csv']}"
    else:
        if "options" in env:
            raise ConfigError("environment options only apply to scenarios")
        mdp, mode = _inline_mdp(env["inline"])
        label = "inline"
    try:
        validate(mdp, mode)
    except ValueError as exc:
        raise ConfigError(f"environment invalid: {exc}") from exc
    policy = _policy(doc.get("policy"), mdp, fallback_policy)
    width = doc.get("width", {})
    seed = doc.get("seed", defaults["seed"])
    if os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
        if seed < 0:
            raise ConfigError(f"{SEED_ENV} must be nonnegative")
    budgets = tuple(doc.get("budgets", defaults.get("budgets", (1000,))))
    return ExperimentConfig(
        mdp=mdp,
        policy=policy,
        mode=mode,
        strategies=tuple(doc["strategies"]),
        alpha=float(doc.get("alpha", alpha_default)),
        budgets=budgets,
        repetitions=int(doc.get("repetitions", defaults["repetitions"])),
        seed=int(seed),
        delta=float(width.get("delta", defaults["delta"])),
        eta=width.get("eta"),
        width_mode=width.get("mode", defaults["width_mode"]),
        width_scale=float(width.get("scale", defaults["width_scale"])),
        known_baseline=bool(doc.get("known_baseline", defaults["known_baseline"])),
        explore=bool(doc.get("explore", True)),
        gate_onpolicy=bool(doc.get("gate_onpolicy", True)),
        inject_sigma=bool(doc.get("inject_sigma", False)),
        common_random_numbers=bool(doc.get("common_random_numbers", True)),
        output_dir=doc.get("output", {}).get("dir", "out"),
        environment_label=label,
        document=doc,
    )


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(doc, base_dir=path.parent)


def environment_document(mdp: LayeredMdp, mode: str) -> dict:
    """Inline environment section reproducing ``mdp`` exactly."""
    names = mdp.state_names
    levels = [[names[s] for s in mdp.states_at(l)] for l in range(1, mdp.L + 1)]
    pairs = []
    for s in range(mdp.num_states):
        for a in range(mdp.num_actions):
            item = {
                "state": names[s],
                "action": a,
                "reward": [float(mdp.reward_mean[s, a]), float(mdp.reward_std[s, a])],
                "cost": [float(mdp.cost_mean[s, a]), float(mdp.cost_std[s, a])],
            }
            nxt = {names[t]: float(mdp.transitions[s, a, t]) for t in mdp.successors(s, a)}
            if nxt:
                item["next"] = nxt
            pairs.append(item)
    return {
        "inline": {
            "mode": mode,
            "gamma": mdp.gamma,
            "eta": mdp.eta,
            "num_actions": mdp.num_actions,
            "action_names": list(mdp.action_names),
            "levels": levels,
            "pairs": pairs,
        }
    }


def scenario_document(name: str, **options) -> dict:
    """A complete, runnable config document for a built-in scenario, fully inlined."""
    sc = scenario(name, **options)
    d = sc.defaults
    return {
        "environment": environment_document(sc.mdp, sc.mode),
        "policy": {"rows": sc.policy.probs.tolist()},
        "strategies": ["OnPolicy", "SafeOracle", "SaVeR", "OracleUnconstrained"],
        "alpha": sc.alpha,
        "budgets": list(d["budgets"]),
        "repetitions": d["repetitions"],
        "seed": d["seed"],
        "width": {"delta": d["delta"], "mode": d["width_mode"], "scale": d["width_scale"]},
        "known_baseline": d["known_baseline"],
    }


def dump_document(doc: dict) -> str:
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=100)
