import json
import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from saver_lab.allocation import compute_M
from saver_lab.harness import (
    BudgetNotDivisible,
    ConfigError,
    EmptyTable,
    MissingColumn,
    NonPositiveValue,
    ParseError,
    UnknownScenario,
    config_from_dict,
    fit_slope,
    load_arm_table_csv,
    load_config,
    read_curves,
    run_experiment,
    scenario,
    write_outputs,
)
from saver_lab.harness.cli import main
from saver_lab.harness.config import scenario_document
from saver_lab.harness.output import curves_text, metrics_from_curves, summary_text
from saver_lab.harness.runner import RunMetrics
from saver_lab.harness.scenarios import SCENARIOS
from saver_lab.allocation import complexity_report


def write_csv(path, rows, header="arm,reward_mean,reward_std,cost_mean,cost_std"):
    path.write_text("\n".join([header] + rows) + "\n")
    return path


def test_scenario_values():
    ib = scenario("intractable_bandit", alpha=0.3)
    np.testing.assert_allclose(ib.mdp.cost_mean[0], [0.5, 0.8, 0.0])
    np.testing.assert_allclose(ib.mdp.reward_std[0], [0.001, 0.001, 0.25])
    b = scenario("bandit11")
    assert b.policy.probs[0, :2].tolist() == [0.4, 0.4]
    assert b.policy.probs[0].sum() == pytest.approx(1.0)
    np.testing.assert_allclose(b.mdp.reward_std[0, :2] ** 2, 1e-4)
    np.testing.assert_allclose(b.mdp.reward_std[0, 2:] ** 2, 40.0)
    np.testing.assert_array_equal(b.mdp.cost_mean, b.mdp.reward_mean)
    t = scenario("tree4x2")
    assert t.mdp.num_states == 15 and t.mdp.L == 4 and t.alpha == 0.25
    np.testing.assert_allclose(t.mdp.reward_std[0] ** 2, [0.01, 20.0])
    assert t.mdp.cost_mean[0, 1] < t.mdp.cost_mean[0, 0]
    g = scenario("grid4x4")
    assert g.mdp.L == 4 and g.mode == "dag"
    np.testing.assert_allclose(g.mdp.reward_std[0] ** 2, [0.01, 0.01, 20.0, 20.0])
    np.testing.assert_allclose(scenario("grid4x4", literal_low_variance=True).mdp.reward_std[0] ** 2, 0.01)
    with pytest.raises(UnknownScenario):
        scenario("nope")


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_every_scenario_has_finite_complexity(name):
    sc = scenario(name)
    rep = complexity_report(sc.mdp, sc.policy, sc.alpha)
    assert math.isfinite(rep.h2_total) and math.isfinite(rep.c_sigma) and math.isfinite(rep.h1)


def test_arm_table_loading(tmp_path):
    mdp = load_arm_table_csv(write_csv(tmp_path / "a.csv", ["1,0.4,1.0,0.3,0.0", "0,0.5,0.1,0.5,0.05"]))
    assert mdp.num_actions == 2
    np.testing.assert_allclose(mdp.reward_mean[0], [0.5, 0.4])
    np.testing.assert_allclose(mdp.cost_std[0], [0.05, 0.0])

    rng = np.random.default_rng(0)
    rows = [f"{a},{rng.uniform():.4f},{rng.uniform(0, 2):.4f},{rng.uniform():.4f},0.1" for a in range(30)]
    assert load_arm_table_csv(write_csv(tmp_path / "b.csv", rows)).num_actions == 30

    with pytest.raises(MissingColumn) as exc:
        load_arm_table_csv(write_csv(tmp_path / "c.csv", ["0,0.5,0.1,0.05"], "arm,reward_mean,reward_std,cost_std"))
    assert exc.value.name == "cost_mean"
    with pytest.raises(ParseError) as exc:
        load_arm_table_csv(write_csv(tmp_path / "d.csv", ["0,0.5,0.1,0.5,0.1", "1,abc,0.1,0.5,0.1"]))
    assert exc.value.line == 3
    with pytest.raises(EmptyTable):
        load_arm_table_csv(write_csv(tmp_path / "e.csv", []))
    with pytest.raises(ParseError):
        load_arm_table_csv(write_csv(tmp_path / "f.csv", ["0,0.5,0.1,0.5,0.1", "2,0.5,0.1,0.5,0.1"]))


def test_fit_slope_examples():
    ns = [500, 1000, 2000, 4000, 8000]
    assert fit_slope([(n, 7 * n ** -1.5) for n in ns]) == pytest.approx(-1.5)
    assert fit_slope([(n, 3.0) for n in ns]) == pytest.approx(0.0, abs=1e-12)
    rng = np.random.default_rng(0)
    noisy = fit_slope([(n, (1 + 0.01 * rng.uniform(-1, 1)) / n) for n in ns])
    assert -1.05 <= noisy <= -0.95
    with pytest.raises(NonPositiveValue):
        fit_slope([(1, 1), (2, 0), (3, 1)])
    with pytest.raises(ValueError):
        fit_slope([(1, 1), (2, 1)])


def small_doc(**kw):
    doc = {"environment": {"scenario": "tree4x2"}, "strategies": ["SafeOracle", "SaVeR", "OnPolicy"],
           "budgets": [200, 400, 800], "repetitions": 3, "seed": 9}
    doc.update(kw)
    return doc


def test_config_validation_errors(tmp_path, monkeypatch):
    with pytest.raises(ConfigError):
        config_from_dict({"environment": {"scenario": "tree4x2"}, "strategies": []})
    with pytest.raises(ConfigError):
        config_from_dict(small_doc(strategies=["Nope"]))
    with pytest.raises(ConfigError):
        config_from_dict(small_doc(environment={"scenario": "tree4x2", "csv": "x.csv"}))
    with pytest.raises(ConfigError):
        config_from_dict(small_doc(environment={"scenario": "missing"}))
    with pytest.raises(BudgetNotDivisible):
        config_from_dict(small_doc(budgets=[202]))
    with pytest.raises(ConfigError):
        config_from_dict(small_doc(repetitions=0))
    with pytest.raises(ConfigError):
        config_from_dict(small_doc(strategies=["BanditSaVeR"]))
    with pytest.raises(ConfigError):
        config_from_dict(small_doc(policy={"stationary": [1.0]}))
    monkeypatch.setenv("SAVER_SEED", "abc")
    with pytest.raises(ConfigError):
        config_from_dict(small_doc())
    monkeypatch.setenv("SAVER_SEED", "77")
    assert config_from_dict(small_doc()).seed == 77


def test_scenario_document_round_trips(tmp_path):
    for name in SCENARIOS:
        doc = yaml.safe_load(yaml.safe_dump(scenario_document(name)))
        cfg = config_from_dict(doc)
        sc = scenario(name)
        np.testing.assert_array_equal(cfg.mdp.transitions, sc.mdp.transitions)
        np.testing.assert_array_equal(cfg.mdp.reward_std, sc.mdp.reward_std)
        np.testing.assert_array_equal(cfg.policy.probs, sc.policy.probs)
        assert cfg.known_baseline == sc.defaults["known_baseline"]


def test_csv_environment_resolves_relative_to_config(tmp_path):
    write_csv(tmp_path / "arms.csv", ["0,0.5,0.1,0.5,0.05", "1,0.6,1.0,0.4,0.05"])
    (tmp_path / "c.yaml").write_text(yaml.safe_dump({"environment": {"csv": "arms.csv"},
                                                     "strategies": ["BanditSaVeR"], "budgets": [100]}))
    cfg = load_config(tmp_path / "c.yaml")
    assert cfg.mode == "bandit" and cfg.mdp.num_actions == 2


def test_baseline_only_mse_on_deterministic_bandit():
    doc = {"environment": {"inline": {"num_actions": 2, "levels": [["root"]], "pairs": [
        {"state": "root", "action": 0, "reward": [0.2, 0.0], "cost": [0.5, 0.0]},
        {"state": "root", "action": 1, "reward": [0.6, 0.0], "cost": [0.5, 0.0]}]}},
        "policy": {"stationary": [0.5, 0.5]}, "strategies": ["BaselineOnly"], "budgets": [10, 20, 40],
        "repetitions": 2}
    metrics = run_experiment(config_from_dict(doc))
    for n in (10, 20, 40):
        assert metrics.cells[("BaselineOnly", n)].mse == pytest.approx((0.5 * 0.6) ** 2, abs=1e-15)


def test_oracle_mse_matches_leading_term():
    doc = {"environment": {"scenario": "intractable_bandit"}, "strategies": ["OracleUnconstrained"],
           "budgets": [10_000], "repetitions": 200, "seed": 3}
    cfg = config_from_dict(doc)
    metrics = run_experiment(cfg)
    m = compute_M(cfg.mdp, cfg.policy)[0]
    assert metrics.cells[("OracleUnconstrained", 10_000)].mse == pytest.approx(m * m / 10_000, rel=0.2)


def test_run_metrics_invariants_and_thread_independence():
    cfg = config_from_dict(small_doc())
    serial = run_experiment(cfg)
    threaded = run_experiment(cfg, threads=4)
    assert len(serial.records) == 3 * 3 * 3
    assert curves_text(serial.records) == curves_text(threaded.records)
    assert summary_text(serial) == summary_text(threaded)
    for n in cfg.budgets:
        assert serial.cells[("SafeOracle", n)].regret == 0.0
        assert all(serial.cells[(s, n)].mse >= 0 for s in cfg.strategies)


def test_outputs_format_and_reload(tmp_path):
    cfg = config_from_dict(small_doc())
    metrics = run_experiment(cfg)
    paths = write_outputs(metrics, tmp_path / "o")
    lines = paths["curves"].read_text().splitlines()
    assert lines[0] == "strategy,n,rep,mse,violations,final_budget"
    assert len(lines) == 1 + len(metrics.records)
    assert all(len(l.split(",")) == 6 for l in lines)
    summary = json.loads(paths["summary"].read_text())
    assert set(summary["strategies"]) == set(cfg.strategies)
    assert summary["complexity"]["h2_total"] >= 0
    again = metrics_from_curves(read_curves(paths["curves"]))
    for key, cell in metrics.cells.items():
        assert again.cells[key].mse == pytest.approx(cell.mse, rel=1e-11)


def test_empty_and_single_row_outputs(tmp_path):
    empty = RunMetrics([], {}, (), (), 0)
    p = write_outputs(empty, tmp_path / "e")
    assert p["curves"].read_text() == "strategy,n,rep,mse,violations,final_budget\n"
    cfg = config_from_dict(small_doc(strategies=["SaVeR"], budgets=[400], repetitions=1))
    p = write_outputs(run_experiment(cfg), tmp_path / "one")
    rows = p["curves"].read_text().splitlines()
    assert len(rows) == 2 and len(rows[1].split(",")) == 6


def test_write_outputs_reports_io_errors(tmp_path):
    from saver_lab.harness import IoError
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoError):
        write_outputs(RunMetrics([], {}, (), (), 0), blocker / "sub")


def test_cli_round_trip(tmp_path, capsys):
    assert main(["scenario", "list"]) == 0
    listing = capsys.readouterr().out
    assert all(name in listing for name in SCENARIOS)

    assert main(["scenario", "dump", "tree4x2"]) == 0
    doc = yaml.safe_load(capsys.readouterr().out)
    doc.update(budgets=[200, 400, 800], repetitions=2, strategies=["SafeOracle", "SaVeR"])
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text(yaml.safe_dump(doc))

    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["run", "--config", str(cfg_path), "--out", str(out1)]) == 0
    assert main(["run", "--config", str(cfg_path), "--out", str(out2), "--threads", "8"]) == 0
    for f in ("curves.csv", "summary.json"):
        assert (out1 / f).read_bytes() == (out2 / f).read_bytes()

    assert main(["report", "--in", str(out1 / "curves.csv"), "--out", str(tmp_path / "rep.json")]) == 0
    assert "SaVeR" in json.loads((tmp_path / "rep.json").read_text())["strategies"]

    assert main(["scenario", "dump", "nope"]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("environment: {scenario: tree4x2}\nstrategies: [SaVeR]\nbudgets: [201]\n")
    assert main(["run", "--config", str(bad)]) == 2


@pytest.mark.parametrize("path", sorted((Path(__file__).parents[1] / "configs").glob("*.yaml")))
def test_shipped_configs_load(path):
    cfg = load_config(path)
    assert cfg.strategies and all(n % cfg.horizon == 0 for n in cfg.budgets)
