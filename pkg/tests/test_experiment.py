import jsonschema
import numpy as np
import pytest

from sinkflow import schemas
from sinkflow.dataio import FlowData, SplitSpec
from sinkflow.errors import ConfigurationError
from sinkflow.experiment import ExperimentConfig, make_method, run_experiment

SPLIT = SplitSpec(40, 5, 10)
FAST = dict(epochs=20, loss_mix_grid=[0.0, 1.0], hidden_sizes=[8], horizons=[1, 3])


def test_identity_closed_form(small_synthetic):
    _, data = small_synthetic
    rep = run_experiment(data, SPLIT, ["identity"], ExperimentConfig(horizons=[2]))
    steps = rep["test_steps"]
    assert steps == list(range(45, 55))
    costs = [np.linalg.norm(data.plans[t] - np.diag(data.marginals[t])) for t in steps]
    res = rep["methods"]["identity"]
    np.testing.assert_allclose(res["per_step"], costs, rtol=1e-15)
    assert res["flow_cost_mean"] == pytest.approx(np.mean(costs))
    assert res["flow_cost_sum"] == pytest.approx(np.sum(costs))
    rmse = [np.sqrt(np.mean((data.marginals[t + 1] - data.marginals[t]) ** 2)) for t in steps]
    assert res["faction_rmse"] == pytest.approx(np.mean(rmse))
    two = sum(
        np.linalg.norm(data.plans[a] - np.diag(data.marginals[a]))
        + np.linalg.norm(data.plans[a + 1] - np.diag(data.marginals[a]))
        for a in rep["anchors"]
    )
    assert res["multi_step"]["2"] == pytest.approx(two)
    assert "per_seed" not in res


def test_seeds_reported_and_reproducible(small_synthetic):
    _, data = small_synthetic
    cfg = ExperimentConfig(seeds=[0, 1, 2], **FAST)
    rep = run_experiment(data, SPLIT, ["avg", "sinkflow"], cfg)
    jsonschema.validate(rep, schemas.EVAL_REPORT)
    sf = rep["methods"]["sinkflow"]
    assert [r["seed"] for r in sf["per_seed"]] == [0, 1, 2]
    assert sf["flow_cost_mean"] == pytest.approx(np.mean([r["flow_cost_mean"] for r in sf["per_seed"]]))
    assert all(r["loss_mix"] in (0.0, 1.0) for r in sf["per_seed"])
    assert rep == run_experiment(data, SPLIT, ["avg", "sinkflow"], cfg)
    for m in rep["methods"].values():
        assert m["multi_step"]["3"] >= m["multi_step"]["1"]


def test_failures_are_isolated(small_synthetic):
    _, data = small_synthetic
    no_labels = FlowData(data.marginals, data.plans)
    rep = run_experiment(no_labels, SPLIT, ["identity", "lr", "bogus"], ExperimentConfig(horizons=[1]))
    assert set(rep["methods"]) == {"identity"}
    assert "labels" in rep["errors"]["lr"]
    assert "bogus" in rep["errors"]


def test_classifier_baselines_run(small_synthetic):
    _, data = small_synthetic
    rep = run_experiment(data, SPLIT, ["lr", "mlp"], ExperimentConfig(horizons=[3]))
    assert not rep["errors"]
    for m in ("lr", "mlp"):
        assert rep["methods"][m]["flow_cost_mean"] < 0.05


def test_split_and_horizon_errors(small_synthetic):
    _, data = small_synthetic
    with pytest.raises(ConfigurationError):
        run_experiment(data, SplitSpec(50, 5, 10), ["identity"])
    with pytest.raises(ConfigurationError, match="horizon"):
        run_experiment(data, SPLIT, ["identity"], ExperimentConfig(horizons=[20]))
    with pytest.raises(ConfigurationError):
        run_experiment(data, SPLIT, ["identity"], ExperimentConfig(seeds=[]))
    with pytest.raises(ConfigurationError):
        make_method("nope")
