"""Train, select and compare all predictors on one chronological split."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import baselines
from .dataio import FlowData, SplitSpec, split
from .errors import ConfigurationError, SinkflowError
from .metrics import faction_rmse, flow_cost, multi_step_cost
from .model import (
    MARKOV_ORDER,
    N_FLOW_LAGS,
    LossConfig,
    ModelInput,
    init_params,
    make_samples,
    predict_plans,
    rollout,
    train,
)
from .ot_layer import SinkhornConfig

METHODS = ("identity", "avg", "lr", "mlp", "sinkflow")
LOSS_MIX_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass
class ExperimentConfig:
    seeds: list = field(default_factory=lambda: [0])
    loss_mix_grid: list = field(default_factory=lambda: list(LOSS_MIX_GRID))
    hidden_sizes: list | None = None
    learning_rate: float = 0.1
    epochs: int = 300
    optimizer: str = "gd"
    sinkhorn_iters: int = 100
    sinkhorn_tol: float = 1e-6
    horizons: list = field(default_factory=lambda: [3, 5])

    def sinkhorn(self) -> SinkhornConfig:
        return SinkhornConfig(max_iters=self.sinkhorn_iters, tol=self.sinkhorn_tol)

    def loss(self, mix: float) -> LossConfig:
        return LossConfig(loss_mix=mix, learning_rate=self.learning_rate, epochs=self.epochs, optimizer=self.optimizer)


# ---------------------------------------------------------------------------
# predictors sharing one interface: fit / predict(t) / rollout(t, h)
#
# ``predict(data, t)`` forecasts plan t using ground truth up to marginal t.


class IdentityMethod:
    name = "identity"
    seeded = False

    def fit(self, data, train_idx, val_idx, seed, cfg):
        return self

    def predict(self, data, t):
        return baselines.identity_predict(data.marginals[t])

    def rollout(self, data, t, h):
        return [baselines.identity_predict(data.marginals[t])] * h


class AverageHistoryMethod:
    name = "avg"
    seeded = False

    def fit(self, data, train_idx, val_idx, seed, cfg):
        return self

    def predict(self, data, t):
        return baselines.average_history_predict(data.plans[t - 1], data.plans[t - 2], data.marginals[t])

    def rollout(self, data, t, h):
        prev, prev2, x = data.plans[t - 1], data.plans[t - 2], data.marginals[t]
        out = []
        for _ in range(h):
            P = baselines.average_history_predict(prev, prev2, x)
            out.append(P)
            prev2, prev, x = prev, P, P.sum(axis=0)
        return out


class ClassifierMethod:
    seeded = True

    def __init__(self, kind: str):
        if kind not in ("lr", "mlp"):
            raise ConfigurationError(f"unknown classifier {kind!r}")
        self.name = kind
        self.clf = None

    def fit(self, data, train_idx, val_idx, seed, cfg):
        if data.labels is None:
            raise ConfigurationError(f"{self.name} baseline needs per-element labels (timeline input)")
        counts = baselines.history_counts(data.labels, data.k, train_idx)
        if self.name == "lr":
            self.clf = baselines.LogisticRegressionClassifier(data.k).fit(counts)
        else:
            self.clf = baselines.MLPClassifier(data.k, seed=seed).fit(counts)
        return self

    def predict(self, data, t):
        return self.rollout(data, t, 1)[0]

    def rollout(self, data, t, h):
        w = baselines.state_distribution(data.labels, t, data.k)
        return baselines.classifier_rollout(w, self.clf, data.k, h)


class SinkflowMethod:
    name = "sinkflow"
    seeded = True

    def __init__(self):
        self.params = None
        self.loss_mix = None
        self.sink_cfg = None
        self.validation = {}

    def fit(self, data, train_idx, val_idx, seed, cfg: ExperimentConfig):
        self.sink_cfg = cfg.sinkhorn()
        train_samples = make_samples(data.marginals, data.plans, train_idx)
        if not train_samples:
            raise ConfigurationError("training range has no sample with a full lag window")
        val_steps = [t for t in val_idx if t >= N_FLOW_LAGS]
        best = None
        for mix in cfg.loss_mix_grid:
            params = init_params(data.k, cfg.hidden_sizes, seed)
            result = train(train_samples, params, cfg.loss(mix), self.sink_cfg)
            self.params = result.params
            if val_steps:
                score = float(np.mean([flow_cost(data.plans[t], P) for t, P in zip(val_steps, self._batch(data, val_steps))]))
            else:
                score = result.loss_trace[-1] if result.loss_trace else 0.0
            self.validation[str(mix)] = score
            if best is None or score < best[0]:
                best = (score, mix, result.params)
        _, self.loss_mix, self.params = best
        return self

    def _batch(self, data, steps):
        inputs = [ModelInput.from_history(data.marginals, data.plans, t) for t in steps]
        return predict_plans(inputs, self.params, self.sink_cfg)

    def predict(self, data, t):
        return self._batch(data, [t])[0]

    def rollout(self, data, t, h):
        return rollout(ModelInput.from_history(data.marginals, data.plans, t), self.params, h, self.sink_cfg)


def make_method(name: str):
    if name == "identity":
        return IdentityMethod()
    if name == "avg":
        return AverageHistoryMethod()
    if name in ("lr", "mlp"):
        return ClassifierMethod(name)
    if name == "sinkflow":
        return SinkflowMethod()
    raise ConfigurationError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")


# ---------------------------------------------------------------------------


def _evaluate(method, data: FlowData, test_steps, anchors, horizons) -> dict:
    plans = [method.predict(data, t) for t in test_steps]
    per_step = [flow_cost(data.plans[t], P) for t, P in zip(test_steps, plans)]
    rmse = [faction_rmse(data.marginals[t + 1], P.sum(axis=0)) for t, P in zip(test_steps, plans)]
    out = {
        "flow_cost_mean": float(np.mean(per_step)),
        "flow_cost_sum": float(np.sum(per_step)),
        "faction_rmse": float(np.mean(rmse)),
        "per_step": per_step,
        "multi_step": {},
    }
    if horizons:
        hmax = max(horizons)
        rolls = [method.rollout(data, a, hmax) for a in anchors]
        truths = [data.plans[a : a + hmax] for a in anchors]
        out["multi_step"] = {str(h): multi_step_cost(rolls, truths, h) for h in horizons}
    return out


def _mean_results(runs: list[dict]) -> dict:
    keys = ("flow_cost_mean", "flow_cost_sum", "faction_rmse")
    out = {key: float(np.mean([r[key] for r in runs])) for key in keys}
    out["per_step"] = np.mean([r["per_step"] for r in runs], axis=0).tolist()
    out["multi_step"] = {h: float(np.mean([r["multi_step"][h] for r in runs])) for h in runs[0]["multi_step"]}
    return out


def run_experiment(data: FlowData, split_spec: SplitSpec, methods=METHODS, cfg: ExperimentConfig | None = None) -> dict:
    """Fit every method on the training range and score it on the test range.

    Learned methods are fit once per seed and their scores averaged; the
    per-seed numbers are kept.  Multi-step costs are summed over every test
    anchor that has ground truth for the largest requested horizon, so all
    horizons share one anchor set.
    """
    cfg = cfg or ExperimentConfig()
    if not cfg.seeds:
        raise ConfigurationError("seed list is empty")
    train_idx, val_idx, test_idx = split(data.n_plans, split_spec)
    test_steps = [t for t in test_idx if t >= MARKOV_ORDER - 1]
    if not test_steps:
        raise ConfigurationError("test range has no step with a full lag window")
    horizons = sorted({int(h) for h in cfg.horizons})
    anchors = []
    if horizons:
        if min(horizons) < 1:
            raise ConfigurationError("horizons must be >= 1")
        anchors = [t for t in test_steps if t + max(horizons) <= test_idx.stop]
        if not anchors:
            raise ConfigurationError(f"horizon {max(horizons)} exceeds the {len(test_idx)} test plans")

    report = {
        "config": asdict(cfg),
        "seeds": list(cfg.seeds),
        "split": {
            "train": [train_idx.start, train_idx.stop],
            "validation": [val_idx.start, val_idx.stop],
            "test": [test_idx.start, test_idx.stop],
        },
        "test_steps": test_steps,
        "anchors": anchors,
        "methods": {},
        "errors": {},
    }
    for name in methods:
        try:
            method = make_method(name)
            if not method.seeded:
                method.fit(data, train_idx, val_idx, None, cfg)
                report["methods"][name] = _evaluate(method, data, test_steps, anchors, horizons)
                continue
            runs = []
            for seed in cfg.seeds:
                method = make_method(name).fit(data, train_idx, val_idx, int(seed), cfg)
                res = _evaluate(method, data, test_steps, anchors, horizons)
                res["seed"] = int(seed)
                if isinstance(method, SinkflowMethod):
                    res["loss_mix"] = method.loss_mix
                    res["validation_flow_cost"] = method.validation
                runs.append(res)
            summary = _mean_results(runs)
            summary["per_seed"] = runs
            report["methods"][name] = summary
        except (SinkflowError, ValueError, FloatingPointError) as exc:
            report["errors"][name] = f"{type(exc).__name__}: {exc}"
    return report
