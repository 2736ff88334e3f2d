"""Time-lagged Sinkhorn flow predictor.

A small feed-forward network ``f`` maps the lag window

    [x_t : b_t : x_{t-1} : b_{t-1} : x_{t-2}]

(``b_t`` is the flattened plan that produced ``x_t``) to a ``k x k``
potential matrix.  The predicted plan is ``diag(x_t) @ sinkhorn(f(...))``, so
its rows always sum to ``x_t``.  Training minimizes, summed over samples,

    (1 - mix) * ||P_t - P_hat_t||_F^2 + mix * ||x_{t+1} - P_hat_t^T 1||^2

with the Sinkhorn head differentiated implicitly (see :mod:`sinkflow.ot_layer`)
and the network by ordinary backpropagation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError, InvalidInputError, TrainingError
from .ot_layer import SinkhornConfig, sinkhorn_backward, sinkhorn_forward

MARKOV_ORDER = 3
N_FLOW_LAGS = MARKOV_ORDER - 1


@dataclass
class ModelInput:
    """Lag window for one prediction.

    ``marginals`` rows are ``x_t, x_{t-1}, x_{t-2}``; ``flows`` are
    ``b_t = P_{t-1}`` and ``b_{t-1} = P_{t-2}``.
    """

    marginals: np.ndarray  # (3, k)
    flows: np.ndarray  # (2, k, k)

    def __post_init__(self):
        self.marginals = np.asarray(self.marginals, dtype=np.float64)
        self.flows = np.asarray(self.flows, dtype=np.float64)
        k = self.marginals.shape[-1]
        if self.marginals.shape != (MARKOV_ORDER, k) or self.flows.shape != (N_FLOW_LAGS, k, k):
            raise DimensionError(
                f"expected marginals (3, k) and flows (2, k, k), got {self.marginals.shape} and {self.flows.shape}"
            )

    @property
    def k(self) -> int:
        return self.marginals.shape[1]

    @property
    def x_now(self) -> np.ndarray:
        return self.marginals[0]

    def validate(self, atol: float = 1e-9) -> None:
        if np.any(self.marginals < 0) or np.any(self.flows < 0):
            raise InvalidInputError("marginals and flows must be nonnegative")
        if not np.allclose(self.marginals.sum(axis=1), 1.0, atol=atol, rtol=0):
            raise InvalidInputError("each marginal must sum to 1")

    def vector(self) -> np.ndarray:
        x0, x1, x2 = self.marginals
        b0, b1 = self.flows.reshape(N_FLOW_LAGS, -1)
        return np.concatenate([x0, b0, x1, b1, x2])

    def advance(self, plan: np.ndarray) -> "ModelInput":
        """Window for the next step after ``plan`` moved mass from ``x_t`` to ``x_{t+1}``."""
        x_next = plan.sum(axis=0)
        return ModelInput(
            np.stack([x_next, self.marginals[0], self.marginals[1]]),
            np.stack([plan, self.flows[0]]),
        )

    @classmethod
    def from_history(cls, marginals, plans, t: int) -> "ModelInput":
        """Window ending at marginal index ``t`` (predicting plan ``t``).

        Lags before the start of the series are zero-padded.
        """
        marginals = np.asarray(marginals, dtype=np.float64)
        plans = np.asarray(plans, dtype=np.float64)
        k = marginals.shape[1]
        xs = [marginals[t - j] if t - j >= 0 else np.zeros(k) for j in range(MARKOV_ORDER)]
        bs = [plans[t - 1 - j] if t - 1 - j >= 0 else np.zeros((k, k)) for j in range(N_FLOW_LAGS)]
        return cls(np.stack(xs), np.stack(bs))


def input_size(k: int) -> int:
    return MARKOV_ORDER * k + N_FLOW_LAGS * k * k


@dataclass
class Sample:
    input: ModelInput
    target: np.ndarray  # P_t
    x_next: np.ndarray  # x_{t+1}


def make_samples(marginals, plans, indices) -> list[Sample]:
    """Supervised samples predicting ``plans[t]`` for each ``t`` in ``indices`` with a full lag window."""
    marginals = np.asarray(marginals, dtype=np.float64)
    plans = np.asarray(plans, dtype=np.float64)
    out = []
    for t in indices:
        if t < N_FLOW_LAGS or t >= len(plans):
            continue
        out.append(Sample(ModelInput.from_history(marginals, plans, t), plans[t], marginals[t + 1]))
    return out


@dataclass(frozen=True)
class LossConfig:
    loss_mix: float = 0.5
    learning_rate: float = 0.05
    epochs: int = 300
    optimizer: str = "gd"  # "gd" | "momentum" | "adam"
    momentum: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.loss_mix <= 1.0:
            raise ConfigurationError(f"loss_mix must be in [0, 1], got {self.loss_mix}")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.optimizer not in ("gd", "momentum", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class ModelParams:
    k: int
    hidden_sizes: tuple
    seed: int
    weights: list  # W[l] has shape (fan_in, fan_out)
    biases: list

    @property
    def layers(self):
        return list(zip(self.weights, self.biases))

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for pair in self.layers for p in pair])

    def with_flat(self, vec: np.ndarray) -> "ModelParams":
        ws, bs, i = [], [], 0
        for W, b in self.layers:
            ws.append(vec[i : i + W.size].reshape(W.shape))
            i += W.size
            bs.append(vec[i : i + b.size].reshape(b.shape))
            i += b.size
        return replace(self, weights=ws, biases=bs)

    def copy(self) -> "ModelParams":
        return self.with_flat(self.flat().copy())

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "hidden_sizes": list(self.hidden_sizes),
            "seed": self.seed,
            "weights": [W.ravel().tolist() for W in self.weights],
            "weight_shapes": [list(W.shape) for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        ws = [np.asarray(w, dtype=np.float64).reshape(s) for w, s in zip(d["weights"], d["weight_shapes"])]
        bs = [np.asarray(b, dtype=np.float64) for b in d["biases"]]
        p = cls(int(d["k"]), tuple(d["hidden_sizes"]), int(d["seed"]), ws, bs)
        p.check()
        return p

    def check(self) -> None:
        sizes = [input_size(self.k), *self.hidden_sizes, self.k * self.k]
        for l, (W, b) in enumerate(self.layers):
            if W.shape != (sizes[l], sizes[l + 1]) or b.shape != (sizes[l + 1],):
                raise ConfigurationError(f"layer {l} has shape {W.shape}, expected {(sizes[l], sizes[l + 1])}")


def init_params(k: int, hidden_sizes: Sequence[int] | None = None, seed: int = 0) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization; one tanh layer of width 4k^2 by default."""
    if k < 2:
        raise ConfigurationError("k must be >= 2")
    hidden = tuple(int(h) for h in (hidden_sizes if hidden_sizes is not None else (4 * k * k,)))
    rng = np.random.default_rng(seed)
    sizes = [input_size(k), *hidden, k * k]
    ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        bs.append(rng.uniform(-bound, bound, size=fan_out))
    return ModelParams(k, hidden, seed, ws, bs)


# ---------------------------------------------------------------------------
# network


def network_forward(params: ModelParams, X: np.ndarray):
    """Potentials ``(B, k, k)`` for a batch of input vectors ``(B, d)``, plus the activation cache."""
    acts = [X]
    h = X
    n = len(params.weights)
    for l, (W, b) in enumerate(params.layers):
        h = h @ W + b
        if l < n - 1:
            h = np.tanh(h)
        acts.append(h)
    return h.reshape(-1, params.k, params.k), acts


def network_backward(params: ModelParams, acts, grad_out: np.ndarray):
    """Gradients ``(dW list, db list)`` given dL/d(potentials) of shape ``(B, k, k)``."""
    g = grad_out.reshape(grad_out.shape[0], -1)
    n = len(params.weights)
    dWs, dbs = [None] * n, [None] * n
    for l in range(n - 1, -1, -1):
        dWs[l] = acts[l].T @ g
        dbs[l] = g.sum(axis=0)
        if l > 0:
            g = (g @ params.weights[l].T) * (1.0 - acts[l] ** 2)
    return dWs, dbs


def _stack_inputs(inputs: Sequence[ModelInput]) -> np.ndarray:
    return np.stack([inp.vector() for inp in inputs])


def predict_plans(inputs: Sequence[ModelInput], params: ModelParams, cfg: SinkhornConfig | None = None):
    """Batched ``diag(x_t) @ S(f(input))``; returns ``(B, k, k)``."""
    cfg = cfg or SinkhornConfig()
    for inp in inputs:
        if inp.k != params.k:
            raise ConfigurationError(f"model was built for k={params.k}, input has k={inp.k}")
    M, _ = network_forward(params, _stack_inputs(inputs))
    S = sinkhorn_forward(M, cfg).matrix
    x = np.stack([inp.x_now for inp in inputs])
    return x[:, :, None] * S


def predict_plan(inp: ModelInput, params: ModelParams, cfg: SinkhornConfig | None = None) -> np.ndarray:
    """Predicted transport plan for one lag window."""
    return predict_plans([inp], params, cfg)[0]


# ---------------------------------------------------------------------------
# loss


def loss(P_true, P_hat, x_next, cfg: LossConfig | float) -> float:
    """Interpolated plan/marginal squared loss for one step."""
    mix = cfg.loss_mix if isinstance(cfg, LossConfig) else float(cfg)
    P_true = np.asarray(P_true, dtype=np.float64)
    P_hat = np.asarray(P_hat, dtype=np.float64)
    x_next = np.asarray(x_next, dtype=np.float64)
    if P_true.shape != P_hat.shape or x_next.shape != P_hat.shape[-1:]:
        raise DimensionError(f"shape mismatch: {P_true.shape}, {P_hat.shape}, {x_next.shape}")
    plan_term = np.sum((P_true - P_hat) ** 2)
    marg_term = np.sum((x_next - P_hat.sum(axis=-2)) ** 2)
    return float((1.0 - mix) * plan_term + mix * marg_term)


def _loss_terms(P_true, P_hat, x_next, mix):
    """Per-sample losses ``(B,)`` and dL/dP_hat ``(B, k, k)``."""
    diff = P_hat - P_true
    r = P_hat.sum(axis=1) - x_next  # (B, k)
    per = (1.0 - mix) * np.sum(diff**2, axis=(1, 2)) + mix * np.sum(r**2, axis=1)
    grad = 2.0 * (1.0 - mix) * diff + 2.0 * mix * r[:, None, :]
    return per, grad


@dataclass
class BatchArrays:
    X: np.ndarray
    x_now: np.ndarray
    targets: np.ndarray
    x_next: np.ndarray

    @classmethod
    def from_samples(cls, samples: Sequence[Sample]) -> "BatchArrays":
        if not samples:
            raise ConfigurationError("dataset is empty")
        ks = {s.input.k for s in samples}
        if len(ks) != 1:
            raise DimensionError(f"samples disagree on k: {sorted(ks)}")
        return cls(
            _stack_inputs([s.input for s in samples]),
            np.stack([s.input.x_now for s in samples]),
            np.stack([s.target for s in samples]),
            np.stack([s.x_next for s in samples]),
        )


def loss_and_grad(params: ModelParams, batch: BatchArrays, mix: float, sink_cfg: SinkhornConfig | None = None):
    """Summed loss, per-sample losses and parameter gradients ``(dWs, dbs)``."""
    sink_cfg = sink_cfg or SinkhornConfig()
    M, acts = network_forward(params, batch.X)
    fwd = sinkhorn_forward(M, sink_cfg)
    S = fwd.matrix
    P_hat = batch.x_now[:, :, None] * S
    per, dP = _loss_terms(batch.targets, P_hat, batch.x_next, mix)
    dS = batch.x_now[:, :, None] * dP
    dM, _ = sinkhorn_backward(S, dS, sink_cfg)
    dWs, dbs = network_backward(params, acts, dM)
    return float(per.sum()), per, (dWs, dbs)


def total_loss(params: ModelParams, samples: Sequence[Sample], mix: float, sink_cfg: SinkhornConfig | None = None):
    batch = BatchArrays.from_samples(samples)
    P_hat = predict_plans([s.input for s in samples], params, sink_cfg)
    per, _ = _loss_terms(batch.targets, P_hat, batch.x_next, mix)
    return float(per.sum())


@dataclass
class TrainResult:
    params: ModelParams
    loss_trace: list = field(default_factory=list)


def train(
    samples: Sequence[Sample],
    params: ModelParams,
    loss_cfg: LossConfig | None = None,
    sink_cfg: SinkhornConfig | None = None,
) -> TrainResult:
    """Full-batch gradient descent; returns the final parameters and the per-epoch loss trace.

    The trace records the loss at the parameters *before* each update.
    """
    loss_cfg = loss_cfg or LossConfig()
    sink_cfg = sink_cfg or SinkhornConfig()
    batch = BatchArrays.from_samples(samples)
    if batch.x_now.shape[1] != params.k:
        raise ConfigurationError(f"model was built for k={params.k}, data has k={batch.x_now.shape[1]}")
    params = params.copy()
    theta = params.flat()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    trace = []
    for epoch in range(loss_cfg.epochs):
        cur = params.with_flat(theta)
        try:
            value, per, (dWs, dbs) = loss_and_grad(cur, batch, loss_cfg.loss_mix, sink_cfg)
        except InvalidInputError as exc:
            raise TrainingError(f"epoch {epoch}: Sinkhorn head degenerated ({exc}); lower the learning rate") from exc
        if not np.isfinite(value):
            bad = int(np.flatnonzero(~np.isfinite(per))[0]) if np.any(~np.isfinite(per)) else -1
            raise TrainingError(f"non-finite loss at epoch {epoch}, sample index {bad} of the full batch")
        trace.append(value)
        g = np.concatenate([p.ravel() for pair in zip(dWs, dbs) for p in pair])
        lr = loss_cfg.learning_rate
        if loss_cfg.optimizer == "gd":
            theta = theta - lr * g
        elif loss_cfg.optimizer == "momentum":
            m = loss_cfg.momentum * m + g
            theta = theta - lr * m
        else:
            b1, b2 = loss_cfg.momentum, loss_cfg.beta2
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mhat = m / (1 - b1 ** (epoch + 1))
            vhat = v / (1 - b2 ** (epoch + 1))
            theta = theta - lr * mhat / (np.sqrt(vhat) + loss_cfg.eps)
        if not np.all(np.isfinite(theta)):
            raise TrainingError(f"non-finite parameters after epoch {epoch}")
    return TrainResult(params.with_flat(theta), trace)


# ---------------------------------------------------------------------------
# multi-step


def rollout(history: ModelInput, params: ModelParams, steps: int, cfg: SinkhornConfig | None = None) -> list[np.ndarray]:
    """Predict ``steps`` consecutive plans, feeding each prediction back as the newest lag."""
    if steps < 1:
        raise ConfigurationError("steps must be >= 1")
    plans = []
    inp = history
    for _ in range(steps):
        P = predict_plan(inp, params, cfg)
        plans.append(P)
        inp = inp.advance(P)
    return plans


# ---------------------------------------------------------------------------
# checkpoints


def checkpoint_dict(params: ModelParams, loss_cfg: LossConfig | None = None, sink_cfg: SinkhornConfig | None = None) -> dict:
    d = params.to_dict()
    d["loss_cfg"] = None if loss_cfg is None else loss_cfg.__dict__.copy()
    d["sinkhorn_cfg"] = None if sink_cfg is None else sink_cfg.__dict__.copy()
    return d


def load_checkpoint(path):
    """Return ``(params, loss_cfg or None, sink_cfg or None)``."""
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    params = ModelParams.from_dict(d)
    loss_cfg = LossConfig(**d["loss_cfg"]) if d.get("loss_cfg") else None
    sink_cfg = SinkhornConfig(**d["sinkhorn_cfg"]) if d.get("sinkhorn_cfg") else None
    return params, loss_cfg, sink_cfg
