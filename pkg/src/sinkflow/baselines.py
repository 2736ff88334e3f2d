"""Reference predictors: identity, average history, and per-element classifiers.

The per-element baselines (logistic regression and a one-hidden-layer MLP)
predict each element's next faction from its last three labels and aggregate
the predicted class probabilities into a plan.  Because there are at most
``k**3`` distinct label histories, they are trained on weighted history
counts rather than on every (element, time) row; the likelihood is identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError, InvalidInputError
from .model import MARKOV_ORDER


def identity_predict(x_now) -> np.ndarray:
    """Everyone stays put."""
    return np.diag(np.asarray(x_now, dtype=np.float64))


def rescale_rows(plan, x_now) -> np.ndarray:
    """Scale each row of ``plan`` to sum to ``x_now``; empty rows put the mass on the diagonal."""
    plan = np.asarray(plan, dtype=np.float64)
    x_now = np.asarray(x_now, dtype=np.float64)
    if plan.shape != (len(x_now), len(x_now)):
        raise DimensionError(f"plan shape {plan.shape} does not match k={len(x_now)}")
    sums = plan.sum(axis=1)
    out = np.zeros_like(plan)
    for i, (s, xi) in enumerate(zip(sums, x_now)):
        if xi == 0:
            continue
        if s > 0:
            out[i] = plan[i] * (xi / s)
        else:
            out[i, i] = xi
    return out


def average_history_predict(prev_plan, prev_prev_plan, x_now) -> np.ndarray:
    """Mean of the two most recent plans, rows rescaled to the current marginal."""
    prev_plan = np.asarray(prev_plan, dtype=np.float64)
    prev_prev_plan = np.asarray(prev_prev_plan, dtype=np.float64)
    if prev_plan.shape != prev_prev_plan.shape:
        raise DimensionError("plans must have the same shape")
    return rescale_rows(0.5 * (prev_plan + prev_prev_plan), x_now)


# ---------------------------------------------------------------------------
# per-element classifiers


@dataclass(frozen=True)
class ElementHistory:
    element_id: int
    labels: tuple  # (label_t, label_{t-1}, label_{t-2})

    def __post_init__(self):
        if len(self.labels) != MARKOV_ORDER:
            raise InvalidInputError(f"history must have {MARKOV_ORDER} labels, got {len(self.labels)}")


def encode_states(states: np.ndarray, k: int) -> np.ndarray:
    """One-hot features for label histories ``(n, 3)`` -> ``(n, 3k)``."""
    states = np.asarray(states, dtype=np.int64)
    if states.size and (states.min() < 0 or states.max() >= k):
        raise InvalidInputError(f"label outside [0, {k})")
    n = states.shape[0]
    X = np.zeros((n, MARKOV_ORDER * k))
    for j in range(MARKOV_ORDER):
        X[np.arange(n), j * k + states[:, j]] = 1.0
    return X


def state_index(states: np.ndarray, k: int) -> np.ndarray:
    s = np.asarray(states, dtype=np.int64)
    return (s[:, 0] * k + s[:, 1]) * k + s[:, 2]


def all_states(k: int) -> np.ndarray:
    g = np.indices((k,) * MARKOV_ORDER).reshape(MARKOV_ORDER, -1).T
    return g  # row index equals state_index


def history_counts(labels: np.ndarray, k: int, targets) -> np.ndarray:
    """Count matrix ``(k**3, k)``: how often history state ``s`` was followed by label ``j``.

    ``targets`` are time indices ``t`` of transitions ``labels[t] -> labels[t+1]``;
    transitions without three labels of history are skipped.
    """
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.zeros((k**MARKOV_ORDER, k))
    for t in targets:
        if t < MARKOV_ORDER - 1 or t + 1 >= labels.shape[0]:
            continue
        states = np.stack([labels[t - j] for j in range(MARKOV_ORDER)], axis=1)
        np.add.at(counts, (state_index(states, k), labels[t + 1]), 1.0)
    return counts


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class LogisticRegressionClassifier:
    """Multinomial logistic regression trained by full-batch gradient descent."""

    k: int
    learning_rate: float = 1.0
    max_steps: int = 10_000
    grad_tol: float = 1e-6
    l2: float = 1e-6
    W: np.ndarray = field(default=None, repr=False)
    b: np.ndarray = field(default=None, repr=False)
    steps_used: int = 0

    def fit(self, counts: np.ndarray) -> "LogisticRegressionClassifier":
        states = all_states(self.k)
        w = counts.sum(axis=1)
        keep = w > 0
        if not np.any(keep):
            raise ConfigurationError("no training transitions")
        X = encode_states(states[keep], self.k)
        Y = counts[keep] / w[keep, None]
        w = w[keep] / w[keep].sum()
        d = X.shape[1]
        self.W = np.zeros((d, self.k))
        self.b = np.zeros(self.k)
        for step in range(self.max_steps):
            P = _softmax(X @ self.W + self.b)
            G = w[:, None] * (P - Y)
            gW = X.T @ G + self.l2 * self.W
            gb = G.sum(axis=0)
            if np.sqrt(np.sum(gW**2) + np.sum(gb**2)) <= self.grad_tol:
                break
            self.W -= self.learning_rate * gW
            self.b -= self.learning_rate * gb
        self.steps_used = step
        return self

    def predict_proba(self, states: np.ndarray) -> np.ndarray:
        return _softmax(encode_states(states, self.k) @ self.W + self.b)


@dataclass
class MLPClassifier:
    """One tanh hidden layer, softmax output, trained with full-batch Adam."""

    k: int
    hidden: int | None = None
    learning_rate: float = 0.02
    epochs: int = 2000
    seed: int = 0
    params: list = field(default=None, repr=False)

    def fit(self, counts: np.ndarray) -> "MLPClassifier":
        k = self.k
        h = self.hidden or 4 * k * k
        states = all_states(k)
        w = counts.sum(axis=1)
        keep = w > 0
        if not np.any(keep):
            raise ConfigurationError("no training transitions")
        X = encode_states(states[keep], k)
        Y = counts[keep] / w[keep, None]
        w = w[keep] / w[keep].sum()
        rng = np.random.default_rng(self.seed)
        d = X.shape[1]
        b1, b2 = 1 / np.sqrt(d), 1 / np.sqrt(h)
        theta = [
            rng.uniform(-b1, b1, (d, h)),
            rng.uniform(-b1, b1, h),
            rng.uniform(-b2, b2, (h, k)),
            rng.uniform(-b2, b2, k),
        ]
        m = [np.zeros_like(p) for p in theta]
        v = [np.zeros_like(p) for p in theta]
        for epoch in range(1, self.epochs + 1):
            W1, c1, W2, c2 = theta
            H = np.tanh(X @ W1 + c1)
            P = _softmax(H @ W2 + c2)
            G = w[:, None] * (P - Y)
            gW2 = H.T @ G
            gc2 = G.sum(axis=0)
            GH = (G @ W2.T) * (1 - H**2)
            grads = [X.T @ GH, GH.sum(axis=0), gW2, gc2]
            for i, g in enumerate(grads):
                m[i] = 0.9 * m[i] + 0.1 * g
                v[i] = 0.999 * v[i] + 0.001 * g * g
                theta[i] = theta[i] - self.learning_rate * (m[i] / (1 - 0.9**epoch)) / (
                    np.sqrt(v[i] / (1 - 0.999**epoch)) + 1e-8
                )
        self.params = theta
        return self

    def predict_proba(self, states: np.ndarray) -> np.ndarray:
        W1, c1, W2, c2 = self.params
        return _softmax(np.tanh(encode_states(states, self.k) @ W1 + c1) @ W2 + c2)


def aggregate_flow(current: np.ndarray, probs: np.ndarray, k: int, weights=None) -> np.ndarray:
    """Soft aggregation: element with current faction ``i`` adds ``w * p_j`` to entry ``(i, j)``.

    Default weights are ``1/N`` so the plan has total mass one.
    """
    current = np.asarray(current, dtype=np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (len(current), k):
        raise DimensionError(f"probabilities shape {probs.shape} != ({len(current)}, {k})")
    if current.size and (current.min() < 0 or current.max() >= k):
        raise InvalidInputError(f"label outside [0, {k})")
    w = np.full(len(current), 1.0 / len(current)) if weights is None else np.asarray(weights, dtype=np.float64)
    plan = np.zeros((k, k))
    np.add.at(plan, current, w[:, None] * probs)
    return plan


def classifier_predict(histories, classifier, k: int) -> np.ndarray:
    """Aggregate per-element class probabilities into a transport plan."""
    states = np.array([h.labels for h in histories], dtype=np.int64).reshape(-1, MARKOV_ORDER)
    if states.size and (states.min() < 0 or states.max() >= k):
        raise InvalidInputError(f"history label outside [0, {k})")
    return aggregate_flow(states[:, 0], classifier.predict_proba(states), k)


lr_predict = classifier_predict
mlp_predict = classifier_predict


def state_distribution(labels: np.ndarray, t: int, k: int) -> np.ndarray:
    """Fraction of elements in each history state at time ``t`` (length ``k**3``)."""
    states = np.stack([labels[t - j] for j in range(MARKOV_ORDER)], axis=1)
    return np.bincount(state_index(states, k), minlength=k**MARKOV_ORDER) / labels.shape[1]


def classifier_rollout(weights: np.ndarray, classifier, k: int, steps: int) -> list[np.ndarray]:
    """Propagate the history-state distribution through the classifier for ``steps`` plans.

    This is the exact expectation of element-level sampling, kept in closed form.
    """
    states = all_states(k)
    probs = classifier.predict_proba(states)  # (k^3, k)
    w = np.asarray(weights, dtype=np.float64)
    plans = []
    for _ in range(steps):
        plans.append(aggregate_flow(states[:, 0], probs, k, weights=w))
        nxt = np.zeros_like(w)
        # new state (j, s0, s1) from old (s0, s1, s2)
        for j in range(k):
            idx = (j * k + states[:, 0]) * k + states[:, 1]
            np.add.at(nxt, idx, w * probs[:, j])
        w = nxt
    return plans
