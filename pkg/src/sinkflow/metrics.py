"""Flow and faction error metrics."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError


def flow_cost(P_true, P_hat) -> float:
    """Frobenius distance between two transport plans."""
    P_true = np.asarray(P_true, dtype=np.float64)
    P_hat = np.asarray(P_hat, dtype=np.float64)
    if P_true.shape != P_hat.shape:
        raise DimensionError(f"plan shapes differ: {P_true.shape} vs {P_hat.shape}")
    return float(np.linalg.norm(P_true - P_hat))


def faction_rmse(x_true, x_hat) -> float:
    """Root mean squared error between two marginals."""
    x_true = np.asarray(x_true, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x_true.shape != x_hat.shape:
        raise DimensionError(f"marginal shapes differ: {x_true.shape} vs {x_hat.shape}")
    return float(np.sqrt(np.mean((x_true - x_hat) ** 2)))


def multi_step_cost(rollouts: Sequence[Sequence], truths: Sequence[Sequence], horizon: int) -> float:
    """Cumulative flow cost over the first ``horizon`` steps, summed over anchors.

    ``rollouts[a][j]`` is the predicted plan ``j`` steps after anchor ``a``
    and ``truths[a][j]`` the matching ground truth.
    """
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    if len(rollouts) != len(truths):
        raise DimensionError("need one ground-truth sequence per rollout")
    total = 0.0
    for a, (pred, true) in enumerate(zip(rollouts, truths)):
        if len(true) < horizon or len(pred) < horizon:
            raise ConfigurationError(
                f"anchor {a}: horizon {horizon} exceeds available plans ({len(pred)} predicted, {len(true)} true)"
            )
        total += sum(flow_cost(true[j], pred[j]) for j in range(horizon))
    return float(total)
