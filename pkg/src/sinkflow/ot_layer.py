"""Sinkhorn operator with an implicit-differentiation backward pass.

The forward pass maps a real potential matrix ``M`` to the doubly stochastic
matrix obtained by alternately normalizing the rows and the columns of
``exp(-M)``.  Its fixed point is the solution of the entropy-regularized
transport problem

    minimize  <M, S> - H(S)   s.t.  S 1 = 1,  S^T 1 = 1,

so the vector-Jacobian product can be computed from the optimality
conditions alone, without storing or unrolling the forward iterates:

    dL/dM = S * (a 1^T + 1 b^T - dL/dS)

where ``(a, b)`` solve ``[[I, S], [S^T, I]] [a; b] = [(S*G) 1; (S*G)^T 1]``.
That system is singular; it is solved by a Richardson iteration that costs one
matrix-vector product with ``S`` per half-step.

All functions accept a single ``(k, k)`` matrix or a stack ``(..., k, k)``.
For stacks, the stopping rule uses the worst residual in the stack.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, DimensionError, InvalidInputError

__all__ = [
    "SinkhornConfig",
    "DoublyStochasticMatrix",
    "BackwardWorkspace",
    "sinkhorn_forward",
    "sinkhorn_backward",
    "sinkhorn_vjp",
    "null_space_recenter",
    "marginal_residual",
]

RICHARDSON_MODES = ("jacobi", "gauss_seidel")
FLOOR_FACTOR = 2.0


@dataclass(frozen=True)
class SinkhornConfig:
    """Iteration limits and tolerances for the forward and backward passes.

    ``tol`` bounds the max deviation of any row or column sum from one;
    ``backward_tol`` bounds the linear-system residual relative to the
    right-hand side.  ``log_domain`` switches the forward pass to
    log-sum-exp updates, which tolerate arbitrarily large potentials.
    """

    max_iters: int = 100
    tol: float = 1e-6
    backward_max_iters: int = 1000
    backward_tol: float = 1e-9
    log_domain: bool = False
    richardson: str = "jacobi"

    def __post_init__(self):
        if self.max_iters < 1 or self.backward_max_iters < 1:
            raise ConfigurationError("iteration limits must be >= 1")
        if self.tol < 0 or self.backward_tol < 0:
            raise ConfigurationError("tolerances must be nonnegative")
        if self.richardson not in RICHARDSON_MODES:
            raise ConfigurationError(
                f"richardson must be one of {RICHARDSON_MODES}, got {self.richardson!r}"
            )


@dataclass
class DoublyStochasticMatrix:
    matrix: np.ndarray
    iterations_used: int
    residual: float
    converged: bool

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


@dataclass
class BackwardWorkspace:
    """Final Richardson iterate and its convergence status.

    The size of this object depends only on ``k``, never on how many
    forward or backward iterations were run.
    """

    a: np.ndarray
    b: np.ndarray
    converged: bool
    iterations_used: int
    residual: float = field(default=0.0)


def _check_square(M: np.ndarray, name: str) -> int:
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise DimensionError(f"{name} must be square (..., k, k), got shape {M.shape}")
    k = M.shape[-1]
    if k < 2:
        raise DimensionError(f"{name} must have k >= 2, got k={k}")
    return k


def marginal_residual(S: np.ndarray) -> float:
    """Largest deviation of any row or column sum of ``S`` from one."""
    S = np.asarray(S)
    rows = np.abs(S.sum(axis=-1) - 1.0).max()
    cols = np.abs(S.sum(axis=-2) - 1.0).max()
    return float(max(rows, cols))


def sinkhorn_forward(M, cfg: SinkhornConfig | None = None) -> DoublyStochasticMatrix:
    """Run Sinkhorn iterations on ``exp(-M)``.

    Each iteration normalizes rows, then columns.  Iteration stops once the
    residual is at most ``cfg.tol`` or after ``cfg.max_iters`` iterations; in
    the latter case the iterate with the smallest residual is returned with
    ``converged=False``.
    """
    cfg = cfg or SinkhornConfig()
    M = np.asarray(M, dtype=np.float64)
    _check_square(M, "M")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError("potential matrix contains NaN or Inf")

    if cfg.log_domain:
        return _forward_log(M, cfg)

    # row then column minimum shifts are diagonal scalings, which normalization absorbs;
    # afterwards every row and column of exp(-M) holds an exact 1, so none can underflow to zero
    M = M - M.min(axis=-1, keepdims=True)
    M = M - M.min(axis=-2, keepdims=True)
    S = np.exp(-M)

    best, best_res, best_it = None, np.inf, 0
    for it in range(1, cfg.max_iters + 1):
        S = S / S.sum(axis=-1, keepdims=True)
        S = S / S.sum(axis=-2, keepdims=True)
        res = marginal_residual(S)
        if not np.isfinite(res):
            raise InvalidInputError(f"Sinkhorn iterates became non-finite at iteration {it}")
        if res < best_res:
            best, best_res, best_it = S, res, it
        if res <= cfg.tol:
            return DoublyStochasticMatrix(S, it, res, True)
    return DoublyStochasticMatrix(best, best_it, best_res, False)


def _forward_log(M: np.ndarray, cfg: SinkhornConfig) -> DoublyStochasticMatrix:
    logS = -M
    best, best_res, best_it = None, np.inf, 0
    for it in range(1, cfg.max_iters + 1):
        logS = logS - logsumexp(logS, axis=-1, keepdims=True)
        logS = logS - logsumexp(logS, axis=-2, keepdims=True)
        S = np.exp(logS)
        res = marginal_residual(S)
        if not np.isfinite(res):
            raise InvalidInputError(f"Sinkhorn iterates became non-finite at iteration {it}")
        if res < best_res:
            best, best_res, best_it = S, res, it
        if res <= cfg.tol:
            return DoublyStochasticMatrix(S, it, res, True)
    return DoublyStochasticMatrix(best, best_it, best_res, False)


def null_space_recenter(a_bar, b_bar):
    """Move ``a`` and ``b`` along the null direction ``(1, -1)`` until their sums agree.

    ``a 1^T + 1 b^T`` is unchanged.
    """
    a_bar = np.asarray(a_bar, dtype=np.float64)
    b_bar = np.asarray(b_bar, dtype=np.float64)
    if a_bar.shape != b_bar.shape:
        raise DimensionError(f"length mismatch: {a_bar.shape} vs {b_bar.shape}")
    k = a_bar.shape[-1]
    c = (a_bar.sum(axis=-1, keepdims=True) - b_bar.sum(axis=-1, keepdims=True)) / (2 * k)
    return a_bar - c, b_bar + c


def _matvec(S, v):
    return np.einsum("...ij,...j->...i", S, v)


def _rmatvec(S, v):
    return np.einsum("...ij,...i->...j", S, v)


def sinkhorn_backward(S, grad_S, cfg: SinkhornConfig | None = None, trace: list | None = None):
    """Vector-Jacobian product of the Sinkhorn fixed point.

    Parameters
    ----------
    S : array (..., k, k) or DoublyStochasticMatrix
        Forward output; must be strictly positive.
    grad_S : array (..., k, k)
        Upstream gradient dL/dS.
    cfg : SinkhornConfig
        Uses ``backward_max_iters``, ``backward_tol`` and ``richardson``.
        The effective tolerance is never below twice the marginal residual
        of ``S``.
    trace : list, optional
        If given, the 2-norm of the linear-system residual at every
        iterate is appended to it.

    Returns
    -------
    grad_M : array (..., k, k)
    workspace : BackwardWorkspace
    """
    cfg = cfg or SinkhornConfig()
    if isinstance(S, DoublyStochasticMatrix):
        S = S.matrix
    S = np.asarray(S, dtype=np.float64)
    G = np.asarray(grad_S, dtype=np.float64)
    k = _check_square(S, "S")
    if G.shape != S.shape:
        raise DimensionError(f"dL/dS shape {G.shape} does not match S shape {S.shape}")
    if not np.all(np.isfinite(S)) or np.any(S <= 0):
        raise InvalidInputError("S must be finite and strictly positive")
    if not np.all(np.isfinite(G)):
        raise InvalidInputError("dL/dS contains NaN or Inf")

    SG = S * G
    ua = SG.sum(axis=-1)
    ub = SG.sum(axis=-2)
    # exact value of sum(a) + sum(b) at the solution when S is doubly stochastic
    total = ua.sum(axis=-1, keepdims=True)
    scale = max(float(np.abs(ua).max()), float(np.abs(ub).max()))
    if scale == 0.0:
        scale = 1.0
    # with S doubly stochastic only to within its marginal residual, the system
    # is consistent only to about that level; do not iterate below it
    target = max(cfg.backward_tol, FLOOR_FACTOR * marginal_residual(S))

    a = np.zeros_like(ua)
    b = np.zeros_like(ub)
    res = np.inf
    converged = False
    it = 0
    while True:
        Sb = _matvec(S, b)
        Sta = _rmatvec(S, a)
        ra = ua - a - Sb
        rb = ub - b - Sta
        res = max(float(np.abs(ra).max()), float(np.abs(rb).max())) / scale
        if trace is not None:
            trace.append(float(np.sqrt(np.sum(ra**2) + np.sum(rb**2))))
        if res <= target:
            converged = True
            break
        if it == cfg.backward_max_iters:
            break
        a_bar = ua - Sb
        if cfg.richardson == "jacobi":
            b_bar = ub - Sta
            # the all-ones direction has eigenvalue -1 under the simultaneous
            # update and would oscillate forever; pin it to its exact value
            shift = (a_bar.sum(axis=-1, keepdims=True) + b_bar.sum(axis=-1, keepdims=True) - total) / (2 * k)
            a_bar = a_bar - shift
            b_bar = b_bar - shift
        else:
            b_bar = ub - _rmatvec(S, a_bar)
        a, b = null_space_recenter(a_bar, b_bar)
        it += 1

    grad_M = S * (a[..., :, None] + b[..., None, :] - G)
    return grad_M, BackwardWorkspace(a=a, b=b, converged=converged, iterations_used=it, residual=res)


def sinkhorn_vjp(M, grad_S, cfg: SinkhornConfig | None = None) -> np.ndarray:
    """Convenience wrapper: forward then implicit backward, returning dL/dM."""
    fwd = sinkhorn_forward(M, cfg)
    grad, _ = sinkhorn_backward(fwd, grad_S, cfg)
    return grad
