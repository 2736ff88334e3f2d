"""Independent gradient oracles for the Sinkhorn layer and a harness comparing them.

Two references are used for ``dL/dM`` with ``L = <G, S(M)>``:

* central finite differences of ``L`` with every forward run to a tight
  tolerance, and
* reverse-mode differentiation of the explicitly unrolled forward iterations.

Neither shares code with the implicit backward pass.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError
from .ot_layer import SinkhornConfig, marginal_residual, sinkhorn_backward, sinkhorn_forward

ORACLE_CFG = SinkhornConfig(max_iters=100_000, tol=1e-12)
FD_THRESHOLD = 1e-4
UNROLLED_THRESHOLD = 1e-5


def relative_error(x, ref) -> float:
    """Frobenius relative error ``|x - ref| / |ref|`` (absolute if ``ref`` is zero)."""
    x = np.asarray(x)
    ref = np.asarray(ref)
    denom = np.linalg.norm(ref)
    diff = np.linalg.norm(x - ref)
    return float(diff / denom) if denom > 0 else float(diff)


def unrolled_forward(M, n_iters: int):
    """Plain Sinkhorn for exactly ``n_iters`` iterations, keeping every intermediate."""
    M = np.asarray(M, dtype=np.float64)
    S0 = np.exp(-(M - M.min()))
    tape = [S0]
    S = S0
    for _ in range(n_iters):
        R = S / S.sum(axis=1, keepdims=True)
        S = R / R.sum(axis=0, keepdims=True)
        tape.append(R)
        tape.append(S)
    return S, tape


def unrolled_vjp(M, grad_S, n_iters: int) -> np.ndarray:
    """Gradient of ``<grad_S, S_n(M)>`` by backpropagating through ``n_iters`` iterations."""
    _, tape = unrolled_forward(M, n_iters)
    g = np.asarray(grad_S, dtype=np.float64).copy()
    for i in range(n_iters, 0, -1):
        R = tape[2 * i - 1]
        C = tape[2 * i]
        # C = R / colsum(R)
        g = (g - (g * C).sum(axis=0, keepdims=True)) / R.sum(axis=0, keepdims=True)
        P = tape[2 * i - 2]
        # R = P / rowsum(P)
        g = (g - (g * R).sum(axis=1, keepdims=True)) / P.sum(axis=1, keepdims=True)
    # S0 = exp(-(M - min M)); the shift has zero net effect on the normalized output
    return -tape[0] * g


def converged_iterations(M, tol: float = 1e-12, max_iters: int = 100_000) -> int | None:
    """Number of forward iterations needed to reach ``tol``, or None if never."""
    fwd = sinkhorn_forward(M, SinkhornConfig(max_iters=max_iters, tol=tol))
    return fwd.iterations_used if fwd.converged else None


def finite_difference_vjp(M, grad_S, step: float = 1e-5, cfg: SinkhornConfig = ORACLE_CFG) -> np.ndarray:
    """Central-difference gradient of ``<grad_S, S(M)>`` entry by entry."""
    M = np.asarray(M, dtype=np.float64)
    G = np.asarray(grad_S, dtype=np.float64)
    out = np.zeros_like(M)
    for idx in np.ndindex(M.shape):
        Mp = M.copy()
        Mm = M.copy()
        Mp[idx] += step
        Mm[idx] -= step
        lp = np.sum(G * sinkhorn_forward(Mp, cfg).matrix)
        lm = np.sum(G * sinkhorn_forward(Mm, cfg).matrix)
        out[idx] = (lp - lm) / (2 * step)
    return out


@dataclass
class TrialResult:
    trial: int
    fd_error: float
    unrolled_error: float
    forward_iterations: int
    backward_iterations: int
    backward_converged: bool


@dataclass
class GradcheckReport:
    k: int
    trials: int
    seed: int
    fd_threshold: float
    unrolled_threshold: float
    max_fd_error: float = 0.0
    max_unrolled_error: float = 0.0
    max_iteration_ratio: float = 0.0
    results: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (
            len(self.results) > 0
            and self.max_fd_error <= self.fd_threshold
            and self.max_unrolled_error <= self.unrolled_threshold
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def gradcheck(
    k: int,
    trials: int,
    seed: int = 0,
    cfg: SinkhornConfig | None = None,
    entry_range: float = 5.0,
    zero_upstream: bool = False,
) -> GradcheckReport:
    """Compare the implicit backward pass against both oracles on random instances.

    ``cfg`` configures the path under test (forward used to produce ``S``
    plus the Richardson solve).  The oracles always run to 1e-12.
    Potentials are uniform on ``[-entry_range, entry_range]`` and upstream
    gradients standard normal (or zero with ``zero_upstream``).
    """
    if k < 2:
        raise ConfigurationError("gradcheck needs k >= 2")
    if trials < 1:
        raise ConfigurationError("gradcheck needs trials >= 1")
    cfg = cfg or SinkhornConfig(max_iters=100_000, tol=1e-12, backward_max_iters=100_000, backward_tol=1e-11)
    rng = np.random.default_rng(seed)
    report = GradcheckReport(k, trials, seed, FD_THRESHOLD, UNROLLED_THRESHOLD)
    for trial in range(trials):
        M = rng.uniform(-entry_range, entry_range, size=(k, k))
        G = np.zeros((k, k)) if zero_upstream else rng.standard_normal((k, k))

        n_oracle = converged_iterations(M)
        if n_oracle is None:
            report.skipped.append({"trial": trial, "reason": "oracle forward did not converge"})
            continue

        fwd = sinkhorn_forward(M, cfg)
        grad, ws = sinkhorn_backward(fwd, G, cfg)

        ref_unrolled = unrolled_vjp(M, G, n_oracle)
        ref_fd = finite_difference_vjp(M, G)
        r = TrialResult(
            trial=trial,
            fd_error=relative_error(grad, ref_fd),
            unrolled_error=relative_error(grad, ref_unrolled),
            forward_iterations=fwd.iterations_used,
            backward_iterations=ws.iterations_used,
            backward_converged=ws.converged,
        )
        report.results.append(r)
        report.max_fd_error = max(report.max_fd_error, r.fd_error)
        report.max_unrolled_error = max(report.max_unrolled_error, r.unrolled_error)
        report.max_iteration_ratio = max(
            report.max_iteration_ratio, r.backward_iterations / max(r.forward_iterations, 1)
        )
    return report


__all__ = [
    "relative_error",
    "unrolled_forward",
    "unrolled_vjp",
    "finite_difference_vjp",
    "converged_iterations",
    "gradcheck",
    "GradcheckReport",
    "TrialResult",
    "marginal_residual",
]
