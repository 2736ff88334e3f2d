# Sinkhorn layer: forward normalization and the implicit backward pass.
#
# Run:  python3 demos/01_sinkhorn_layer.py

import numpy as np

from sinkflow.ot_layer import SinkhornConfig, sinkhorn_backward, sinkhorn_forward

np.set_printoptions(precision=4, suppress=True)
rng = np.random.default_rng(0)

#-------------------------------------------------------------------------
# Forward
#-------------------------------------------------------------------------
# exp(-M) is normalized row-wise, then column-wise, until both sums are 1.
# Low potentials on the diagonal pull the result towards the identity.

M = np.where(np.eye(3, dtype=bool), -10.0, 0.0)
out = sinkhorn_forward(M)
print("strong diagonal preference")
print(out.matrix)
print("iterations", out.iterations_used, "residual", out.residual)

M = rng.uniform(-5, 5, (5, 5))
out = sinkhorn_forward(M, SinkhornConfig(max_iters=10_000, tol=1e-9))
print("\nrandom 5x5, tol 1e-9")
print("row sums   ", out.matrix.sum(axis=1))
print("column sums", out.matrix.sum(axis=0))
print("iterations", out.iterations_used)

# adding a constant to every potential changes nothing
shifted = sinkhorn_forward(M + 42.0, SinkhornConfig(max_iters=10_000, tol=1e-9))
print("max change after shift:", np.abs(shifted.matrix - out.matrix).max())

#-------------------------------------------------------------------------
# Backward
#-------------------------------------------------------------------------
# For L = <G, S(M)> the gradient is S * (a 1^T + 1 b^T - G) where (a, b)
# solve a 2k x 2k system built from S.  The solve only touches S, so no
# forward iterate is stored.

tight = SinkhornConfig(max_iters=100_000, tol=1e-12, backward_tol=1e-11, backward_max_iters=100_000)
G = rng.standard_normal((5, 5))
fwd = sinkhorn_forward(M, tight)
trace = []
grad, ws = sinkhorn_backward(fwd, G, tight, trace=trace)
print("\nforward iterations ", fwd.iterations_used)
print("backward iterations", ws.iterations_used, "converged", ws.converged)
print("residual every 20 steps:", np.array(trace[::20]))

# finite-difference check of a single entry
h = 1e-5
E = np.zeros_like(M)
E[1, 3] = h
plus = np.sum(G * sinkhorn_forward(M + E, tight).matrix)
minus = np.sum(G * sinkhorn_forward(M - E, tight).matrix)
print("dL/dM[1,3] implicit %.8f  finite difference %.8f" % (grad[1, 3], (plus - minus) / (2 * h)))
