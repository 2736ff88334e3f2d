# Gradient check: implicit backward against finite differences and
# against reverse-mode differentiation of the unrolled iterations.
#
# Run:  python3 demos/02_gradient_check.py

import time

from sinkflow.gradcheck import gradcheck

for k in (3, 4, 5, 8):
    t0 = time.perf_counter()
    rep = gradcheck(k, trials=20, seed=k)
    print(
        "k=%d  max fd error %.1e  max unrolled error %.1e  backward/forward iterations <= %.2f  %s  (%.1fs)"
        % (k, rep.max_fd_error, rep.max_unrolled_error, rep.max_iteration_ratio,
           "pass" if rep.passed else "FAIL", time.perf_counter() - t0)
    )

# zero upstream gradient gives exactly zero
rep = gradcheck(4, trials=3, zero_upstream=True)
print("zero upstream:", rep.max_fd_error, rep.max_unrolled_error)
