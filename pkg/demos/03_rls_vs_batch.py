"""
Recursive least squares against its batch solution
===================================================

After ``T`` steps with a static state the recursion holds exactly the
minimizer of the exponentially weighted, regularized least-squares cost.
Solving that problem in one shot gives an independent check.
"""

import numpy as np

from qose import estimator

rng = np.random.default_rng(3)
d, T, lam, delta = 4, 25, 0.95, 100.0


def cnormal(*shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


x_true = cnormal(d)
batch = []
for _ in range(T):
    H = cnormal(2, d)
    batch.append((H, H @ x_true + 0.01 * cnormal(2)))

cfg = estimator.EstimatorConfig(lam=lam, delta=delta)
state = estimator.run(estimator.init(cfg, d), np.eye(d), batch, cfg)
oracle = estimator.batch_weighted_ls_oracle(batch, lam, delta, np.zeros(d))

print("recursive :", np.round(state.x_hat, 6))
print("batch     :", np.round(oracle, 6))
print("relative difference:", np.linalg.norm(state.x_hat - oracle) / np.linalg.norm(oracle))
print("distance to the true state:", np.linalg.norm(state.x_hat - x_true))
