"""
Tracking a state through a quantum algorithm
============================================

The device applies a Haar-random unitary each step and exposes the
amplitude vectors of all normalized projectors. The estimator starts from
the uniform superposition and locks onto the true state.
"""

import numpy as np

from qose import harness, system
from qose.estimator import EstimatorConfig

rng = np.random.default_rng(7)
d = 4
spec = system.SystemSpec(
    system.projective_model(d),
    system.random_state(d, rng),
    unitary=system.haar_random_unitary(d, rng),
)
records = harness.run_trajectory(spec, EstimatorConfig(lam=1.0, delta=1e6), steps=50, seed=7)

for r in records[:3] + records[-2:]:
    print(f"t = {r.t:2d}  a-posteriori error = {r.aposteriori_err:.3e}  fidelity = {r.fidelity:.12f}")
