"""
Measuring a qubit
=================

A polarized photon ``alpha|0> + beta|1>`` is measured with the projectors
``P0`` and ``P1``. The outcome probabilities are ``|alpha|^2`` and
``|beta|^2`` and the state collapses onto the observed basis vector.
"""

import numpy as np

from qose import system

alpha, beta = 0.6, 0.8j
psi = np.array([alpha, beta])
model = system.projective_model(2)

for label, M in model.operators:
    p = system.outcome_probability(psi, M)
    post = system.post_measurement_state(psi, M)
    print(f"{label}: p = {p:.3f}, post-measurement state = {np.round(post, 3)}")

# %%
# Sampling many shots reproduces the Born probabilities.

rng = np.random.default_rng(0)
shots = [system.sample_outcome(psi, model, rng)[0] for _ in range(10_000)]
print("empirical frequency of a0:", shots.count("a0") / len(shots))

# %%
# An incomplete set of operators is refused.

try:
    system.MeasurementModel((("a0", system.preset("P0")),))
except system.IncompleteMeasurement as exc:
    print("rejected:", exc)
