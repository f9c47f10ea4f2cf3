"""
Unitary dynamics from a Hamiltonian
===================================

The propagator over one time step is ``exp(-i H dt / hbar)``. For
``H = sigma_x`` and ``dt = pi / 2`` it maps ``|0>`` to ``-i|1>``.
"""

import numpy as np

from qose import linalg, system

X = system.preset("X")
U = linalg.hermitian_expm(X, t=np.pi / 2)
print("U =\n", np.round(U, 12))
print("U|0> =", np.round(U @ [1, 0], 12))

# %%
# Small steps give a Rabi oscillation; the norm never drifts.

spec = system.SystemSpec(system.projective_model(2), np.array([1, 0]), hamiltonian=X, dt=0.1)
psi = spec.initial_state
for t in range(1, 33):
    psi = system.evolve(spec, psi)
    if t % 8 == 0:
        p0 = system.outcome_probability(psi, system.preset("P0"))
        print(f"t = {t * 0.1:.1f}: p(a0) = {p0:.4f}, norm = {np.linalg.norm(psi):.15f}")

# %%
# Haar-random unitaries are the generic test dynamics.

rng = np.random.default_rng(1)
print("unitarity error:", linalg.unitarity_error(system.haar_random_unitary(8, rng)))
