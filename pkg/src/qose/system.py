"""Simulated quantum register: states, unitary dynamics, measurement, noise.

States are complex 1-D arrays. Noise-injected states are not renormalized
unless asked, so callers that need a physical state check the norm.
"""

from dataclasses import dataclass, field
from functools import reduce
from typing import Optional

import numpy as np

from . import linalg
from .errors import (
    DimensionMismatch,
    IncompleteMeasurement,
    NonUnitary,
    NotNormalized,
    NotPSD,
    ZeroProbabilityBranch,
)
from .linalg import as_matrix, as_vector

NORMALIZATION_TOL = 1e-10
COMPLETENESS_TOL = 1e-8
SYSTEM_UNITARITY_TOL = 1e-8
PROBABILITY_FLOOR = 1e-14

MODES = ("stacked", "battery")
PROCESS_NOISE_MODES = ("explicit", "output_folded")

_s = 1 / np.sqrt(2)
PRESETS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "H": np.array([[_s, _s], [_s, -_s]], dtype=complex),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
    "T": np.array([[1, 0], [0, np.exp(1j * np.pi / 4)]], dtype=complex),
    "P0": np.array([[1, 0], [0, 0]], dtype=complex),
    "P1": np.array([[0, 0], [0, 1]], dtype=complex),
}


def preset(name):
    """Return a copy of a named single-qubit operator."""
    try:
        return PRESETS[name].copy()
    except KeyError:
        raise KeyError(f"unknown operator preset {name!r}; known: {sorted(PRESETS)}") from None


def kron(names):
    """Tensor product of named presets, leftmost factor is the most significant qubit."""
    if not names:
        raise ValueError("kron needs at least one factor")
    return reduce(np.kron, [preset(n) for n in names])


def basis_state(d, k):
    e = np.zeros(d, dtype=complex)
    e[k] = 1.0
    return e


def uniform_state(d):
    return np.full(d, 1 / np.sqrt(d), dtype=complex)


def complex_normal(rng, size):
    """Standard circularly-symmetric complex normal draws, ``E|z|^2 = 1``."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2)


def random_state(d, rng):
    v = complex_normal(rng, d)
    return v / np.linalg.norm(v)


def haar_random_unitary(d, rng):
    """Haar-distributed ``d x d`` unitary from the QR of a Ginibre matrix."""
    if d < 1:
        raise ValueError("d must be >= 1")
    z = complex_normal(rng, (d, d))
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    # fix the phase freedom of QR so the distribution is Haar
    return q * (diag / np.abs(diag))


def check_psd(S, name="matrix"):
    """Validate that ``S`` is Hermitian (1e-10) with eigenvalues >= -1e-12."""
    S = as_matrix(S, name)
    if S.shape[0] != S.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got {S.shape}")
    if not linalg.is_hermitian(S):
        raise NotPSD(f"{name} is not Hermitian")
    w = np.linalg.eigvalsh(linalg.hermitize(S))
    if w[0] < -1e-12 * max(1.0, abs(w[-1])):
        raise NotPSD(f"{name} has negative eigenvalue {w[0]:.3g}")
    return S


def _check_state(psi, d=None):
    psi = as_vector(psi, "psi")
    if d is not None and psi.size != d:
        raise DimensionMismatch(f"state has dim {psi.size}, expected {d}")
    return psi


def _check_normalized(psi):
    n = np.linalg.norm(psi)
    if abs(n - 1.0) > NORMALIZATION_TOL:
        raise NotNormalized(f"state norm is {n!r}")


# ---------------------------------------------------------------------------
# Born rule

def outcome_probability(psi, M):
    """Probability ``<psi|M^dag M|psi>`` of the outcome attached to ``M``."""
    M = as_matrix(M, "M")
    psi = _check_state(psi, M.shape[1])
    _check_normalized(psi)
    p = float(np.real(np.vdot(M @ psi, M @ psi)))
    if -NORMALIZATION_TOL <= p < 0.0:
        p = 0.0
    elif 1.0 < p <= 1.0 + NORMALIZATION_TOL:
        p = 1.0
    return p


def post_measurement_state(psi, M):
    """State after observing the outcome of ``M``: ``M psi / sqrt(p)``.

    Raises:
        ZeroProbabilityBranch: the outcome has probability below 1e-14.
    """
    p = outcome_probability(psi, M)
    if p <= PROBABILITY_FLOOR:
        raise ZeroProbabilityBranch(f"outcome has probability {p:.3g}")
    out = as_matrix(M) @ as_vector(psi)
    return out / np.linalg.norm(out)


def normalized_operator(M, kind="spectral", psi=None):
    """``M / ||M||`` for the chosen norm kind."""
    M = as_matrix(M, "M")
    return M / linalg.operator_norm(M, kind, psi)


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    """A labelled set of measurement operators.

    Completeness ``sum_m M_m^dag M_m = I`` is checked on construction.

    Attributes:
        operators: tuple of ``(label, matrix)`` pairs.
        norm_kind: how each operator is rescaled before use as an observable.
        mode: ``"stacked"`` feeds one estimator with all operators stacked;
            ``"battery"`` runs one estimator per operator.
        reference_state: surrogate state for the ``state_dependent`` norm.
    """

    operators: tuple
    norm_kind: str = "spectral"
    mode: str = "stacked"
    reference_state: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.operators:
            raise IncompleteMeasurement("measurement model has no operators")
        ops = tuple((str(label), as_matrix(m, f"operator {label!r}")) for label, m in self.operators)
        labels = [label for label, _ in ops]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate measurement labels in {labels}")
        d = ops[0][1].shape[0]
        for label, m in ops:
            if m.shape != (d, d):
                raise DimensionMismatch(f"operator {label!r} has shape {m.shape}, expected {(d, d)}")
        if self.norm_kind not in linalg.NORM_KINDS:
            raise ValueError(f"unknown norm kind {self.norm_kind!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown measurement mode {self.mode!r}")
        ref = self.reference_state
        if self.norm_kind == "state_dependent":
            if ref is None:
                raise ValueError("state_dependent norm needs an explicit reference_state")
            ref = _check_state(ref, d)
        elif ref is not None:
            ref = _check_state(ref, d)
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "reference_state", ref)
        err = self.completeness_error()
        if err > COMPLETENESS_TOL:
            raise IncompleteMeasurement(
                f"sum_m M_m^dag M_m deviates from I by {err:.3g} (Frobenius); "
                "measurement operators must satisfy the completeness relation"
            )

    @property
    def dim(self):
        return self.operators[0][1].shape[0]

    @property
    def labels(self):
        return [label for label, _ in self.operators]

    def completeness_error(self):
        total = sum(m.conj().T @ m for _, m in self.operators)
        return float(np.linalg.norm(total - np.eye(self.dim)))

    def normalized_operators(self):
        return [
            (label, normalized_operator(m, self.norm_kind, self.reference_state))
            for label, m in self.operators
        ]


def projective_model(d, norm_kind="spectral", mode="stacked"):
    """Computational-basis projectors labelled ``a0 .. a{d-1}``."""
    ops = tuple((f"a{k}", np.outer(basis_state(d, k), basis_state(d, k))) for k in range(d))
    return MeasurementModel(ops, norm_kind=norm_kind, mode=mode)


def random_complete_model(d, n_outcomes, rng, norm_kind="spectral", mode="stacked"):
    """Random complete model ``M_m = W_m`` from a Haar isometry ``W`` of shape (n d) x d."""
    u = haar_random_unitary(n_outcomes * d, rng)[:, :d]
    ops = tuple((f"a{k}", u[k * d:(k + 1) * d, :]) for k in range(n_outcomes))
    return MeasurementModel(ops, norm_kind=norm_kind, mode=mode)


def stacked_observable(model):
    """Stack the normalized operators vertically into one ``(n d) x d`` matrix."""
    return np.vstack([m for _, m in model.normalized_operators()])


def sample_outcome(psi, model, rng):
    """Draw an outcome by the Born rule and return ``(label, post-measurement state)``."""
    probs = np.array([outcome_probability(psi, m) for _, m in model.operators])
    probs = probs / probs.sum()
    k = rng.choice(len(probs), p=probs)
    label, M = model.operators[k]
    return label, post_measurement_state(psi, M)


# ---------------------------------------------------------------------------
# dynamics and noise

@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Constant state-noise covariance ``Q`` and measurement-noise covariance ``R``.

    ``None`` means no noise of that kind. ``R`` refers to the stacked
    observable, i.e. it is ``(n d) x (n d)`` for ``n`` operators.
    """

    Q: Optional[np.ndarray] = None
    R: Optional[np.ndarray] = None
    process_noise_mode: str = "explicit"
    renormalize_after_state_noise: bool = False

    def __post_init__(self):
        if self.process_noise_mode not in PROCESS_NOISE_MODES:
            raise ValueError(f"unknown process_noise_mode {self.process_noise_mode!r}")
        for name in ("Q", "R"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, check_psd(value, name))

    @classmethod
    def isotropic(cls, d, n_outputs, sigma_Q=0.0, sigma_R=0.0, **kwargs):
        return cls(
            Q=sigma_Q**2 * np.eye(d) if sigma_Q else None,
            R=sigma_R**2 * np.eye(n_outputs) if sigma_R else None,
            **kwargs,
        )


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Everything that happens inside the simulated device.

    Give either ``unitary`` or ``hamiltonian`` (with ``dt`` and ``hbar``);
    the propagator is then ``exp(-i H dt / hbar)``.
    """

    measurement: MeasurementModel
    initial_state: np.ndarray
    unitary: Optional[np.ndarray] = None
    hamiltonian: Optional[np.ndarray] = None
    dt: float = 1.0
    hbar: float = 1.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        d = self.measurement.dim
        psi0 = _check_state(self.initial_state, d)
        _check_normalized(psi0)
        object.__setattr__(self, "initial_state", psi0)
        if (self.unitary is None) == (self.hamiltonian is None):
            raise ValueError("give exactly one of unitary or hamiltonian")
        if self.unitary is not None:
            U = as_matrix(self.unitary, "unitary")
            if U.shape != (d, d):
                raise DimensionMismatch(f"unitary has shape {U.shape}, expected {(d, d)}")
            if linalg.unitarity_error(U) > SYSTEM_UNITARITY_TOL:
                raise NonUnitary(f"unitary deviates from U^dag U = I by {linalg.unitarity_error(U):.3g}")
        else:
            if not (self.dt > 0 and self.hbar > 0):
                raise ValueError("dt and hbar must be positive")
            Hm = as_matrix(self.hamiltonian, "hamiltonian")
            if Hm.shape != (d, d):
                raise DimensionMismatch(f"hamiltonian has shape {Hm.shape}, expected {(d, d)}")
            U = linalg.hermitian_expm(Hm, self.dt, self.hbar)
            object.__setattr__(self, "hamiltonian", Hm)
        object.__setattr__(self, "_propagator", U)
        n_out = len(self.measurement.operators) * d
        if self.noise.Q is not None and self.noise.Q.shape != (d, d):
            raise DimensionMismatch(f"Q has shape {self.noise.Q.shape}, expected {(d, d)}")
        if self.noise.R is not None and self.noise.R.shape != (n_out, n_out):
            raise DimensionMismatch(f"R has shape {self.noise.R.shape}, expected {(n_out, n_out)}")

    @property
    def dim(self):
        return self.measurement.dim

    @property
    def propagator(self):
        return self._propagator

    @property
    def observable(self):
        return stacked_observable(self.measurement)

    @property
    def n_outputs(self):
        return len(self.measurement.operators) * self.dim

    def Q(self):
        return self.noise.Q if self.noise.Q is not None else np.zeros((self.dim, self.dim), complex)

    def R(self):
        n = self.n_outputs
        return self.noise.R if self.noise.R is not None else np.zeros((n, n), complex)


def evolve(spec, psi):
    """One noiseless step ``U psi`` of the system dynamics."""
    psi = _check_state(psi, spec.dim)
    return spec.propagator @ psi


def gaussian_noise(cov, rng):
    """Circularly-symmetric complex Gaussian vector with ``E[n n^dag] = cov``."""
    L = linalg.psd_factor(cov)
    return L @ complex_normal(rng, L.shape[1])


def inject_state_noise(psi, Q, rng, renormalize=False):
    """Additive state noise ``psi + n``, ``n ~ CN(0, Q)``.

    The result is not renormalized unless ``renormalize`` is set.
    A zero ``Q`` returns ``psi`` untouched and consumes no random draws.
    """
    Q = check_psd(Q, "Q")
    psi = _check_state(psi, Q.shape[0])
    if not np.any(Q):
        return psi.copy()
    out = psi + gaussian_noise(Q, rng)
    if renormalize:
        out = out / np.linalg.norm(out)
    return out


def observe(psi, H, R, rng):
    """Noisy amplitude-level observable ``H psi + v``, ``v ~ CN(0, R)``.

    With ``R = 0`` (or ``None``) this is the exact product and no random
    numbers are consumed.
    """
    H = as_matrix(H, "H")
    psi = _check_state(psi, H.shape[1])
    y = H @ psi
    if R is None:
        return y
    R = check_psd(R, "R")
    if R.shape[0] != H.shape[0]:
        raise DimensionMismatch(f"R has shape {R.shape}, observable has {H.shape[0]} rows")
    if not np.any(R):
        return y
    return y + gaussian_noise(R, rng)
