"""Dense complex linear algebra used by the simulator and the estimator.

Vectors and matrices are plain ``numpy`` arrays of dtype ``complex128``.
Vectors are 1-D, matrices 2-D. Every function here is pure.
"""

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    NonFiniteValue,
    NonHermitianInput,
    SingularSystem,
    ZeroNorm,
)

# double-precision expectations, deliberately not configurable
UNITARITY_TOL = 1e-10
HERMITIAN_TOL = 1e-10
PD_FLOOR = 1e-12
ZERO_NORM = 1e-14

NORM_KINDS = ("spectral", "frobenius", "state_dependent")


def as_vector(x, name="vector"):
    """Coerce ``x`` to a finite complex 1-D array."""
    v = np.asarray(x, dtype=complex)
    if v.ndim == 2 and 1 in v.shape:
        v = v.reshape(-1)
    if v.ndim != 1 or v.size == 0:
        raise DimensionMismatch(f"{name} must be a non-empty 1-D array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteValue(f"{name} has non-finite entries")
    return v


def as_matrix(m, name="matrix"):
    """Coerce ``m`` to a finite complex 2-D array. Scalars become 1x1."""
    a = np.asarray(m, dtype=complex)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.size == 0:
        raise DimensionMismatch(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteValue(f"{name} has non-finite entries")
    return a


def adjoint(m):
    """Conjugate transpose."""
    return as_matrix(m).conj().T


def hermitize(m):
    """Return ``(m + m^dag) / 2``."""
    m = as_matrix(m)
    return 0.5 * (m + m.conj().T)


def is_hermitian(m, tol=HERMITIAN_TOL):
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        return False
    scale = max(np.linalg.norm(m), 1.0)
    return np.linalg.norm(m - m.conj().T) <= tol * scale


def unitarity_error(u):
    """Frobenius norm of ``U^dag U - I``."""
    u = as_matrix(u)
    return np.linalg.norm(u.conj().T @ u - np.eye(u.shape[1]))


def is_unitary(u, tol=UNITARITY_TOL):
    u = as_matrix(u)
    return u.shape[0] == u.shape[1] and unitarity_error(u) <= tol


def hermitian_expm(H, t=1.0, hbar=1.0):
    """Propagator ``exp(-i H t / hbar)`` of a Hermitian generator.

    Uses the eigendecomposition ``H = V diag(w) V^dag`` so the result is
    unitary up to round-off.

    Raises:
        DimensionMismatch: ``H`` is not square.
        NonHermitianInput: ``||H - H^dag||_F > 1e-10 ||H||_F``.
    """
    H = as_matrix(H, "H")
    if H.shape[0] != H.shape[1]:
        raise DimensionMismatch(f"H must be square, got {H.shape}")
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    scale = np.linalg.norm(H)
    if np.linalg.norm(H - H.conj().T) > HERMITIAN_TOL * scale:
        raise NonHermitianInput("H is not Hermitian")
    w, V = np.linalg.eigh(hermitize(H))
    phases = np.exp(-1j * w * (t / hbar))
    return (V * phases) @ V.conj().T


def operator_norm(M, kind="spectral", psi=None):
    """Norm of an operator used to rescale measurement operators.

    Args:
        M: operator matrix.
        kind: ``"spectral"`` (largest singular value), ``"frobenius"`` or
            ``"state_dependent"``, the latter being ``sqrt(<psi|M^dag M|psi>)``
            for the supplied reference state ``psi``.
        psi: reference state, required for ``"state_dependent"``.

    Raises:
        ZeroNorm: the norm is below 1e-14.
    """
    M = as_matrix(M, "M")
    if kind == "spectral":
        value = np.linalg.norm(M, 2)
    elif kind == "frobenius":
        value = np.linalg.norm(M, "fro")
    elif kind == "state_dependent":
        if psi is None:
            raise ValueError("state_dependent norm needs a reference state")
        psi = as_vector(psi, "psi")
        if psi.size != M.shape[1]:
            raise DimensionMismatch(f"psi has dim {psi.size}, M has {M.shape[1]} columns")
        value = np.linalg.norm(M @ psi)
    else:
        raise ValueError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")
    if value < ZERO_NORM:
        raise ZeroNorm(f"{kind} norm {value:.3g} is below {ZERO_NORM}")
    return float(value)


def psd_factor(S):
    """Return ``L`` with ``L L^dag = S`` for a Hermitian PSD matrix.

    Tiny negative eigenvalues from round-off are clipped to zero. Works for
    singular ``S`` (including ``S = 0``), which Cholesky does not.
    """
    S = hermitize(S)
    w, V = np.linalg.eigh(S)
    return V * np.sqrt(np.clip(w, 0.0, None))


def solve_hermitian_pd(S, B):
    """Solve ``S X = B`` for Hermitian positive-definite ``S``.

    Raises:
        SingularSystem: smallest eigenvalue of ``S`` is not above
            ``1e-12 * ||S||_2``.
    """
    S = as_matrix(S, "S")
    B = np.asarray(B, dtype=complex)
    vector_rhs = B.ndim == 1
    B = as_matrix(B.reshape(-1, 1) if vector_rhs else B, "B")
    if S.shape[0] != S.shape[1] or B.shape[0] != S.shape[0]:
        raise DimensionMismatch(f"cannot solve S{S.shape} X = B{B.shape}")
    if not is_hermitian(S, 1e-9):
        raise SingularSystem("S is not Hermitian")
    S = hermitize(S)
    w = np.linalg.eigvalsh(S)
    top = max(abs(w[-1]), abs(w[0]))
    if top == 0.0 or w[0] <= PD_FLOOR * top:
        raise SingularSystem(f"S is not positive definite (eigenvalues in [{w[0]:.3g}, {w[-1]:.3g}])")
    X = scipy.linalg.cho_solve(scipy.linalg.cho_factor(S, lower=True), B)
    return X[:, 0] if vector_rhs else X
