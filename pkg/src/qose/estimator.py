"""Complex recursive least squares and the optimal state estimator built on it.

The estimator tracks a state ``x`` that evolves as ``x_t = A x_{t-1}`` and is
seen through ``y_t = H x_t (+ noise)``. Each :func:`step` runs the
predictor-corrector recursion

    x-  = A x                      P-  = A P A^dag (+ Q)
    K   = P- H^dag (W + H P- H^dag)^-1
    eps = y - H x-
    x   = x- + K eps
    P   = c (I - K H) P-

with ``W = lam I, c = 1/lam`` in ``noiseless_rls`` mode and ``W = R, c = 1``
in ``noisy_kalman`` mode.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import linalg
from .errors import (
    BadConfig,
    DimensionMismatch,
    SingularInnovationCovariance,
    SingularSystem,
)
from .linalg import as_matrix, as_vector

log = logging.getLogger(__name__)

ESTIMATOR_MODES = ("noiseless_rls", "noisy_kalman")

# Sign of the innovation correction. Only tests flip this, to show that the
# subtractive variant does not converge.
_CORRECTION_SIGN = 1.0

# relative diagonal loading used once when the innovation covariance is singular
_LOADING = 1e-10


@dataclass(frozen=True, eq=False)
class EstimatorConfig:
    """Estimator hyper-parameters.

    Attributes:
        lam: forgetting factor in (0, 1].
        delta: initial covariance scale, ``P_0 = delta I``.
        mode: ``"noiseless_rls"`` or ``"noisy_kalman"``.
        R: measurement-noise covariance (noisy mode).
        Q: state-noise covariance (noisy mode).
        process_noise_mode: ``"explicit"`` adds ``Q`` in the time update;
            ``"output_folded"`` instead folds it into the measurement noise
            as ``R + H Q H^dag``.
    """

    lam: float = 1.0
    delta: float = 1e6
    mode: str = "noiseless_rls"
    R: Optional[np.ndarray] = None
    Q: Optional[np.ndarray] = None
    process_noise_mode: str = "explicit"

    def __post_init__(self):
        if not (0.0 < self.lam <= 1.0):
            raise BadConfig(f"lam must be in (0, 1], got {self.lam!r}")
        if not (self.delta > 0.0 and np.isfinite(self.delta)):
            raise BadConfig(f"delta must be positive and finite, got {self.delta!r}")
        if self.mode not in ESTIMATOR_MODES:
            raise BadConfig(f"unknown estimator mode {self.mode!r}")
        if self.process_noise_mode not in ("explicit", "output_folded"):
            raise BadConfig(f"unknown process_noise_mode {self.process_noise_mode!r}")
        for name in ("R", "Q"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, as_matrix(value, name))

    @property
    def noisy(self):
        return self.mode == "noisy_kalman"


@dataclass(frozen=True, eq=False)
class EstimatorState:
    """Estimate after ``t`` steps.

    ``x_prior`` is the a-priori estimate of the most recent step (equal to
    ``x_hat`` before any step).
    """

    x_hat: np.ndarray
    P: np.ndarray
    t: int = 0
    last_gain: Optional[np.ndarray] = None
    last_innovation: Optional[np.ndarray] = None
    x_prior: Optional[np.ndarray] = None

    @property
    def dim(self):
        return self.x_hat.size


def init(config, d, x0=None):
    """Initial state ``x_hat = x0`` (zeros by default), ``P = delta I``."""
    if d < 1:
        raise BadConfig("d must be >= 1")
    x0 = np.zeros(d, complex) if x0 is None else as_vector(x0, "x0")
    if x0.size != d:
        raise BadConfig(f"x0 has dim {x0.size}, expected {d}")
    return EstimatorState(x_hat=x0, P=config.delta * np.eye(d, dtype=complex), x_prior=x0)


def predict(state, A, config):
    """Time update ``(A x, A P A^dag [+ Q])``."""
    A = as_matrix(A, "A")
    d = state.dim
    if A.shape != (d, d):
        raise DimensionMismatch(f"A has shape {A.shape}, expected {(d, d)}")
    x_minus = A @ state.x_hat
    P_minus = A @ state.P @ A.conj().T
    if config.noisy and config.process_noise_mode == "explicit" and config.Q is not None:
        P_minus = P_minus + config.Q
    return x_minus, linalg.hermitize(P_minus)


def _measurement_weight(H, config):
    m = H.shape[0]
    if not config.noisy:
        return config.lam * np.eye(m)
    R = np.zeros((m, m), complex) if config.R is None else config.R
    if R.shape != (m, m):
        raise DimensionMismatch(f"R has shape {R.shape}, observable has {m} rows")
    if config.process_noise_mode == "output_folded" and config.Q is not None:
        R = R + H @ config.Q @ H.conj().T
    return R


def gain(P_minus, H, config):
    """Gain ``P- H^dag (W + H P- H^dag)^-1`` with ``W = lam I`` or ``R``.

    If the bracketed matrix is singular (e.g. noisy mode with ``R = 0`` and
    more outputs than states) it is loaded once with
    ``1e-10 * tr / m`` on the diagonal before giving up.
    """
    P_minus = as_matrix(P_minus, "P_minus")
    H = as_matrix(H, "H")
    d = P_minus.shape[0]
    if H.shape[1] != d:
        raise DimensionMismatch(f"H has {H.shape[1]} columns, P has dim {d}")
    if not np.any(H):
        return np.zeros((d, H.shape[0]), complex)
    PHt = P_minus @ H.conj().T
    S = linalg.hermitize(_measurement_weight(H, config) + H @ PHt)
    try:
        # K = PHt S^-1  <=>  S K^dag = PHt^dag  (S Hermitian)
        return linalg.solve_hermitian_pd(S, PHt.conj().T).conj().T
    except SingularSystem:
        m = S.shape[0]
        load = _LOADING * max(np.real(np.trace(S)), 0.0) / m
        log.warning("innovation covariance is singular, loading diagonal with %.3g", load)
        try:
            return linalg.solve_hermitian_pd(S + load * np.eye(m), PHt.conj().T).conj().T
        except SingularSystem as exc:
            raise SingularInnovationCovariance(str(exc)) from exc


def innovate(y, H, x_minus):
    """A-priori error ``y - H x-``."""
    H = as_matrix(H, "H")
    y = as_vector(y, "y")
    x_minus = as_vector(x_minus, "x_minus")
    if H.shape != (y.size, x_minus.size):
        raise DimensionMismatch(f"H {H.shape} incompatible with y ({y.size}) and x ({x_minus.size})")
    return y - H @ x_minus


def correct(x_minus, K, eps):
    """Measurement update ``x- + K eps``."""
    K = as_matrix(K, "K")
    x_minus = as_vector(x_minus, "x_minus")
    eps = as_vector(eps, "eps")
    if K.shape != (x_minus.size, eps.size):
        raise DimensionMismatch(f"K {K.shape} incompatible with x ({x_minus.size}) and eps ({eps.size})")
    return x_minus + _CORRECTION_SIGN * (K @ eps)


def update_covariance(K, H, P_minus, config):
    """Covariance update ``c (I - K H) P-``, re-Hermitianized."""
    K = as_matrix(K, "K")
    H = as_matrix(H, "H")
    P_minus = as_matrix(P_minus, "P_minus")
    d = P_minus.shape[0]
    if K.shape != (d, H.shape[0]) or H.shape[1] != d:
        raise DimensionMismatch(f"K {K.shape}, H {H.shape}, P {P_minus.shape} are inconsistent")
    P = (np.eye(d) - K @ H) @ P_minus
    if not config.noisy:
        P = P / config.lam
    return linalg.hermitize(P)


def step(state, A, H, y, config):
    """One full predict / gain / innovate / correct / covariance cycle."""
    x_minus, P_minus = predict(state, A, config)
    K = gain(P_minus, H, config)
    eps = innovate(y, H, x_minus)
    x_hat = correct(x_minus, K, eps)
    P = update_covariance(K, H, P_minus, config)
    return replace(
        state, x_hat=x_hat, P=P, t=state.t + 1, last_gain=K, last_innovation=eps, x_prior=x_minus
    )


def run(state, A, steps, config):
    """Iterate :func:`step` over a sequence of ``(H, y)`` pairs."""
    for H, y in steps:
        state = step(state, A, H, y, config)
    return state


# ---------------------------------------------------------------------------
# correlation form, used as independent checks of the recursion

def wiener_solution(R_MM, r_MY):
    """Normal-equation solution ``R_MM^-1 r_MY``."""
    return linalg.solve_hermitian_pd(R_MM, as_vector(r_MY, "r_MY"))


def correlation_updates(R_prev, r_prev, H, y, lam):
    """Exponentially windowed ``(lam R + H^dag H, lam r + H^dag y)``."""
    R_prev = as_matrix(R_prev, "R_prev")
    r_prev = as_vector(r_prev, "r_prev")
    H = as_matrix(H, "H")
    y = as_vector(y, "y")
    if R_prev.shape != (H.shape[1], H.shape[1]) or r_prev.size != H.shape[1] or y.size != H.shape[0]:
        raise DimensionMismatch("correlation update operands are inconsistent")
    Hd = H.conj().T
    return lam * R_prev + Hd @ H, lam * r_prev + Hd @ y


def batch_weighted_ls_oracle(batch, lam, delta, x0):
    """Direct solution of the regularized exponentially weighted LS problem.

    Minimizes ``sum_k lam^(T-k) ||y_k - H_k x||^2 + lam^T / delta ||x - x0||^2``
    over ``x`` by assembling the normal equations and doing one dense solve.
    For ``A = I`` this is what the recursion computes after ``T`` steps.

    Args:
        batch: non-empty sequence of ``(H_k, y_k)`` pairs, ``k = 1..T``.
    """
    batch = list(batch)
    if not batch:
        raise ValueError("batch must be non-empty")
    x0 = as_vector(x0, "x0")
    d = x0.size
    T = len(batch)
    prior = lam**T / delta
    N = prior * np.eye(d, dtype=complex)
    b = prior * x0
    for k, (H, y) in enumerate(batch, start=1):
        H = as_matrix(H, "H")
        y = as_vector(y, "y")
        if H.shape != (y.size, d):
            raise DimensionMismatch(f"step {k}: H {H.shape} incompatible with y ({y.size}), d = {d}")
        w = lam ** (T - k)
        N += w * (H.conj().T @ H)
        b += w * (H.conj().T @ y)
    if np.linalg.cond(N) > 1e14:
        raise SingularSystem("regularized normal matrix is singular")
    return np.linalg.solve(N, b)


def information_form_covariance(batch, delta):
    """``(I / delta + sum_k H_k^dag H_k)^-1`` by direct inversion."""
    batch = list(batch)
    d = as_matrix(batch[0][0]).shape[1]
    N = np.eye(d, dtype=complex) / delta
    for H, _ in batch:
        H = as_matrix(H)
        N += H.conj().T @ H
    return np.linalg.inv(N)
