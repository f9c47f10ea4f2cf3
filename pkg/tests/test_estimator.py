import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from qose import estimator, system
from qose.errors import BadConfig, DimensionMismatch, SingularSystem
from qose.estimator import (
    EstimatorConfig,
    batch_weighted_ls_oracle,
    correct,
    correlation_updates,
    gain,
    information_form_covariance,
    init,
    innovate,
    predict,
    step,
    update_covariance,
    wiener_solution,
)

from conftest import cnormal, random_pd

NOISELESS = EstimatorConfig(lam=1.0, delta=1.0)


def random_batch(rng, d, T, m=None):
    batch = []
    for _ in range(T):
        rows = m or int(rng.integers(1, d + 1))
        batch.append((cnormal(rng, rows, d), cnormal(rng, rows)))
    return batch


# --- init ------------------------------------------------------------------

def test_init_examples():
    s = init(EstimatorConfig(delta=100), 2)
    assert_allclose(s.P, 100 * np.eye(2))
    assert_allclose(s.x_hat, [0, 0])
    assert s.t == 0
    e1 = system.basis_state(4, 0)
    s = init(EstimatorConfig(delta=1), 4, e1)
    assert_allclose(s.P, np.eye(4))
    assert_allclose(s.x_hat, e1)


@pytest.mark.parametrize("kwargs", [{"delta": 0}, {"delta": -1}, {"lam": 0}, {"lam": 1.5}, {"mode": "ukf"}])
def test_bad_config(kwargs):
    with pytest.raises(BadConfig):
        EstimatorConfig(**kwargs)


def test_init_dimension_check():
    with pytest.raises(BadConfig):
        init(NOISELESS, 3, [1, 0])


# --- predict ---------------------------------------------------------------

def test_predict_identity_plant(rng):
    s = init(EstimatorConfig(delta=3.0), 3, cnormal(rng, 3))
    x, P = predict(s, np.eye(3), NOISELESS)
    assert_allclose(x, s.x_hat)
    assert_allclose(P, s.P)


def test_predict_unitary_keeps_identity(rng):
    U = system.haar_random_unitary(4, rng)
    _, P = predict(init(NOISELESS, 4), U, NOISELESS)
    assert np.linalg.norm(P - np.eye(4)) <= 1e-10


def test_predict_scalar_with_process_noise():
    cfg = EstimatorConfig(delta=3.0, mode="noisy_kalman", Q=[[1.0]], process_noise_mode="explicit")
    _, P = predict(init(cfg, 1), [[2.0]], cfg)
    assert P[0, 0] == pytest.approx(13.0)
    folded = EstimatorConfig(delta=3.0, mode="noisy_kalman", Q=[[1.0]], process_noise_mode="output_folded")
    _, P = predict(init(folded, 1), [[2.0]], folded)
    assert P[0, 0] == pytest.approx(12.0)


def test_predict_dimension_check():
    with pytest.raises(DimensionMismatch):
        predict(init(NOISELESS, 2), np.eye(3), NOISELESS)


# --- gain ------------------------------------------------------------------

def test_gain_scalar():
    # 1 * 2 / (0.5 + 2 * 1 * 2)
    expected = 2.0 / 4.5
    K = gain([[1.0]], [[2.0]], EstimatorConfig(lam=0.5))
    assert K[0, 0] == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.4444, abs=1e-4)


@pytest.mark.parametrize("delta", [0.1, 1.0, 1e3])
def test_gain_identity_observation(delta):
    cfg = EstimatorConfig(lam=1.0, delta=delta)
    K = gain(delta * np.eye(3), np.eye(3), cfg)
    # multiply-back: K (I + delta I) = delta I
    assert_allclose(K @ ((1 + delta) * np.eye(3)), delta * np.eye(3), atol=1e-12)
    assert_allclose(K, delta / (1 + delta) * np.eye(3), atol=1e-12)


def test_gain_zero_observation():
    assert_allclose(gain(np.eye(2), np.zeros((3, 2)), NOISELESS), np.zeros((2, 3)))
    noisy = EstimatorConfig(mode="noisy_kalman", R=np.zeros((3, 3)))
    assert_allclose(gain(np.eye(2), np.zeros((3, 2)), noisy), np.zeros((2, 3)))


def test_gain_noisy_uses_R(rng):
    P = random_pd(3, rng)
    H = cnormal(rng, 2, 3)
    R = random_pd(2, rng)
    K = gain(P, H, EstimatorConfig(mode="noisy_kalman", R=R))
    assert_allclose(K @ (R + H @ P @ H.conj().T), P @ H.conj().T, atol=1e-10)


def test_gain_output_folded_adds_HQH(rng):
    P = random_pd(3, rng)
    H = cnormal(rng, 2, 3)
    R = random_pd(2, rng)
    Q = random_pd(3, rng)
    folded = EstimatorConfig(mode="noisy_kalman", R=R, Q=Q, process_noise_mode="output_folded")
    explicit = EstimatorConfig(mode="noisy_kalman", R=R + H @ Q @ H.conj().T)
    assert_allclose(gain(P, H, folded), gain(P, H, explicit), atol=1e-12)


def test_gain_singular_innovation_falls_back_to_loading():
    # R = 0 with more outputs than states: H P H^dag has rank 2 in 4 dims
    H = system.stacked_observable(system.projective_model(2))
    cfg = EstimatorConfig(mode="noisy_kalman", R=np.zeros((4, 4)))
    K = gain(np.eye(2), H, cfg)
    assert_allclose(K @ H, np.eye(2), atol=1e-8)


# --- innovate / correct ----------------------------------------------------

def test_innovate_examples(rng):
    H = cnormal(rng, 3, 2)
    x = cnormal(rng, 2)
    assert_allclose(innovate(H @ x, H, x), 0, atol=1e-15)
    assert_allclose(innovate([1, 0], np.eye(2), [0, 0]), [1, 0])
    assert_allclose(innovate([1j], [[1]], [1]), [1j - 1])
    with pytest.raises(DimensionMismatch):
        innovate([1, 0], np.eye(3), [0, 0, 0])


def test_correct_examples():
    x = np.array([1.0, 2j])
    assert_allclose(correct(x, np.ones((2, 3)), np.zeros(3)), x)
    assert_allclose(correct(x, np.zeros((2, 3)), np.ones(3)), x)
    assert correct([1.0], [[0.5]], [0.2])[0] == pytest.approx(1.1)
    with pytest.raises(DimensionMismatch):
        correct(x, np.zeros((2, 2)), np.ones(3))


# --- covariance update -----------------------------------------------------

def test_update_covariance_examples(rng):
    P = random_pd(3, rng)
    assert_allclose(update_covariance(np.zeros((3, 2)), cnormal(rng, 2, 3), P, NOISELESS), P, atol=1e-14)
    # K H = 0.5, lam = 0.5, P- = 1 -> (1 - 0.5) * 1 / 0.5
    P1 = update_covariance([[0.5]], [[1.0]], [[1.0]], EstimatorConfig(lam=0.5))
    assert P1[0, 0] == pytest.approx(1.0)
    noisy = update_covariance([[0.5]], [[1.0]], [[1.0]], EstimatorConfig(lam=0.5, mode="noisy_kalman"))
    assert noisy[0, 0] == pytest.approx(0.5)


def test_update_covariance_information_form(rng):
    P_prev = random_pd(4, rng)
    cfg = EstimatorConfig(lam=1.0)
    K = gain(P_prev, np.eye(4), cfg)
    P = update_covariance(K, np.eye(4), P_prev, cfg)
    oracle = np.linalg.inv(np.linalg.inv(P_prev) + np.eye(4))
    assert np.linalg.norm(P - oracle) <= 1e-8


# --- step ------------------------------------------------------------------

def test_step_large_delta_single_shot(rng):
    x_true = cnormal(rng, 3)
    cfg = EstimatorConfig(lam=1.0, delta=1e6)
    s = step(init(cfg, 3), np.eye(3), np.eye(3), x_true, cfg)
    assert np.linalg.norm(s.x_hat - x_true) <= 1e-5 * np.linalg.norm(x_true)
    assert s.t == 1
    assert s.last_gain.shape == (3, 3)
    assert s.last_innovation.shape == (3,)


def test_step_self_consistent_observation_follows_plant(rng):
    U = system.haar_random_unitary(3, rng)
    H = cnormal(rng, 4, 3)
    s = init(NOISELESS, 3, cnormal(rng, 3))
    for _ in range(20):
        expected = U @ s.x_hat
        s = step(s, U, H, H @ expected, NOISELESS)
        assert_allclose(s.x_hat, expected, atol=1e-12)


def test_step_zero_observation_is_pure_prediction(rng):
    U = system.haar_random_unitary(2, rng)
    s = init(NOISELESS, 2, [1, 0])
    s2 = step(s, U, np.zeros((2, 2)), cnormal(rng, 2), NOISELESS)
    assert_allclose(s2.last_gain, 0)
    assert_allclose(s2.x_hat, U @ s.x_hat)


@pytest.mark.parametrize("d", [2, 4, 8])
def test_noiseless_convergence_closed_loop(d, rng):
    U = system.haar_random_unitary(d, rng)
    H = system.stacked_observable(system.random_complete_model(d, 2, rng))
    cfg = EstimatorConfig(lam=1.0, delta=1e6)
    x = system.random_state(d, rng)
    s = init(cfg, d, system.uniform_state(d))
    errs = []
    for _ in range(80):
        x = U @ x
        s = step(s, U, H, H @ x, cfg)
        errs.append(np.linalg.norm(s.x_hat - x))
    assert errs[49] <= 1e-6
    assert all(b <= a + 1e-9 for a, b in zip(errs[49:], errs[50:]))


def test_covariance_stays_hermitian_long_run(rng):
    d = 3
    U = system.haar_random_unitary(d, rng)
    H = cnormal(rng, 2, d)
    cfg = EstimatorConfig(lam=0.98, delta=10.0)
    s = init(cfg, d)
    for _ in range(10_000):
        s = step(s, U, H, cnormal(rng, 2), cfg)
    assert np.linalg.norm(s.P - s.P.conj().T) <= 1e-9
    assert np.linalg.eigvalsh(s.P).min() > -1e-9


# --- correlation form and batch oracle -------------------------------------

def test_wiener_examples():
    r = np.array([1 + 1j, 2])
    assert_allclose(wiener_solution(np.eye(2), r), r)
    assert_allclose(wiener_solution(2 * np.eye(2), [2, 4]), [1, 2])
    with pytest.raises(SingularSystem):
        wiener_solution(np.zeros((2, 2)), [1, 1])


def test_wiener_recovers_static_state(rng):
    x_true = cnormal(rng, 4)
    R, r = np.zeros((4, 4), complex), np.zeros(4, complex)
    for H, _ in random_batch(rng, 4, 6, m=2):
        R, r = correlation_updates(R, r, H, H @ x_true, 1.0)
    assert np.linalg.norm(wiener_solution(R, r) - x_true) <= 1e-8


def test_correlation_update_examples():
    R, _ = correlation_updates(np.zeros((2, 2)), np.zeros(2), np.eye(2), np.zeros(2), 1.0)
    assert_allclose(R, np.eye(2))
    R, r = correlation_updates(np.eye(2), np.ones(2), np.zeros((3, 2)), np.ones(3), 0.5)
    assert_allclose(R, 0.5 * np.eye(2))
    assert_allclose(r, 0.5 * np.ones(2))


def test_correlation_updates_match_direct_sum(rng):
    lam = 0.9
    batch = random_batch(rng, 3, 10)
    R, r = np.zeros((3, 3), complex), np.zeros(3, complex)
    for H, y in batch:
        R, r = correlation_updates(R, r, H, y, lam)
    R_sum = sum(lam ** (10 - k) * H.conj().T @ H for k, (H, _) in enumerate(batch, start=1))
    r_sum = sum(lam ** (10 - k) * H.conj().T @ y for k, (H, y) in enumerate(batch, start=1))
    assert np.linalg.norm(R - R_sum) <= 1e-10
    assert np.linalg.norm(r - r_sum) <= 1e-10


def test_batch_oracle_examples(rng):
    y = cnormal(rng, 3)
    assert_allclose(batch_weighted_ls_oracle([(np.eye(3), y)], 1.0, 1e12, np.zeros(3)), y, atol=1e-5)
    x0 = cnormal(rng, 3)
    zeros = [(np.zeros((2, 3)), cnormal(rng, 2)) for _ in range(5)]
    assert_allclose(batch_weighted_ls_oracle(zeros, 0.9, 10.0, x0), x0, atol=1e-14)
    with pytest.raises(ValueError):
        batch_weighted_ls_oracle([], 1.0, 1.0, x0)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    d=st.integers(1, 6),
    T=st.integers(1, 30),
    lam=st.sampled_from([0.9, 0.99, 1.0]),
    delta=st.sampled_from([1.0, 1e3]),
)
def test_rls_equals_batch_oracle(seed, d, T, lam, delta):
    rng = np.random.default_rng(seed)
    batch = random_batch(rng, d, T)
    x0 = cnormal(rng, d)
    cfg = EstimatorConfig(lam=lam, delta=delta)
    s = estimator.run(init(cfg, d, x0), np.eye(d), batch, cfg)
    oracle = batch_weighted_ls_oracle(batch, lam, delta, x0)
    assert np.linalg.norm(s.x_hat - oracle) <= 1e-8 * np.linalg.norm(oracle)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 6), T=st.integers(1, 30),
       delta=st.sampled_from([1.0, 1e3]))
def test_covariance_information_form(seed, d, T, delta):
    rng = np.random.default_rng(seed)
    batch = random_batch(rng, d, T)
    cfg = EstimatorConfig(lam=1.0, delta=delta)
    s = estimator.run(init(cfg, d), np.eye(d), batch, cfg)
    assert np.linalg.norm(s.P - information_form_covariance(batch, delta)) <= 1e-8


def test_innovation_whitening_noisy_steady_state(rng):
    d, sigma = 2, 0.05
    U = system.preset("H")
    H = system.stacked_observable(system.projective_model(d))
    Q = 1e-4 * np.eye(d)
    R = sigma**2 * np.eye(2 * d)
    cfg = EstimatorConfig(mode="noisy_kalman", delta=1.0, R=R, Q=Q)
    x = np.array([1, 0], complex)
    s = init(cfg, d, system.uniform_state(d))
    for _ in range(500):  # burn-in to steady state
        x = system.inject_state_noise(U @ x, Q, rng)
        s = step(s, U, H, system.observe(x, H, R, rng), cfg)
    n = 10_000
    total = np.zeros(2 * d, complex)
    for _ in range(n):
        x = system.inject_state_noise(U @ x, Q, rng)
        s = step(s, U, H, system.observe(x, H, R, rng), cfg)
        total += s.last_innovation
    _, P_minus = predict(s, U, cfg)
    S = H @ P_minus @ H.conj().T + R
    assert np.linalg.norm(total / n) <= 3 * np.sqrt(np.trace(S).real / n)


def test_subtractive_correction_variant_diverges(monkeypatch, rng):
    monkeypatch.setattr(estimator, "_CORRECTION_SIGN", -1.0)
    x_true = cnormal(rng, 2)
    cfg = EstimatorConfig(lam=1.0, delta=1e6)
    s = step(init(cfg, 2), np.eye(2), np.eye(2), x_true, cfg)
    assert np.linalg.norm(s.x_hat - x_true) > 0.5 * np.linalg.norm(x_true)
