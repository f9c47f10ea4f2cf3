"""Exit criteria. Each test prints one PASS/FAIL line (see the terminal summary)."""

import time

import numpy as np
import pytest

from qose import estimator, harness, io, linalg, system
from qose.errors import ConfigValidationError, IncompleteMeasurement
from qose.estimator import EstimatorConfig, batch_weighted_ls_oracle, information_form_covariance, init
from qose.system import MeasurementModel, NoiseSpec, SystemSpec

from conftest import ACCEPTANCE_LINES, cnormal, random_hermitian, taylor_expm

pytestmark = pytest.mark.acceptance


class Criterion:
    def __init__(self, number, title, budget):
        self.number, self.title, self.budget = number, title, budget
        self.start = time.perf_counter()

    def finish(self, ok, detail):
        elapsed = time.perf_counter() - self.start
        within = elapsed <= self.budget
        status = "PASS" if ok and within else "FAIL"
        line = f"[{status}] criterion {self.number}: {self.title} | {detail} | {elapsed:.2f}s (budget {self.budget:g}s)"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
        assert within, line


def random_batch(rng, d, T):
    out = []
    for _ in range(T):
        m = int(rng.integers(1, d + 1))
        out.append((cnormal(rng, m, d), cnormal(rng, m)))
    return out


def test_criterion_1_rls_matches_batch_oracle():
    c = Criterion(1, "RLS equals batch weighted LS oracle", 30)
    rng = np.random.default_rng(1)
    worst, trials = 0.0, 0
    for lam in (0.9, 0.99, 1.0):
        for delta in (1.0, 1e3):
            for _ in range(40):
                d = int(rng.integers(1, 7))
                T = int(rng.integers(1, 31))
                batch = random_batch(rng, d, T)
                x0 = cnormal(rng, d)
                cfg = EstimatorConfig(lam=lam, delta=delta)
                x_rls = estimator.run(init(cfg, d, x0), np.eye(d), batch, cfg).x_hat
                x_ls = batch_weighted_ls_oracle(batch, lam, delta, x0)
                worst = max(worst, np.linalg.norm(x_rls - x_ls) / np.linalg.norm(x_ls))
                trials += 1
    c.finish(trials >= 200 and worst <= 1e-8, f"{trials} trials, worst relative error {worst:.2e} (tol 1e-8)")


def test_criterion_2_information_form_covariance():
    c = Criterion(2, "P_T equals (I/delta + sum H^dag H)^-1", 10)
    rng = np.random.default_rng(2)
    worst = 0.0
    cases = 60
    for k in range(cases):
        d = int(rng.integers(1, 7))
        T = int(rng.integers(1, 31))
        delta = (1.0, 10.0, 1e3)[k % 3]
        batch = random_batch(rng, d, T)
        cfg = EstimatorConfig(lam=1.0, delta=delta)
        P = estimator.run(init(cfg, d), np.eye(d), batch, cfg).P
        worst = max(worst, np.linalg.norm(P - information_form_covariance(batch, delta)))
    c.finish(worst <= 1e-8, f"{cases} cases, worst Frobenius error {worst:.2e} (tol 1e-8)")


def noiseless_convergence_rates(n_seeds=100, steps=50):
    """Fraction of seeds reaching fidelity >= 1 - 1e-6 after ``steps`` steps, per dimension."""
    rates = {}
    for d in (2, 4, 8):
        ok = 0
        for seed in range(n_seeds):
            rng = np.random.default_rng(10_000 * d + seed)
            spec = SystemSpec(
                system.projective_model(d),
                system.random_state(d, rng),
                unitary=system.haar_random_unitary(d, rng),
            )
            recs = harness.run_trajectory(spec, EstimatorConfig(lam=1.0, delta=1e6), steps, seed)
            ok += recs[-1].fidelity >= 1 - 1e-6
        rates[d] = ok / n_seeds
    return rates


def test_criterion_3_noiseless_convergence():
    c = Criterion(3, "noiseless estimator converges within 50 steps", 60)
    rates = noiseless_convergence_rates()
    detail = ", ".join(f"d={d}: {r:.0%}" for d, r in rates.items())
    c.finish(all(r >= 0.95 for r in rates.values()), f"{detail} of 100 seeds at fidelity >= 1-1e-6 (need 95%)")


def test_criterion_4_quantum_kernel():
    c = Criterion(4, "unitarity, Born rule, completeness", 30)
    rng = np.random.default_rng(4)
    checks = {}

    unit = 0.0
    taylor = 0.0
    for _ in range(200):
        d = int(rng.integers(1, 9))
        H = random_hermitian(d, rng)
        t = rng.uniform(0, 1) / np.linalg.norm(H, 2)
        U = linalg.hermitian_expm(H, t)
        unit = max(unit, linalg.unitarity_error(U), linalg.unitarity_error(system.haar_random_unitary(d, rng)))
        taylor = max(taylor, np.abs(U - taylor_expm(-1j * H * t)).max())
    checks["unitarity"] = unit <= 1e-10
    checks["taylor"] = taylor <= 1e-9

    model = system.random_complete_model(4, 3, rng)
    born = max(
        abs(sum(system.outcome_probability(psi, m) for _, m in model.operators) - 1)
        for psi in (system.random_state(4, rng) for _ in range(1000))
    )
    checks["born_sum"] = born <= 1e-8

    n = 100_000
    psi = system.random_state(3, rng)
    pmodel = system.projective_model(3)
    labels = [system.sample_outcome(psi, pmodel, rng)[0] for _ in range(n)]
    freq_ok = True
    for label, M in pmodel.operators:
        p = system.outcome_probability(psi, M)
        f = labels.count(label) / n
        freq_ok &= abs(f - p) <= 3 * np.sqrt(p * (1 - p) / n)
    checks["frequencies"] = freq_ok

    P0, P1 = system.preset("P0"), system.preset("P1")
    MeasurementModel((("a0", P0), ("a1", P1)))
    try:
        MeasurementModel((("a0", P0),))
        checks["rejects_P0"] = False
    except IncompleteMeasurement:
        checks["rejects_P0"] = True
    text = io.read_config_text("noiseless_d2").replace("      - {label: a1, preset: P1}\n", "")
    try:
        io.parse_config(text)
        checks["config_rejects_P0"] = False
    except ConfigValidationError as exc:
        checks["config_rejects_P0"] = "completeness" in str(exc)

    detail = (
        f"unitarity {unit:.1e}, taylor {taylor:.1e}, born sum {born:.1e}, "
        + " ".join(f"{k}={'ok' if v else 'NO'}" for k, v in checks.items())
    )
    c.finish(all(checks.values()), detail)


def test_criterion_5_noisy_advantage():
    c = Criterion(5, "estimator beats per-step pseudo-inverse under noise", 60)
    sigma = 0.05
    parts, ok = [], True
    for d in (2, 4):
        rng = np.random.default_rng(500 + d)
        spec = SystemSpec(
            system.projective_model(d),
            system.random_state(d, rng),
            unitary=system.haar_random_unitary(d, rng),
            noise=NoiseSpec.isotropic(d, d * d, sigma_R=sigma),
        )
        s = harness.monte_carlo_compare(spec, EstimatorConfig(mode="noisy_kalman"), n_seeds=100, steps=200)
        ose = s.methods["ose"]["mean_mse"]
        raw = s.methods["raw_pseudo_inverse"]["mean_mse"]
        frac = s.paired_improvement_fraction
        ok &= ose < raw and frac >= 0.90
        parts.append(f"d={d}: ose {ose:.2e} vs raw {raw:.2e}, improved on {frac:.0%}")
    c.finish(ok, "; ".join(parts) + " (need ose < raw and >= 90%)")


def test_criterion_6_determinism_and_round_trip(tmp_path):
    c = Criterion(6, "byte-identical CSV per seed, config round-trip", 5)
    cfg = io.load_config("noisy_d2")
    spec, est = cfg.build_system(), cfg.build_estimator()
    paths = []
    for k in range(2):
        recs = harness.run_trajectory(spec, est, 200, seed=7)
        paths.append(io.write_records_csv(recs, tmp_path / f"r{k}.csv").records_csv)
    same = paths[0].read_bytes() == paths[1].read_bytes()
    names = io.bundled_configs()
    round_trip = all(io.parse_config(io.dump_config(io.load_config(n))) == io.load_config(n) for n in names)
    c.finish(same and round_trip and len(names) >= 5,
             f"csv identical={same}, round-trip identity on {len(names)} configs={round_trip}")


def test_criterion_7_subtractive_sign_breaks_convergence(monkeypatch):
    c = Criterion(7, "minus-sign correction makes criterion 3 fail", 10)
    monkeypatch.setattr(estimator, "_CORRECTION_SIGN", -1.0)
    with np.errstate(all="ignore"):
        rates = noiseless_convergence_rates(n_seeds=20)
    fails = not all(r >= 0.95 for r in rates.values())
    detail = ", ".join(f"d={d}: {r:.0%}" for d, r in rates.items())
    c.finish(fails, f"convergence rates with minus sign: {detail} (criterion 3 must fail)")
