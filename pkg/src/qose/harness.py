"""Closed-loop simulation of system + estimator, metrics and Monte Carlo studies.

Seeds: run ``i`` of a study uses ``numpy.random.default_rng(seed_base + i)``.
Within one run the same observation feeds both the estimator and the
memoryless pseudo-inverse baseline, so the two methods are always compared
on identical noise.
"""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import estimator, system
from .errors import InsufficientRuns, RankDeficient, ZeroVector
from .linalg import as_matrix, as_vector

STEADY_STATE_FRACTION = 0.25
TIE_TOL = 1e-12
METHODS = ("ose", "raw_pseudo_inverse")


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Everything logged for one step of one estimator channel."""

    t: int
    psi_true: np.ndarray
    y_observed: np.ndarray
    psi_hat: np.ndarray
    psi_prior: np.ndarray
    apriori_err: float
    aposteriori_err: float
    fidelity: float
    gain_fro: float
    trace_P: float
    innovation: np.ndarray
    residual: np.ndarray
    psi_raw: np.ndarray = None
    raw_err: float = math.nan

    def same_as(self, other):
        """Exact, field-by-field equality."""
        for name in self.__dataclass_fields__:
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if a is None or b is None or not np.array_equal(a, b):
                    return False
            elif not (a == b or (isinstance(a, float) and math.isnan(a) and math.isnan(b))):
                return False
        return True


def fidelity(psi, psi_hat):
    """Phase-invariant overlap ``|<psi|psi_hat>|^2 / (||psi||^2 ||psi_hat||^2)``."""
    psi = as_vector(psi, "psi")
    psi_hat = as_vector(psi_hat, "psi_hat")
    n1 = np.vdot(psi, psi).real
    n2 = np.vdot(psi_hat, psi_hat).real
    if n1 == 0.0 or n2 == 0.0:
        raise ZeroVector("fidelity is undefined for a zero vector")
    return float(abs(np.vdot(psi, psi_hat)) ** 2 / (n1 * n2))


def pseudo_inverse_baseline(y, H):
    """Memoryless least-squares estimate ``H^+ y``.

    Raises:
        RankDeficient: ``H`` does not have full column rank
            (singular values below ``1e-10 * s_max``).
    """
    H = as_matrix(H, "H")
    y = as_vector(y, "y")
    U, s, Vh = np.linalg.svd(H, full_matrices=False)
    if H.shape[0] < H.shape[1] or s[-1] <= 1e-10 * s[0]:
        raise RankDeficient(f"H of shape {H.shape} is not full column rank")
    return Vh.conj().T @ ((U.conj().T @ y) / s)


def estimator_config_for(spec, config):
    """Fill a noisy-mode config's missing ``R``/``Q`` from the system noise."""
    if not config.noisy:
        return config
    changes = {}
    if config.R is None:
        changes["R"] = spec.R()
    if config.Q is None and spec.noise.Q is not None:
        changes["Q"] = spec.noise.Q
    return replace(config, **changes) if changes else config


class ClosedLoop:
    """Resumable closed loop: the device evolves and is observed, estimators follow.

    In ``stacked`` mode there is one channel, ``"stacked"``, observing all
    normalized operators at once. In ``battery`` mode each measurement label
    gets its own channel and estimator; their estimates are not fused.

    Calling :meth:`advance` repeatedly gives exactly the same records as a
    single call with the summed step count.
    """

    def __init__(self, spec, config, seed, x0=None, baseline=True):
        self.spec = spec
        self.config = estimator_config_for(spec, config)
        self.rng = np.random.default_rng(seed)
        self.psi = spec.initial_state.copy()
        self.baseline = baseline
        self.t = 0
        d = spec.dim
        x0 = system.uniform_state(d) if x0 is None else as_vector(x0, "x0")
        H = spec.observable
        self.H = H
        self.R = spec.R() if spec.noise.R is not None else None
        self.channels = {}
        if spec.measurement.mode == "stacked":
            self.channels["stacked"] = (slice(0, H.shape[0]), self.config)
        else:
            for k, label in enumerate(spec.measurement.labels):
                rows = slice(k * d, (k + 1) * d)
                cfg = self.config
                if cfg.noisy and cfg.R is not None:
                    cfg = replace(cfg, R=cfg.R[rows, rows])
                self.channels[label] = (rows, cfg)
        self.states = {label: estimator.init(cfg, d, x0) for label, (_, cfg) in self.channels.items()}
        self.records = {label: [] for label in self.channels}

    def _evolve_truth(self):
        psi = self.spec.propagator @ self.psi
        Q = self.spec.noise.Q
        if Q is not None and np.any(Q):
            psi = system.inject_state_noise(
                psi, Q, self.rng, renormalize=self.spec.noise.renormalize_after_state_noise
            )
        return psi

    def advance(self, steps):
        """Run ``steps`` more steps; return the new records per channel."""
        U = self.spec.propagator
        new = {label: [] for label in self.channels}
        for _ in range(steps):
            self.t += 1
            self.psi = self._evolve_truth()
            y_all = system.observe(self.psi, self.H, self.R, self.rng)
            for label, (rows, cfg) in self.channels.items():
                H, y = self.H[rows], y_all[rows]
                st = estimator.step(self.states[label], U, H, y, cfg)
                self.states[label] = st
                raw = None
                raw_err = math.nan
                if self.baseline and label == "stacked":
                    raw = pseudo_inverse_baseline(y, H)
                    raw_err = float(np.linalg.norm(raw - self.psi))
                rec = TrajectoryRecord(
                    t=self.t,
                    psi_true=self.psi.copy(),
                    y_observed=y,
                    psi_hat=st.x_hat,
                    psi_prior=st.x_prior,
                    apriori_err=float(np.linalg.norm(st.x_prior - self.psi)),
                    aposteriori_err=float(np.linalg.norm(st.x_hat - self.psi)),
                    fidelity=fidelity(self.psi, st.x_hat),
                    gain_fro=float(np.linalg.norm(st.last_gain)),
                    trace_P=float(np.real(np.trace(st.P))),
                    innovation=st.last_innovation,
                    residual=y - H @ st.x_hat,
                    psi_raw=raw,
                    raw_err=raw_err,
                )
                new[label].append(rec)
                self.records[label].append(rec)
        return new


def run_trajectory(spec, config, steps, seed, x0=None):
    """Closed-loop run of the stacked estimator; one record per step.

    For a ``battery`` measurement model use :func:`run_battery`.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if spec.measurement.mode != "stacked":
        raise ValueError("run_trajectory needs a stacked measurement model; use run_battery")
    return ClosedLoop(spec, config, seed, x0).advance(steps)["stacked"]


def run_battery(spec, config, steps, seed, x0=None):
    """Closed-loop run with one estimator per measurement label."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if spec.measurement.mode != "battery":
        spec = replace(spec, measurement=replace(spec.measurement, mode="battery"))
    return ClosedLoop(spec, config, seed, x0, baseline=False).advance(steps)


def simulate(spec, steps, seed):
    """True states and observations only, no estimator. Returns ``(states, observations)``."""
    loop = ClosedLoop(spec, estimator.EstimatorConfig(), seed, baseline=False)
    states, observations = [], []
    for _ in range(steps):
        loop.psi = loop._evolve_truth()
        states.append(loop.psi.copy())
        observations.append(system.observe(loop.psi, loop.H, loop.R, loop.rng))
    return np.array(states), np.array(observations)


def error_covariance_estimate(runs, which="apriori", t=-1):
    """Monte Carlo ``E[eps eps^dag]`` across runs at step index ``t``.

    ``apriori`` uses ``y - H x-``; ``aposteriori`` uses ``y - H x_hat``.
    """
    runs = list(runs)
    if len(runs) < 2:
        raise InsufficientRuns(f"need at least 2 runs, got {len(runs)}")
    if len({len(r) for r in runs}) != 1:
        raise InsufficientRuns("runs must have equal lengths")
    attr = {"apriori": "innovation", "aposteriori": "residual"}[which]
    E = np.array([getattr(r[t], attr) for r in runs])
    C = E.T @ E.conj() / len(runs)
    return 0.5 * (C + C.conj().T)


def steady_state_window(steps):
    return max(1, math.ceil(STEADY_STATE_FRACTION * steps))


def trajectory_mse(records, attr="aposteriori_err"):
    """Mean squared error over the last 25% of the records."""
    tail = records[-steady_state_window(len(records)):]
    return float(np.mean([getattr(r, attr) ** 2 for r in tail]))


@dataclass
class RunSummary:
    n_seeds: int
    steps: int
    methods: dict
    per_seed: dict
    paired_improvement_fraction: float
    degenerate_tie: bool
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def to_dict(self):
        return {
            "n_seeds": self.n_seeds,
            "steps": self.steps,
            "methods": self.methods,
            "per_seed": self.per_seed,
            "paired_improvement_fraction": self.paired_improvement_fraction,
            "degenerate_tie": self.degenerate_tie,
            "config": self.config,
            "wall_time": self.wall_time,
        }


def _seed_run(args):
    spec, config, steps, seed = args
    recs = run_trajectory(spec, config, steps, seed)
    raw_fid = fidelity(recs[-1].psi_true, recs[-1].psi_raw)
    return (
        trajectory_mse(recs),
        trajectory_mse(recs, "raw_err"),
        recs[-1].fidelity,
        raw_fid,
    )


def summarize(per_seed_rows, steps):
    """Aggregate per-seed ``(ose_mse, raw_mse, ose_fid, raw_fid)`` rows."""
    rows = np.array(per_seed_rows, dtype=float)
    n = rows.shape[0]
    methods = {}
    per_seed = {}
    for k, name in enumerate(METHODS):
        mse = rows[:, k]
        fid = rows[:, k + 2]
        methods[name] = {
            "mean_mse": float(np.mean(mse)),
            "std_mse": float(np.std(mse, ddof=1)) if n > 1 else 0.0,
            "mean_final_fidelity": float(np.mean(fid)),
        }
        per_seed[name] = {"mse": mse.tolist(), "final_fidelity": fid.tolist()}
    improvement = rows[:, 1] - rows[:, 0]
    tie = bool(np.all(rows[:, :2] <= TIE_TOL))
    return RunSummary(
        n_seeds=n,
        steps=steps,
        methods=methods,
        per_seed=per_seed,
        paired_improvement_fraction=float(np.mean(improvement > 0)),
        degenerate_tie=tie,
    )


def monte_carlo_compare(spec, config, n_seeds, steps, seed_base=0, workers=1):
    """Paired comparison of the estimator against the pseudo-inverse baseline.

    Seed ``seed_base + i`` drives run ``i``; results are folded in run order
    whatever ``workers`` is.
    """
    if n_seeds < 2:
        raise InsufficientRuns(f"n_seeds must be >= 2, got {n_seeds}")
    if spec.measurement.mode != "stacked":
        raise ValueError("monte_carlo_compare needs a stacked measurement model")
    start = time.perf_counter()
    jobs = [(spec, config, steps, seed_base + i) for i in range(n_seeds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_seed_run, jobs))
    else:
        rows = [_seed_run(job) for job in jobs]
    summary = summarize(rows, steps)
    summary.config = {
        "dim": spec.dim,
        "lambda": config.lam,
        "delta": config.delta,
        "mode": config.mode,
        "process_noise_mode": config.process_noise_mode,
        "seed_base": seed_base,
    }
    summary.wall_time = time.perf_counter() - start
    return summary
