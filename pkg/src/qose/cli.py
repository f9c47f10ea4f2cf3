"""Command-line front end.

Exit codes: 0 success, 1 invalid config or arguments, 2 runtime failure.
Failures print one JSON line to stderr, e.g.
``{"error": "ConfigValidationError", "field": "estimator.lambda", "message": "..."}``.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, io, system
from .errors import ConfigParseError, ConfigValidationError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _report(exc, field=None):
    doc = {"error": type(exc).__name__}
    if field is not None:
        doc["field"] = field
    doc["message"] = str(exc).replace("\n", " ")
    print(json.dumps(doc), file=sys.stderr)


def build_parser():
    p = _Parser(prog="qose", description="Quantum state estimation experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def add_config(sp):
        sp.add_argument("--config", required=True, help="config path or bundled config name")

    sp = sub.add_parser("validate", help="parse and validate a config")
    add_config(sp)

    sp = sub.add_parser("simulate", help="evolve and observe the system, no estimator")
    add_config(sp)
    sp.add_argument("--out", help="CSV of true states and observations")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--steps", type=int)

    sp = sub.add_parser("estimate", help="run the closed-loop estimator and write per-step records")
    add_config(sp)
    sp.add_argument("--out", help="records CSV")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--log-states", action="store_true", help="append full state vectors to the CSV")

    sp = sub.add_parser("compare", help="paired Monte Carlo study against the pseudo-inverse baseline")
    add_config(sp)
    sp.add_argument("--out", help="summary JSON")
    sp.add_argument("--seeds", type=int, help="number of seeds")
    sp.add_argument("--seed", type=int, help="seed base")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--workers", type=int)

    sp = sub.add_parser("gen-system", help="write a config with a Haar-random unitary and projective measurement")
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sigma-r", type=float, default=0.0)
    sp.add_argument("--out", required=True, help="config file to write")
    return p


def _seed(args, cfg):
    return cfg.run["seed_base"] if args.seed is None else args.seed


def _steps(args, cfg):
    return cfg.run["steps"] if args.steps is None else args.steps


def _output(args, cfg, key, default):
    if args.out:
        return Path(args.out)
    return Path(cfg.run.get(key, default))


def _cmd_validate(args, cfg):
    print(f"ok: {args.config}")


def _cmd_simulate(args, cfg):
    spec = cfg.build_system()
    states, obs = harness.simulate(spec, _steps(args, cfg), _seed(args, cfg))
    path = io.write_states_csv(states, obs, _output(args, cfg, "records_csv", "simulation.csv"))
    print(path)


def _cmd_estimate(args, cfg):
    spec = cfg.build_system()
    est = cfg.build_estimator()
    steps, seed = _steps(args, cfg), _seed(args, cfg)
    out = _output(args, cfg, "records_csv", "records.csv")
    log_states = args.log_states or cfg.run["log_states"]
    if spec.measurement.mode == "stacked":
        records = harness.run_trajectory(spec, est, steps, seed, x0=cfg.x0())
        print(io.write_records_csv(records, out, log_states).records_csv)
        return
    for label, records in harness.run_battery(spec, est, steps, seed, x0=cfg.x0()).items():
        path = out.with_name(f"{out.stem}.{label}{out.suffix}")
        print(io.write_records_csv(records, path, log_states).records_csv)


def _cmd_compare(args, cfg):
    spec = cfg.build_system()
    n_seeds = cfg.run["n_seeds"] if args.seeds is None else args.seeds
    workers = cfg.run["workers"] if args.workers is None else args.workers
    summary = harness.monte_carlo_compare(
        spec, cfg.build_estimator(), n_seeds, _steps(args, cfg), _seed(args, cfg), workers
    )
    summary.config = cfg.to_dict()
    path = _output(args, cfg, "summary", "summary.json")
    io.write_summary(summary, path)
    ose, raw = summary.methods["ose"], summary.methods["raw_pseudo_inverse"]
    print(f"{path}: ose mean_mse={ose['mean_mse']:.6g} raw mean_mse={raw['mean_mse']:.6g}")


def generate_system_config(dim, seed, sigma_r=0.0):
    """Config document with a Haar-random unitary and a computational-basis projective model."""
    rng = np.random.default_rng(seed)
    U = system.haar_random_unitary(dim, rng)
    pairs = lambda a: [[float(z.real), float(z.imag)] for z in a]  # noqa: E731
    ops = []
    for k in range(dim):
        P = np.zeros((dim, dim))
        P[k, k] = 1.0
        ops.append({"label": f"a{k}", "matrix": [pairs(row) for row in P.astype(complex)]})
    doc = {
        "schema_version": io.SCHEMA_VERSION,
        "system": {
            "dim": dim,
            "dynamics": {"unitary": [pairs(row) for row in U]},
            "measurement": {"operators": ops, "norm_kind": "spectral", "mode": "stacked"},
            "noise": {"sigma_Q": 0.0, "sigma_R": float(sigma_r)},
            "initial_state": pairs(system.basis_state(dim, 0)),
        },
        "estimator": {"lambda": 1.0, "delta": 1.0e6, "mode": "noisy_kalman" if sigma_r else "noiseless_rls"},
        "run": {"steps": 200, "n_seeds": 100, "seed_base": 0},
    }
    return io.config_from_dict(doc)


def _gen_system(args):
    if args.dim < 2:
        raise _UsageError("--dim must be >= 2")
    cfg = generate_system_config(args.dim, args.seed, args.sigma_r)
    print(io.atomic_write_text(args.out, io.dump_config(cfg)))


COMMANDS = {
    "validate": _cmd_validate,
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "compare": _cmd_compare,
}


def run_cli(argv=None):
    """Run the CLI and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        _report(exc)
        return EXIT_INVALID
    try:
        if args.command == "gen-system":
            _gen_system(args)
            return EXIT_OK
        cfg = io.load_config(args.config)
    except ConfigValidationError as exc:
        _report(exc, exc.field)
        return EXIT_INVALID
    except (ConfigParseError, FileNotFoundError, _UsageError) as exc:
        _report(exc)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        _report(exc)
        return EXIT_RUNTIME
    try:
        COMMANDS[args.command](args, cfg)
    except Exception as exc:  # noqa: BLE001
        _report(exc)
        return EXIT_RUNTIME
    return EXIT_OK


def main():
    sys.exit(run_cli())
