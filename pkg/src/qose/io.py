"""Experiment config documents and result files.

Configs are YAML (JSON is accepted too, being a subset). Complex numbers are
``[re, im]`` pairs, matrices are lists of rows of such pairs. A parsed config
keeps the normalized document, so ``parse_config(dump_config(cfg)) == cfg``.

Example::

    schema_version: 1
    system:
      dim: 2
      dynamics: {preset: H}
      measurement:
        operators:
          - {label: a0, preset: P0}
          - {label: a1, preset: P1}
        norm_kind: spectral
        mode: stacked
      noise: {sigma_Q: 0.0, sigma_R: 0.05}
      initial_state: [[1.0, 0.0], [0.0, 0.0]]
    estimator: {lambda: 1.0, delta: 1.0e+6, mode: noisy_kalman}
    run: {steps: 200, n_seeds: 100, seed_base: 0}
"""

import json
import math
import os
import tempfile
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import linalg, system
from .errors import ConfigParseError, ConfigValidationError, QoseError
from .estimator import ESTIMATOR_MODES, EstimatorConfig

SCHEMA_VERSION = 1
CSV_COLUMNS = ("t", "apriori_err", "aposteriori_err", "fidelity", "gain_fro", "trace_P")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, normalized experiment document."""

    schema_version: int
    system: dict
    estimator: dict
    run: dict

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "system": self.system,
            "estimator": self.estimator,
            "run": self.run,
        }

    def build_system(self):
        return _build_system(self.system)

    def build_estimator(self):
        est = self.estimator
        return EstimatorConfig(
            lam=est["lambda"],
            delta=est["delta"],
            mode=est["mode"],
            process_noise_mode=est["process_noise_mode"],
        )

    def x0(self):
        value = self.estimator["x0"]
        return None if value == "uniform" else _complex_vector(value)


@dataclass(frozen=True)
class ResultFiles:
    records_csv: Path = None
    summary: Path = None


# ---------------------------------------------------------------------------
# field-level parsing

def _fail(path, reason):
    raise ConfigValidationError(path, reason)


def _mapping(value, path, allowed, required=()):
    if not isinstance(value, dict):
        _fail(path, "must be a mapping")
    for key in value:
        if key not in allowed:
            _fail(f"{path}.{key}", f"unknown field (allowed: {', '.join(allowed)})")
    for key in required:
        if key not in value:
            _fail(f"{path}.{key}", "is required")
    return value


def _number(value, path):
    # YAML 1.1 reads "1e6" (no dot) as a string
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            _fail(path, f"expected a number, got {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        _fail(path, "must be finite")
    return value


def _integer(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        _fail(path, f"must be >= {minimum}")
    return value


def _choice(value, path, options):
    if value not in options:
        _fail(path, f"must be one of {list(options)}, got {value!r}")
    return value


def _complex(value, path):
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            _fail(path, "complex numbers are [re, im] pairs")
        return [_number(value[0], f"{path}[0]"), _number(value[1], f"{path}[1]")]
    return [_number(value, path), 0.0]


def _vector(value, path, dim):
    if not isinstance(value, list) or len(value) != dim:
        _fail(path, f"expected a list of {dim} complex amplitudes")
    return [_complex(v, f"{path}[{k}]") for k, v in enumerate(value)]


def _matrix(value, path, rows, cols=None):
    cols = rows if cols is None else cols
    if not isinstance(value, list) or len(value) != rows:
        _fail(path, f"expected {rows} rows")
    out = []
    for i, row in enumerate(value):
        if not isinstance(row, list) or len(row) != cols:
            _fail(f"{path}[{i}]", f"expected {cols} entries")
        out.append([_complex(v, f"{path}[{i}][{j}]") for j, v in enumerate(row)])
    return out


def _complex_vector(pairs):
    return np.array([complex(re, im) for re, im in pairs])


def _complex_matrix(rows):
    return np.array([[complex(re, im) for re, im in row] for row in rows])


def _operator_source(value, path, dim):
    """One of ``{preset: name}``, ``{kron: [names]}``, ``{matrix: rows}``."""
    keys = [k for k in ("preset", "kron", "matrix") if k in value]
    if len(keys) != 1:
        _fail(path, "give exactly one of preset, kron, matrix")
    key = keys[0]
    if key == "preset":
        name = value["preset"]
        if name not in system.PRESETS:
            _fail(f"{path}.preset", f"unknown preset {name!r}")
        out = {"preset": name}
    elif key == "kron":
        names = value["kron"]
        if not isinstance(names, list) or not names:
            _fail(f"{path}.kron", "must be a non-empty list of preset names")
        for k, name in enumerate(names):
            if name not in system.PRESETS:
                _fail(f"{path}.kron[{k}]", f"unknown preset {name!r}")
        out = {"kron": list(names)}
    else:
        out = {"matrix": _matrix(value["matrix"], f"{path}.matrix", dim)}
    if _source_matrix(out).shape != (dim, dim):
        _fail(path, f"operator is not {dim}x{dim}")
    return out


def _source_matrix(source):
    if "preset" in source:
        return system.preset(source["preset"])
    if "kron" in source:
        return system.kron(source["kron"])
    return _complex_matrix(source["matrix"])


# ---------------------------------------------------------------------------
# sections

def _parse_dynamics(value, dim):
    path = "system.dynamics"
    _mapping(value, path, ("preset", "kron", "unitary", "hamiltonian", "dt", "hbar"))
    if "hamiltonian" in value:
        if any(k in value for k in ("preset", "kron", "unitary")):
            _fail(path, "give either a unitary (preset/kron/unitary) or a hamiltonian")
        ham = value["hamiltonian"]
        if isinstance(ham, dict):
            _mapping(ham, f"{path}.hamiltonian", ("preset", "kron", "matrix"))
            ham_src = _operator_source(ham, f"{path}.hamiltonian", dim)
        else:
            ham_src = {"matrix": _matrix(ham, f"{path}.hamiltonian", dim)}
        out = {
            "hamiltonian": ham_src,
            "dt": _number(value.get("dt", 1.0), f"{path}.dt"),
            "hbar": _number(value.get("hbar", 1.0), f"{path}.hbar"),
        }
        if out["dt"] <= 0:
            _fail(f"{path}.dt", "must be positive")
        if out["hbar"] <= 0:
            _fail(f"{path}.hbar", "must be positive")
        if not linalg.is_hermitian(_source_matrix(ham_src)):
            _fail(f"{path}.hamiltonian", "must be Hermitian")
        return out
    for k in ("dt", "hbar"):
        if k in value:
            _fail(f"{path}.{k}", "only meaningful with a hamiltonian")
    src = {k: value[k] for k in ("preset", "kron") if k in value}
    if "unitary" in value:
        src["matrix"] = value["unitary"]
    out = _operator_source(src, path, dim)
    if "matrix" in out:
        out = {"unitary": out["matrix"]}
    if linalg.unitarity_error(_source_matrix(_unitary_source(out))) > system.SYSTEM_UNITARITY_TOL:
        _fail(path, "dynamics must be unitary (||U^dag U - I||_F <= 1e-8)")
    return out


def _unitary_source(dyn):
    return {"matrix": dyn["unitary"]} if "unitary" in dyn else dyn


def _parse_measurement(value, dim):
    path = "system.measurement"
    _mapping(value, path, ("operators", "norm_kind", "mode", "reference_state"), ("operators",))
    ops = value["operators"]
    if not isinstance(ops, list) or not ops:
        _fail(f"{path}.operators", "must be a non-empty list")
    parsed = []
    for k, op in enumerate(ops):
        opath = f"{path}.operators[{k}]"
        _mapping(op, opath, ("label", "preset", "kron", "matrix"), ("label",))
        src = _operator_source({key: v for key, v in op.items() if key != "label"}, opath, dim)
        parsed.append({"label": str(op["label"]), **src})
    labels = [op["label"] for op in parsed]
    if len(set(labels)) != len(labels):
        _fail(f"{path}.operators", f"duplicate labels {labels}")
    out = {
        "operators": parsed,
        "norm_kind": _choice(value.get("norm_kind", "spectral"), f"{path}.norm_kind", linalg.NORM_KINDS),
        "mode": _choice(value.get("mode", "stacked"), f"{path}.mode", system.MODES),
    }
    if "reference_state" in value:
        out["reference_state"] = _vector(value["reference_state"], f"{path}.reference_state", dim)
    elif out["norm_kind"] == "state_dependent":
        _fail(f"{path}.reference_state", "is required when norm_kind is state_dependent")
    total = sum(
        (lambda m: m.conj().T @ m)(_source_matrix(op)) for op in parsed
    )
    err = np.linalg.norm(total - np.eye(dim))
    if err > system.COMPLETENESS_TOL:
        _fail(
            f"{path}.operators",
            f"violates the completeness relation sum_m M_m^dag M_m = I (deviation {err:.3g})",
        )
    return out


def _noise_matrix(value, key, sigma_key, size):
    path = f"system.noise.{key}"
    if key in value:
        if sigma_key in value:
            _fail(path, f"give {key} or {sigma_key}, not both")
        out = {key: _matrix(value[key], path, size)}
        try:
            system.check_psd(_complex_matrix(out[key]), key)
        except QoseError as exc:
            _fail(path, str(exc))
        return out
    sigma = _number(value.get(sigma_key, 0.0), f"system.noise.{sigma_key}")
    if sigma < 0:
        _fail(f"system.noise.{sigma_key}", "must be >= 0")
    return {sigma_key: sigma}


def _parse_noise(value, dim, n_outputs):
    _mapping(value, "system.noise", ("sigma_Q", "Q", "sigma_R", "R", "renormalize_after_state_noise"))
    out = {}
    out.update(_noise_matrix(value, "Q", "sigma_Q", dim))
    out.update(_noise_matrix(value, "R", "sigma_R", n_outputs))
    renorm = value.get("renormalize_after_state_noise", False)
    if not isinstance(renorm, bool):
        _fail("system.noise.renormalize_after_state_noise", "must be a boolean")
    out["renormalize_after_state_noise"] = renorm
    return out


def _parse_system(value):
    _mapping(value, "system", ("dim", "dynamics", "measurement", "noise", "initial_state"),
             ("dim", "dynamics", "measurement", "initial_state"))
    dim = _integer(value["dim"], "system.dim", minimum=2)
    measurement = _parse_measurement(value["measurement"], dim)
    n_outputs = dim * len(measurement["operators"])
    out = {
        "dim": dim,
        "dynamics": _parse_dynamics(value["dynamics"], dim),
        "measurement": measurement,
        "noise": _parse_noise(value.get("noise", {}), dim, n_outputs),
        "initial_state": _vector(value["initial_state"], "system.initial_state", dim),
    }
    norm = np.linalg.norm(_complex_vector(out["initial_state"]))
    if abs(norm - 1.0) > system.NORMALIZATION_TOL:
        _fail("system.initial_state", f"must be normalized (norm is {norm!r})")
    return out


def _parse_estimator(value, dim):
    path = "estimator"
    _mapping(value, path, ("lambda", "delta", "mode", "process_noise_mode", "x0"))
    lam = _number(value.get("lambda", 1.0), f"{path}.lambda")
    if not (0.0 < lam <= 1.0):
        _fail(f"{path}.lambda", f"must be in (0, 1], got {lam!r}")
    delta = _number(value.get("delta", 1e6), f"{path}.delta")
    if delta <= 0:
        _fail(f"{path}.delta", "must be positive")
    x0 = value.get("x0", "uniform")
    if x0 != "uniform":
        x0 = _vector(x0, f"{path}.x0", dim)
    return {
        "lambda": lam,
        "delta": delta,
        "mode": _choice(value.get("mode", "noiseless_rls"), f"{path}.mode", ESTIMATOR_MODES),
        "process_noise_mode": _choice(
            value.get("process_noise_mode", "explicit"), f"{path}.process_noise_mode", system.PROCESS_NOISE_MODES
        ),
        "x0": x0,
    }


def _parse_run(value):
    path = "run"
    _mapping(value, path, ("steps", "n_seeds", "seed_base", "workers", "records_csv", "summary", "log_states"))
    out = {
        "steps": _integer(value.get("steps", 100), f"{path}.steps", minimum=1),
        "n_seeds": _integer(value.get("n_seeds", 10), f"{path}.n_seeds", minimum=1),
        "seed_base": _integer(value.get("seed_base", 0), f"{path}.seed_base", minimum=0),
        "workers": _integer(value.get("workers", 1), f"{path}.workers", minimum=1),
        "log_states": value.get("log_states", False),
    }
    if out["seed_base"] >= 2**64:
        _fail(f"{path}.seed_base", "must fit in 64 unsigned bits")
    if not isinstance(out["log_states"], bool):
        _fail(f"{path}.log_states", "must be a boolean")
    for key in ("records_csv", "summary"):
        if key in value and value[key] is not None:
            if not isinstance(value[key], str):
                _fail(f"{path}.{key}", "must be a path string")
            out[key] = value[key]
    return out


def _build_system(doc):
    d = doc["dim"]
    meas = doc["measurement"]
    ref = meas.get("reference_state")
    model = system.MeasurementModel(
        tuple((op["label"], _source_matrix(op)) for op in meas["operators"]),
        norm_kind=meas["norm_kind"],
        mode=meas["mode"],
        reference_state=None if ref is None else _complex_vector(ref),
    )
    n_outputs = d * len(meas["operators"])
    noise_doc = doc["noise"]
    Q = _complex_matrix(noise_doc["Q"]) if "Q" in noise_doc else (
        noise_doc["sigma_Q"] ** 2 * np.eye(d) if noise_doc["sigma_Q"] else None)
    R = _complex_matrix(noise_doc["R"]) if "R" in noise_doc else (
        noise_doc["sigma_R"] ** 2 * np.eye(n_outputs) if noise_doc["sigma_R"] else None)
    noise = system.NoiseSpec(
        Q=Q, R=R, renormalize_after_state_noise=noise_doc["renormalize_after_state_noise"]
    )
    dyn = doc["dynamics"]
    kwargs = {}
    if "hamiltonian" in dyn:
        kwargs.update(hamiltonian=_source_matrix(dyn["hamiltonian"]), dt=dyn["dt"], hbar=dyn["hbar"])
    else:
        kwargs["unitary"] = _source_matrix(_unitary_source(dyn))
    return system.SystemSpec(
        measurement=model, initial_state=_complex_vector(doc["initial_state"]), noise=noise, **kwargs
    )


def config_from_dict(doc):
    """Validate a loaded document and return its normalized form."""
    _mapping(doc, "config", ("schema_version", "system", "estimator", "run"), ("schema_version", "system"))
    version = doc["schema_version"]
    if version != SCHEMA_VERSION:
        _fail("schema_version", f"must be {SCHEMA_VERSION}, got {version!r}")
    sys_doc = _parse_system(doc["system"])
    est_doc = _parse_estimator(doc.get("estimator", {}), sys_doc["dim"])
    run_doc = _parse_run(doc.get("run", {}))
    try:
        _build_system(sys_doc)
    except QoseError as exc:
        _fail("system", str(exc))
    cfg = ExperimentConfig(SCHEMA_VERSION, sys_doc, est_doc, run_doc)
    cfg.build_estimator()
    return cfg


def parse_config(text):
    """Parse and validate a YAML/JSON config document.

    Raises:
        ConfigParseError: the text is not a well-formed mapping.
        ConfigValidationError: a field is invalid; ``.field`` names it.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"malformed config: {exc}".replace("\n", " ")) from exc
    if not isinstance(doc, dict):
        raise ConfigParseError("config must be a mapping at the top level")
    return config_from_dict(doc)


def dump_config(config):
    """Serialize a config to YAML text in normalized form."""
    return yaml.safe_dump(config.to_dict(), sort_keys=False, default_flow_style=None, width=100)


def bundled_configs():
    """Names of the example configs shipped with the package."""
    root = resources.files("qose") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def read_config_text(ref):
    """Text of a config given a path or a bundled config name."""
    path = Path(ref)
    if path.is_file():
        return path.read_text()
    bundled = resources.files("qose") / "configs" / f"{ref}.yaml"
    if bundled.is_file():
        return bundled.read_text()
    raise FileNotFoundError(f"no config file or bundled config named {ref!r}")


def load_config(ref):
    return parse_config(read_config_text(ref))


# ---------------------------------------------------------------------------
# output files

def atomic_write_text(path, text):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _real(x):
    return format(float(x), ".17g")


def records_csv_text(records, log_states=False):
    if not records:
        raise ValueError("no records to write")
    header = list(CSV_COLUMNS)
    d = records[0].psi_true.size
    if log_states:
        for name in ("psi_true", "psi_hat"):
            for k in range(d):
                header += [f"{name}_{k}_re", f"{name}_{k}_im"]
    lines = [",".join(header)]
    for r in records:
        row = [str(r.t)] + [_real(getattr(r, c)) for c in CSV_COLUMNS[1:]]
        if log_states:
            for vec in (r.psi_true, r.psi_hat):
                for z in vec:
                    row += [_real(z.real), _real(z.imag)]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_records_csv(records, path, log_states=False):
    """Write per-step records as CSV (LF line endings, 17 significant digits)."""
    return ResultFiles(records_csv=atomic_write_text(path, records_csv_text(records, log_states)))


def write_states_csv(states, observations, path):
    """CSV of a simulated trajectory: true amplitudes then observed values per step."""
    d = states.shape[1]
    m = observations.shape[1]
    header = ["t", "norm"]
    header += [f"psi_{k}_{p}" for k in range(d) for p in ("re", "im")]
    header += [f"y_{k}_{p}" for k in range(m) for p in ("re", "im")]
    lines = [",".join(header)]
    for t, (psi, y) in enumerate(zip(states, observations), start=1):
        row = [str(t), _real(np.linalg.norm(psi))]
        for z in np.concatenate([psi, y]):
            row += [_real(z.real), _real(z.imag)]
        lines.append(",".join(row))
    return atomic_write_text(path, "\n".join(lines) + "\n")


def write_summary(summary, path):
    """Write a run summary (``RunSummary`` or plain dict) as JSON."""
    doc = summary.to_dict() if hasattr(summary, "to_dict") else summary
    return ResultFiles(summary=atomic_write_text(path, json.dumps(doc, indent=2) + "\n"))
