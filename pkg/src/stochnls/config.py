"""Experiment configuration files (JSON) and their validation.

A configuration has six top-level keys::

    {
      "schema_version": "1.0",
      "model":      {"domain_length": 3.14159, "n_modes": 32, "grid_points": null,
                     "sigma": 1.0, "alpha": -1, "beta": 1.0},
      "noise":      {"family": "flat_k", "k": 32, "hs_norm_sq": 1.0},
      "integrator": {"dt": 0.001, "scheme": "strang_split", "seed": 0, "record_every": 10},
      "experiment": {"kind": "stationary", "gamma": 0.5, "T": 200, "burn_in": 50, "n_traj": 256},
      "output":     {"directory": "out", "formats": ["csv", "json", "xy"]}
    }

Noise families: ``flat_k`` (``phi_j = phi_-j = c`` for ``j <= k``; give ``amplitude`` or
``hs_norm_sq``), ``power_decay`` (``phi_j = amplitude * j^-p`` for ``j <= cutoff``, needs
``2p - 2beta > 1``), and ``custom`` (explicit ``phi_plus`` / ``phi_minus`` lists).  Loading
collects every problem with its field path instead of stopping at the first.
"""

from dataclasses import asdict, dataclass, field
import hashlib
import json
import math
from pathlib import Path

from . import spectral
from ._validation import ParameterError
from .integrator import SCHEMES, IntegratorConfig

__all__ = [
    "SCHEMA_VERSION",
    "EXIT_OK",
    "EXIT_PARSE",
    "EXIT_VALIDATION",
    "EXIT_IO",
    "EXIT_NUMERICAL",
    "ConfigError",
    "ConfigParseError",
    "ConfigValidationError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
]

SCHEMA_VERSION = "1.0"
KINDS = ("simulate", "stationary", "sweep", "verify")
FORMATS = ("csv", "json", "xy", "svg")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_IO = 4
EXIT_NUMERICAL = 5


class ConfigError(Exception):
    exit_code = EXIT_VALIDATION


class ConfigParseError(ConfigError):
    exit_code = EXIT_PARSE


class ConfigValidationError(ConfigError):
    """Carries every validation problem as ``(field_path, message)`` pairs."""

    exit_code = EXIT_VALIDATION

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(f"{path}: {msg}" for path, msg in self.errors))


_MODEL = {"domain_length": math.pi, "n_modes": 32, "grid_points": None, "sigma": 1.0,
          "alpha": -1, "beta": 1.0}
_NOISE = {"family": "flat_k", "k": None, "amplitude": None, "hs_norm_sq": None, "p": None,
          "cutoff": None, "phi_plus": None, "phi_minus": None}
_INTEGRATOR = {"dt": 1e-3, "scheme": "strang_split", "seed": 0, "record_every": 10,
               "exact_ou": False, "batch_size": 64}
_EXPERIMENT = {"kind": "stationary", "gamma": None, "gammas": None, "T": None, "burn_in": None,
               "n_traj": 64, "window": 1.0, "nonlinear": True, "T_det": 50.0, "n_det_states": 8,
               "n_fields": 10000, "initial": "zero"}
_OUTPUT = {"directory": None, "formats": ["csv", "json", "xy"], "csv_trajectories": 4}
_SECTIONS = {"model": _MODEL, "noise": _NOISE, "integrator": _INTEGRATOR,
             "experiment": _EXPERIMENT, "output": _OUTPUT}


@dataclass
class ExperimentConfig:
    """A validated configuration; sections are plain dicts with defaults filled in."""

    model: dict
    noise: dict
    integrator: dict
    experiment: dict
    output: dict
    schema_version: str = SCHEMA_VERSION
    source: str = field(default=None, compare=False)

    # -- typed views ------------------------------------------------------

    def basis(self):
        m = self.model
        return spectral.build_basis(m["domain_length"], m["n_modes"], m["grid_points"])

    def params(self, gamma=None):
        m = self.model
        g = self.experiment["gamma"] if gamma is None else gamma
        return spectral.ModelParams(m["sigma"], m["alpha"], m["beta"], g or 0.0)

    def noise_operator(self):
        n = self.noise
        n_modes = self.model["n_modes"]
        if n["family"] == "flat_k":
            return spectral.NoiseOperator.flat(n["k"], n_modes, amplitude=n["amplitude"],
                                               hs_norm_sq=n["hs_norm_sq"])
        if n["family"] == "power_decay":
            return spectral.NoiseOperator.power_decay(n["p"], n["cutoff"], n["amplitude"] or 1.0)
        phi_m = n["phi_minus"] if n["phi_minus"] is not None else n["phi_plus"]
        return spectral.NoiseOperator(list(n["phi_plus"]), list(phi_m))

    def integrator_config(self, seed=None):
        kw = dict(self.integrator)
        if seed is not None:
            kw["seed"] = seed
        return IntegratorConfig(**kw)

    def gammas(self):
        e = self.experiment
        return list(e["gammas"]) if e["gammas"] is not None else [e["gamma"]]

    # -- serialization ----------------------------------------------------

    def to_dict(self):
        d = asdict(self)
        d.pop("source")
        return {"schema_version": d.pop("schema_version"), **d}

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self):
        """sha256 of the canonical JSON form (key order and whitespace do not matter)."""
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def replace(self, section, **values):
        """Copy with some keys of one section changed, re-validated."""
        d = self.to_dict()
        d[section] = {**d[section], **values}
        return parse_config(d, source=self.source)


def _is_real(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


class _Checker:
    def __init__(self):
        self.errors = []

    def add(self, path, msg):
        self.errors.append((path, msg))

    def real(self, d, key, path, positive=False, nonneg=False, optional=False):
        v = d.get(key)
        if v is None and optional:
            return False
        if not _is_real(v):
            self.add(f"{path}.{key}", f"expected a finite number, got {v!r}")
            return False
        if positive and v <= 0:
            self.add(f"{path}.{key}", f"must be > 0, got {v!r}")
            return False
        if nonneg and v < 0:
            self.add(f"{path}.{key}", f"must be >= 0, got {v!r}")
            return False
        return True

    def integer(self, d, key, path, minimum=1, optional=False, maximum=None):
        v = d.get(key)
        if v is None and optional:
            return False
        if not _is_int(v):
            self.add(f"{path}.{key}", f"expected an integer, got {v!r}")
            return False
        if v < minimum or (maximum is not None and v > maximum):
            hi = "" if maximum is None else f" and <= {maximum}"
            self.add(f"{path}.{key}", f"must be >= {minimum}{hi}, got {v!r}")
            return False
        return True


def _merge(raw, chk):
    out = {}
    for name, defaults in _SECTIONS.items():
        given = raw.get(name, {})
        if not isinstance(given, dict):
            chk.add(name, f"expected an object, got {type(given).__name__}")
            given = {}
        for key in sorted(set(given) - set(defaults)):
            chk.add(f"{name}.{key}", "unknown key")
        sec = {k: (list(v) if isinstance(v, list) else v) for k, v in defaults.items()}
        sec.update({k: v for k, v in given.items() if k in defaults})
        out[name] = sec
    for key in sorted(set(raw) - set(_SECTIONS) - {"schema_version"}):
        chk.add(key, "unknown key")
    return out


def _check_version(raw, chk):
    v = raw.get("schema_version", SCHEMA_VERSION)
    if not isinstance(v, str) or not v.replace(".", "").isdigit() or v.count(".") != 1:
        chk.add("schema_version", f"expected 'MAJOR.MINOR', got {v!r}")
        return
    major = int(v.split(".")[0])
    if major > int(SCHEMA_VERSION.split(".")[0]):
        chk.add("schema_version", f"version {v} is newer than supported {SCHEMA_VERSION}")


def _validate(cfg, chk):
    m, nz, it, ex, out = (cfg[k] for k in ("model", "noise", "integrator", "experiment", "output"))
    chk.real(m, "domain_length", "model", positive=True)
    n_ok = chk.integer(m, "n_modes", "model")
    if m["grid_points"] is not None and chk.integer(m, "grid_points", "model") and n_ok:
        if m["grid_points"] < m["n_modes"]:
            chk.add("model.grid_points", "must be >= n_modes")
    model_ok = chk.real(m, "sigma", "model", positive=True) & chk.real(m, "beta", "model", positive=True)
    if m["alpha"] not in (1, -1) or isinstance(m["alpha"], bool):
        chk.add("model.alpha", f"must be +1 (focusing) or -1 (defocusing), got {m['alpha']!r}")
        model_ok = False
    if model_ok:
        try:
            spectral.ModelParams(m["sigma"], m["alpha"], m["beta"])
        except ParameterError as exc:
            chk.add("model.sigma", str(exc))

    fam = nz["family"]
    if fam == "flat_k":
        chk.integer(nz, "k", "noise")
        a = nz["amplitude"] is not None
        h = nz["hs_norm_sq"] is not None
        if a == h:
            chk.add("noise", "flat_k needs exactly one of amplitude, hs_norm_sq")
        elif a:
            chk.real(nz, "amplitude", "noise", nonneg=True)
        else:
            chk.real(nz, "hs_norm_sq", "noise", nonneg=True)
    elif fam == "power_decay":
        if chk.real(nz, "p", "noise", positive=True) and model_ok:
            if not 2 * nz["p"] - 2 * m["beta"] > 1:
                chk.add("noise.p", f"power_decay needs 2p - 2beta > 1, got p={nz['p']}, beta={m['beta']}")
        chk.integer(nz, "cutoff", "noise")
        chk.real(nz, "amplitude", "noise", nonneg=True, optional=True)
    elif fam == "custom":
        for key in ("phi_plus", "phi_minus"):
            v = nz[key]
            if v is None and key == "phi_minus":
                continue
            if not isinstance(v, list) or not v or not all(_is_real(x) for x in v):
                chk.add(f"noise.{key}", "expected a non-empty list of finite numbers")
        if isinstance(nz["phi_plus"], list) and isinstance(nz["phi_minus"], list):
            if len(nz["phi_plus"]) != len(nz["phi_minus"]):
                chk.add("noise.phi_minus", "must have the same length as phi_plus")
    else:
        chk.add("noise.family", f"must be one of flat_k, power_decay, custom, got {fam!r}")
    if nz["cutoff"] is not None and fam != "power_decay":
        chk.add("noise.cutoff", "only used by power_decay")

    chk.real(it, "dt", "integrator", positive=True)
    if it["scheme"] not in SCHEMES:
        chk.add("integrator.scheme", f"must be one of {', '.join(SCHEMES)}, got {it['scheme']!r}")
    chk.integer(it, "seed", "integrator", minimum=0, maximum=2**64 - 1)
    chk.integer(it, "record_every", "integrator")
    chk.integer(it, "batch_size", "integrator")
    if not isinstance(it["exact_ou"], bool):
        chk.add("integrator.exact_ou", "expected true or false")

    kind = ex["kind"]
    if kind not in KINDS:
        chk.add("experiment.kind", f"must be one of {', '.join(KINDS)}, got {kind!r}")
    if ex["gammas"] is not None:
        g = ex["gammas"]
        if not isinstance(g, list) or not g or not all(_is_real(x) and x > 0 for x in g):
            chk.add("experiment.gammas", "expected a non-empty list of positive numbers")
        elif any(b >= a for a, b in zip(g, g[1:])):
            chk.add("experiment.gammas", "must be strictly decreasing")
    if ex["gamma"] is not None:
        chk.real(ex, "gamma", "experiment", nonneg=True)
    if kind == "sweep" and ex["gammas"] is None:
        chk.add("experiment.gammas", "required for kind=sweep")
    if kind in ("simulate", "stationary", "verify") and ex["gamma"] is None:
        chk.add("experiment.gamma", f"required for kind={kind}")
    if kind == "stationary" and ex["gamma"] == 0:
        chk.add("experiment.gamma", "stationary runs need gamma > 0")
    if ex["T"] is None:
        chk.add("experiment.T", "required")
    else:
        chk.real(ex, "T", "experiment", positive=True)
    chk.real(ex, "burn_in", "experiment", nonneg=True, optional=True)
    if _is_real(ex["T"]) and _is_real(ex["burn_in"]) and kind != "simulate" and ex["burn_in"] >= ex["T"]:
        chk.add("experiment.burn_in", "must be smaller than T")
    chk.integer(ex, "n_traj", "experiment", minimum=1 if kind == "simulate" else 2)
    chk.real(ex, "window", "experiment", positive=True)
    chk.real(ex, "T_det", "experiment", positive=True)
    chk.integer(ex, "n_det_states", "experiment")
    chk.integer(ex, "n_fields", "experiment")
    if not isinstance(ex["nonlinear"], bool):
        chk.add("experiment.nonlinear", "expected true or false")
    if ex["initial"] != "zero":
        chk.add("experiment.initial", "only 'zero' initial data is supported")

    if out["directory"] is not None and not isinstance(out["directory"], str):
        chk.add("output.directory", "expected a string path")
    f = out["formats"]
    if not isinstance(f, list) or not all(x in FORMATS for x in f):
        chk.add("output.formats", f"expected a list drawn from {', '.join(FORMATS)}")
    chk.integer(out, "csv_trajectories", "output", minimum=0)

    # gamma = 0 is the unforced equation
    if not chk.errors and kind == "simulate" and ex["gamma"] == 0:
        try:
            sq = sum(v * v for v in ExperimentConfig(**cfg).noise_operator().mode_variance)
        except ParameterError as exc:
            chk.add("noise", str(exc))
        else:
            if sq != 0:
                chk.add("experiment.gamma", "gamma = 0 requires zero noise")
    if not chk.errors:
        try:
            ExperimentConfig(**cfg).noise_operator()
        except ParameterError as exc:
            chk.add("noise", str(exc))


def parse_config(raw, source=None):
    """Validate a decoded JSON object; raises :class:`ConfigValidationError` listing all errors."""
    if not isinstance(raw, dict):
        raise ConfigValidationError([("", "top level must be an object")])
    chk = _Checker()
    _check_version(raw, chk)
    cfg = _merge(raw, chk)
    _validate(cfg, chk)
    if chk.errors:
        raise ConfigValidationError(chk.errors)
    return ExperimentConfig(**cfg, source=source)


def load_config(path):
    """Read and validate a JSON config file.

    Raises :class:`ConfigParseError` (exit code 2) for unreadable or malformed JSON and
    :class:`ConfigValidationError` (exit code 3) for schema violations.
    """
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read {p}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{p}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_config(raw, source=str(p))
