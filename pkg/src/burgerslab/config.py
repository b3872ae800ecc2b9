"""Experiment configuration: a strict JSON schema with no unknown keys.

Configs are plain JSON objects.  Every mapping is validated against the
exact key set it may carry; unknown keys are rejected so that typos fail
loudly before any computation starts.  Numbers pass through Python's JSON
reader unchanged, so full decimal precision is preserved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from burgerslab.covariance import Covariance, covariance_from_config
from burgerslab.dynamics import (
    DeterministicInitial,
    InitialCondition,
    RandomSmoothInitial,
    SimConfig,
)
from burgerslab.error_lab import TestFunctional, functional_from_config
from burgerslab.spectral import SpectralField

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "EXPERIMENT_KINDS",
    "load_config",
    "parse_config",
    "parse_sim",
    "parse_initial",
    "parse_covariance",
    "parse_functional",
]

EXPERIMENT_KINDS = (
    "kl_rate",
    "galerkin_rate",
    "perturbation_pair",
    "diagnostics",
    "invariants",
)


class ConfigError(ValueError):
    """A configuration file is malformed or inconsistent."""


def _check_keys(d: dict, required: set, optional: set, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a JSON object")
    missing = required - set(d)
    if missing:
        raise ConfigError(f"{where} is missing keys: {sorted(missing)}")
    unknown = set(d) - required - optional
    if unknown:
        raise ConfigError(f"{where} has unknown keys: {sorted(unknown)}")


def parse_initial(d: dict | None) -> InitialCondition:
    if d is None:
        return DeterministicInitial.zero()
    _check_keys(d, {"kind"}, {"coeffs", "amplitude", "decay", "delta0"}, "sim.initial")
    kind = d["kind"]
    try:
        if kind == "deterministic":
            coeffs = d.get("coeffs", [0.0])
            return DeterministicInitial(SpectralField(np.asarray(coeffs, dtype=float)))
        if kind == "random_smooth":
            return RandomSmoothInitial(
                amplitude=float(d.get("amplitude", 1.0)),
                decay=float(d.get("decay", 2.0)),
                delta0=float(d.get("delta0", 0.1)),
            )
    except ValueError as exc:
        raise ConfigError(f"sim.initial: {exc}") from exc
    raise ConfigError(f"sim.initial.kind must be deterministic or random_smooth, got {kind!r}")


def parse_sim(d: dict) -> SimConfig:
    _check_keys(
        d,
        {"M", "T", "dt"},
        {"scheme", "nonlinear", "initial", "substeps", "blowup_threshold"},
        "sim",
    )
    try:
        return SimConfig(
            truncation=int(d["M"]),
            final_time=float(d["T"]),
            dt=float(d["dt"]),
            scheme=d.get("scheme", "exponential_euler"),
            nonlinear=bool(d.get("nonlinear", True)),
            initial=parse_initial(d.get("initial")),
            noise_substeps=int(d.get("substeps", 1)),
            blowup_threshold=float(d.get("blowup_threshold", 1e6)),
        )
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from exc


def parse_covariance(d: dict, k_max: int | None = None, base_dir=None) -> Covariance:
    try:
        return covariance_from_config(d, k_max=k_max, base_dir=base_dir)
    except ValueError as exc:
        raise ConfigError(f"covariance: {exc}") from exc


def parse_functional(d: dict) -> TestFunctional:
    try:
        return functional_from_config(d)
    except ValueError as exc:
        raise ConfigError(f"phi: {exc}") from exc


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    raw: dict
    base_dir: Path | None = None


_TOP_LEVEL_KEYS = {
    "kl_rate": (
        {"experiment", "seed", "sim", "covariance", "Ns", "mode", "n_reps"},
        {"r", "phi", "alpha_strong", "alpha_weak", "chunk_size", "gates", "K"},
    ),
    "galerkin_rate": (
        {"experiment", "seed", "sim", "covariance", "Ms", "M_ref", "mode", "n_reps"},
        {"r", "phi", "alpha_strong", "alpha_weak", "chunk_size", "gates"},
    ),
    "perturbation_pair": (
        {"experiment", "seed", "sim", "covariance", "covariance2", "n_reps"},
        {"r", "phi", "alpha_strong", "alpha_weak", "chunk_size", "gates", "crn"},
    ),
    "diagnostics": (
        {"experiment", "seed", "sim", "covariance", "n_reps"},
        {"checks", "params", "gates"},
    ),
    "invariants": (
        {"experiment", "seed"},
        {"cases", "Ms", "gates"},
    ),
}

_CHECK_NAMES = ("exp_bound", "moment_bound", "conv_moment", "linf_scaling", "ou_sharpness")


def parse_config(raw: dict, base_dir=None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("the top-level config must be a JSON object")
    kind = raw.get("experiment")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(
            f"experiment must be one of {list(EXPERIMENT_KINDS)}, got {kind!r}"
        )
    required, optional = _TOP_LEVEL_KEYS[kind]
    _check_keys(raw, required, optional, "config")
    seed = raw.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")

    # eagerly validate the nested pieces so malformed configs fail before
    # any computation or output
    if "sim" in raw:
        parse_sim(raw["sim"])
    if "covariance" in raw:
        parse_covariance(raw["covariance"], k_max=raw.get("K"), base_dir=base_dir)
    if "covariance2" in raw:
        parse_covariance(raw["covariance2"], base_dir=base_dir)
    if "phi" in raw:
        parse_functional(raw["phi"])
    if kind in ("kl_rate", "galerkin_rate", "perturbation_pair"):
        n_reps = raw.get("n_reps")
        if not isinstance(n_reps, int) or n_reps < 2:
            raise ConfigError("n_reps must be an integer >= 2")
    if kind == "kl_rate":
        ns = raw.get("Ns")
        if (not isinstance(ns, list) or not ns
                or any(not isinstance(n, int) or n < 0 for n in ns)
                or sorted(ns) != ns):
            raise ConfigError("Ns must be an increasing list of integers >= 0")
        if raw.get("mode") not in ("strong", "weak", "both"):
            raise ConfigError("mode must be strong, weak or both")
        if raw["mode"] in ("weak", "both") and "phi" not in raw:
            raise ConfigError("weak mode needs phi")
    if kind == "galerkin_rate":
        ms = raw.get("Ms")
        if (not isinstance(ms, list) or not ms
                or any(not isinstance(m, int) or m < 1 for m in ms)
                or sorted(ms) != ms):
            raise ConfigError("Ms must be an increasing list of integers >= 1")
        if not isinstance(raw.get("M_ref"), int) or raw["M_ref"] < 4 * max(ms):
            raise ConfigError("M_ref must be an integer >= 4 * max(Ms)")
        if raw.get("mode") not in ("strong", "weak", "both"):
            raise ConfigError("mode must be strong, weak or both")
        if raw["mode"] in ("weak", "both") and "phi" not in raw:
            raise ConfigError("weak mode needs phi")
    if kind == "diagnostics":
        checks = raw.get("checks", list(_CHECK_NAMES))
        if (not isinstance(checks, list)
                or any(c not in _CHECK_NAMES for c in checks)):
            raise ConfigError(f"checks must be a sub-list of {list(_CHECK_NAMES)}")
        if not isinstance(raw.get("n_reps"), int) or raw["n_reps"] < 2:
            raise ConfigError("n_reps must be an integer >= 2")
        if "params" in raw:
            _check_keys(
                raw["params"], set(),
                {"alpha_over_limit", "p", "conv_alpha", "conv_p", "linf_p",
                 "sharpness_t"},
                "params",
            )
    if kind == "invariants":
        cases = raw.get("cases", 100)
        if not isinstance(cases, int) or cases < 1:
            raise ConfigError("cases must be a positive integer")

    gates = raw.get("gates")
    if gates is not None:
        _check_keys(
            gates,
            set(),
            {"strong_slope", "weak_slope", "weak_over_strong", "require_satisfied",
             "require_pass"},
            "gates",
        )
        for key in ("strong_slope", "weak_slope", "weak_over_strong"):
            if key in gates:
                window = gates[key]
                if (not isinstance(window, list) or len(window) != 2
                        or window[0] > window[1]):
                    raise ConfigError(f"gates.{key} must be [lo, hi]")

    return ExperimentConfig(experiment=kind, seed=seed, raw=raw, base_dir=base_dir)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(raw, base_dir=p.resolve().parent)
