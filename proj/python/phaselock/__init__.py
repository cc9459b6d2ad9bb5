"""Simulator for a phase-locked dual-wavelength Mach-Zehnder interferometer."""

import json

from . import _core
from ._core import (
    ConfigError,
    InsufficientDataError,
    UndefinedPhaseError,
    allan_deviation,
    coupler_model,
    compensating_mu_out,
    estimate_phase_eq1,
    power_spectral_density,
    predicted_phase_eq2,
    preset_names,
    relative_drift_eq3,
    setpoint_fraction,
    windowed_std,
)

__version__ = _core.__version__


def default_config():
    return json.loads(_core.default_config())


def preset(name, full_duration=False):
    return json.loads(_core.preset_config(name, full_duration))


def _set(cfg, path, value):
    node = cfg
    keys = path.split(".")
    for key in keys[:-1]:
        node = node[key]
    if keys[-1] not in node:
        raise ConfigError(f"{path}: no such configuration value")
    node[keys[-1]] = value


def run(config="fig5-closedloop", seed=None, duration_s=None, **overrides):
    """Run a preset (by name) or a config dict.

    Dotted overrides use double underscores: reference_lsd__mu_out=0.01.
    Returns a dict with 'series' (1 Hz columns as numpy arrays), 'fast',
    'phi_sig_est_deg', 'metadata' (dict) and 'csv' (text of run.csv).
    """
    cfg = preset(config) if isinstance(config, str) else json.loads(json.dumps(config))
    for key, value in overrides.items():
        _set(cfg, key.replace("__", "."), value)
    if duration_s is not None:
        cfg["duration_s"] = float(duration_s)
    if seed is not None:
        cfg["seed"] = int(seed)
    out = _core.run(json.dumps(cfg))
    out["metadata"] = json.loads(out["metadata"])
    return out


def cli(*args):
    """Run the command line tool in-process; returns (exit code, stdout, stderr)."""
    return _core.cli([str(a) for a in args])
