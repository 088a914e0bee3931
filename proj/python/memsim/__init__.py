"""Python bindings for the memsim in-memory computing simulator."""

import json as _json

from ._core import (
    ClockError,
    ConfigError,
    Crossbar,
    DeviceParams,
    DeviceState,
    DimensionError,
    DivergenceError,
    DomainError,
    MemsimError,
    RangeError,
    Rng,
    SingularSystemError,
    __version__,
    amp_recover,
    apply_pulse,
    derive_seed,
    drifted_conductance,
    gaussian_matrix,
    narma10,
    nmse_db,
    program_iterative,
    read,
    snn_efficiency_favorable,
    sparse_signal,
)
from . import _core


def experiments():
    """Registered experiments as a list of dicts (name, module, figure, description)."""
    return _core._registry()


def run_experiment(name, seed, overrides=None, output_dir=None):
    """Run a registered experiment.

    `overrides` uses the layout of a config file, e.g. {"cs": {"trials": 2}}.
    Files are written only when `output_dir` is given. Returns a dict with
    "metrics", "report" and "warnings".
    """
    raw = _core._run(name, seed, _json.dumps(overrides or {}), output_dir or "")
    return _json.loads(raw)


__all__ = [
    "ClockError",
    "ConfigError",
    "Crossbar",
    "DeviceParams",
    "DeviceState",
    "DimensionError",
    "DivergenceError",
    "DomainError",
    "MemsimError",
    "RangeError",
    "Rng",
    "SingularSystemError",
    "__version__",
    "amp_recover",
    "apply_pulse",
    "derive_seed",
    "drifted_conductance",
    "experiments",
    "gaussian_matrix",
    "narma10",
    "nmse_db",
    "program_iterative",
    "read",
    "run_experiment",
    "snn_efficiency_favorable",
    "sparse_signal",
]
