"""Device configuration: YAML with unit-suffixed keys.

Every physical key ends in its unit (``delta_ghz``, ``t1_ns``,
``g_single_khz``, ``b_mt`` ...). The resolved config stores values exactly as
written in the file, in file units, so dumping and reloading reproduces it
bit for bit. Conversion to model units happens in the ``*_params`` methods.

Sections and defaults::

    qubit:      delta_ghz 2.878, epsilon_ghz 0, ip_na 300, t1_ns 150, t2echo_ns 250
    ensemble:   d_ghz 2.878, e_ghz 0, g_single_khz 8.8, n_spins 3.2e7, b_mt 0,
                gamma_ens_ghz (calibrated), g_nv 2, mu_b_ghz_per_mt 0.014
    readout:    contrast 0.4, offset 0.3
    grid:       bias_min_mphi0 -1, bias_max_mphi0 1, bias_points 81,
                detuning_min_ghz -0.2, detuning_max_ghz 0.2, detuning_points 81,
                t_max_ns 100, time_points 401, dt_ns 0.005
    sample:     density_cm3 1.1e18, area_um2 40, thickness_um 0.7
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Optional

import numpy as np
import yaml

from .device import EnsembleParams, QubitParams
from .dynamics import DissipationSpec, ReadoutParams
from .errors import ConfigError

logger = logging.getLogger(__name__)

# Bright-mode dephasing that gives a 20 ns fitted decay of the resonant
# vacuum Rabi trace with the default qubit T1/T2echo (from calibrate_gamma).
CALIBRATED_GAMMA_ENS = 0.175

UNIT_SUFFIXES = ("ghz_per_mt", "mphi0", "ghz", "khz", "mhz", "hz", "ns", "us", "na", "mt", "cm3", "um2", "um")


@dataclass(frozen=True)
class QubitSection:
    delta_ghz: float = 2.878
    epsilon_ghz: float = 0.0
    ip_na: float = 300.0
    t1_ns: float = 150.0
    t2echo_ns: float = 250.0


@dataclass(frozen=True)
class EnsembleSection:
    d_ghz: float = 2.878
    e_ghz: float = 0.0
    g_single_khz: float = 8.8
    n_spins: float = 3.2e7
    b_mt: float = 0.0
    gamma_ens_ghz: float = CALIBRATED_GAMMA_ENS
    g_nv: float = 2.0
    mu_b_ghz_per_mt: float = 0.014


@dataclass(frozen=True)
class ReadoutSection:
    contrast: float = 0.4
    offset: float = 0.3


@dataclass(frozen=True)
class GridSection:
    bias_min_mphi0: float = -1.0
    bias_max_mphi0: float = 1.0
    bias_points: int = 81
    detuning_min_ghz: float = -0.2
    detuning_max_ghz: float = 0.2
    detuning_points: int = 81
    t_max_ns: float = 100.0
    time_points: int = 401
    dt_ns: float = 0.005

    def bias_axis(self) -> np.ndarray:
        return np.linspace(self.bias_min_mphi0, self.bias_max_mphi0, self.bias_points)

    def detuning_axis(self) -> np.ndarray:
        return np.linspace(self.detuning_min_ghz, self.detuning_max_ghz, self.detuning_points)

    def time_axis(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max_ns, self.time_points)


@dataclass(frozen=True)
class SampleSection:
    density_cm3: float = 1.1e18
    area_um2: float = 40.0
    thickness_um: float = 0.7


SECTIONS = {
    "qubit": QubitSection,
    "ensemble": EnsembleSection,
    "readout": ReadoutSection,
    "grid": GridSection,
    "sample": SampleSection,
}

_INT_KEYS = {"bias_points", "detuning_points", "time_points"}


@dataclass(frozen=True)
class DeviceConfig:
    qubit: QubitSection = field(default_factory=QubitSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    readout: ReadoutSection = field(default_factory=ReadoutSection)
    grid: GridSection = field(default_factory=GridSection)
    sample: SampleSection = field(default_factory=SampleSection)

    def __post_init__(self):
        # Surface model-level validation at construction time.
        try:
            self.qubit_params()
            self.ensemble_params()
            self.readout_params()
            self.dissipation()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        g = self.grid
        if g.bias_points < 1 or g.detuning_points < 1 or g.time_points < 2:
            raise ConfigError("grid point counts must be >= 1 (time_points >= 2)")
        if not (g.t_max_ns > 0 and g.dt_ns > 0):
            raise ConfigError("grid.t_max_ns and grid.dt_ns must be positive")
        s = self.sample
        if min(s.density_cm3, s.area_um2, s.thickness_um) < 0:
            raise ConfigError("sample density, area and thickness must be non-negative")

    def qubit_params(self) -> QubitParams:
        q = self.qubit
        return QubitParams(q.delta_ghz, q.epsilon_ghz, q.ip_na, q.t1_ns, q.t2echo_ns)

    def ensemble_params(self) -> EnsembleParams:
        e = self.ensemble
        return EnsembleParams(
            d=e.d_ghz,
            e=e.e_ghz,
            g_single=e.g_single_khz * 1e-6,
            n_spins=e.n_spins,
            b_parallel=e.b_mt,
            gamma_ens=e.gamma_ens_ghz,
            g_nv=e.g_nv,
            mu_b=e.mu_b_ghz_per_mt,
        )

    def readout_params(self) -> ReadoutParams:
        return ReadoutParams(self.readout.contrast, self.readout.offset)

    def dissipation(self) -> DissipationSpec:
        return DissipationSpec(self.qubit.t1_ns, self.qubit.t2echo_ns, self.ensemble.gamma_ens_ghz)

    def with_gamma(self, gamma_ens: float) -> "DeviceConfig":
        return self.override({"ensemble": {"gamma_ens_ghz": gamma_ens}})

    def override(self, values: Dict[str, Dict[str, Any]]) -> "DeviceConfig":
        """Copy with ``{section: {key: value}}`` applied (validated like a file)."""
        return _build(values, base=self)

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return asdict(self)


def default_config() -> DeviceConfig:
    return DeviceConfig()


def _expected_key(section: str, key: str) -> Optional[str]:
    """Known key in ``section`` whose stem matches ``key`` with a different or missing unit."""
    known = [f.name for f in fields(SECTIONS[section])]
    stem = key.lower()
    for suffix in UNIT_SUFFIXES:
        if stem.endswith("_" + suffix):
            stem = stem[: -len(suffix) - 1]
            break
    for name in known:
        name_stem = name
        for suffix in UNIT_SUFFIXES:
            if name.endswith("_" + suffix):
                name_stem = name[: -len(suffix) - 1]
                break
        if name_stem == stem and name != key:
            return name
    return None


def _coerce(section: str, key: str, value: Any):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                raise ConfigError(f"{section}.{key}: expected a number, got {value!r}") from None
        else:
            raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
    if key in _INT_KEYS:
        if float(value) != int(value):
            raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
        return int(value)
    value = float(value)
    if not np.isfinite(value):
        raise ConfigError(f"{section}.{key}: value must be finite")
    return value


def _build(data: Dict[str, Any], base: Optional[DeviceConfig] = None) -> DeviceConfig:
    base = base or DeviceConfig()
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping of sections")
    updates = {}
    for section, values in data.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section {section!r}; expected one of {sorted(SECTIONS)}")
        if values is None:
            continue
        if not isinstance(values, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        known = {f.name for f in fields(SECTIONS[section])}
        resolved = {}
        for key, value in values.items():
            if key not in known:
                expected = _expected_key(section, str(key))
                if expected is not None:
                    raise ConfigError(f"{section}.{key}: unit suffix mismatch, expected key {expected!r}")
                raise ConfigError(f"{section}.{key}: unknown key; known keys are {sorted(known)}")
            resolved[key] = _coerce(section, key, value)
        updates[section] = replace(getattr(base, section), **resolved)
    return replace(base, **updates)


def load_config(path: Optional[str] = None) -> DeviceConfig:
    """Read a YAML config; ``None`` or ``"default"`` gives the defaults.

    Missing keys keep their defaults; unknown keys and wrong unit suffixes
    raise :class:`ConfigError`.
    """
    if path is None or path == "default":
        cfg = DeviceConfig()
    else:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
            raise ConfigError(f"cannot parse {path}{where}: {getattr(exc, 'problem', exc)}") from None
        cfg = _build(data or {})
    logger.info("resolved config: %s", json.dumps(cfg.to_dict(), sort_keys=True))
    return cfg


def dump_config(cfg: DeviceConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def parse_overrides(items) -> Dict[str, Dict[str, Any]]:
    """``["grid.t_max_ns=50", "bias_points=41"]`` -> nested override dict.

    A bare key is looked up in the ``grid`` section.
    """
    out: Dict[str, Dict[str, Any]] = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        section, _, name = key.strip().rpartition(".")
        section = section or "grid"
        out.setdefault(section, {})[name] = yaml.safe_load(value)
    return out
