"""Scenario configuration and config-file ingestion."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration."""


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """All scenario, channel, power and algorithm parameters.

    Powers are in dBm, distances in meters, frequencies in Hz. Defaults
    reproduce the factory-type setup with 8 RRUs of 16 antennas serving
    4 users, each user served by its 4 nearest RRUs.
    """

    num_rrus: int = 8
    antennas_per_rru: int = 16
    num_users: int = 4
    serving_set_size: int = 4
    subset_floor: int = 3
    tx_power_dbm: float = 33.0
    noise_psd_dbm_hz: float = -72.0
    bandwidth_hz: float = 20e6
    carrier_freq_hz: float = 28e9
    los_pathloss_exp: float = 2.0
    nlos_pathloss_exp: float = 3.0
    num_paths: int = 4
    blockage_density: float = 0.0
    user_weights: Optional[tuple[float, ...]] = None
    sca_max_iters: int = 30
    kkt_max_iters: int = 2000
    bisection_tol: float = 1e-7
    convergence_tol: float = 1e-3
    subgrad_step: float = 0.005
    best_response_step: float = 0.05
    area_width_m: float = 100.0
    area_height_m: float = 50.0
    rng_seed: int = 0
    # explicit per-user RRU lists; overrides nearest-RRU clustering
    serving_sets: Optional[tuple[tuple[int, ...], ...]] = None

    def __post_init__(self):
        if self.user_weights is not None:
            object.__setattr__(self, "user_weights", tuple(float(w) for w in self.user_weights))
        if self.serving_sets is not None:
            object.__setattr__(
                self, "serving_sets", tuple(tuple(int(b) for b in s) for s in self.serving_sets)
            )
        self.validate()

    def validate(self) -> None:
        for name in ("num_rrus", "antennas_per_rru", "num_users", "serving_set_size",
                     "subset_floor", "num_paths", "sca_max_iters", "kkt_max_iters"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not self.subset_floor <= self.serving_set_size <= self.num_rrus:
            raise ConfigError(
                "need 1 <= subset_floor <= serving_set_size <= num_rrus, got "
                f"{self.subset_floor}, {self.serving_set_size}, {self.num_rrus}"
            )
        if not 0.0 < self.best_response_step <= 1.0:
            raise ConfigError("best_response_step must lie in (0, 1]")
        if self.subgrad_step <= 0:
            raise ConfigError("subgrad_step must be positive")
        if self.blockage_density < 0:
            raise ConfigError("blockage_density must be nonnegative")
        if self.bandwidth_hz <= 0 or self.carrier_freq_hz <= 0:
            raise ConfigError("bandwidth_hz and carrier_freq_hz must be positive")
        if self.area_width_m <= 0 or self.area_height_m <= 0:
            raise ConfigError("area dimensions must be positive")
        if self.bisection_tol <= 0 or self.convergence_tol <= 0:
            raise ConfigError("tolerances must be positive")
        if self.user_weights is not None:
            if len(self.user_weights) != self.num_users:
                raise ConfigError("user_weights needs one entry per user")
            if any(w < 0 or not math.isfinite(w) for w in self.user_weights):
                raise ConfigError("user_weights must be finite and nonnegative")
        if self.serving_sets is not None:
            if len(self.serving_sets) != self.num_users:
                raise ConfigError("serving_sets needs one entry per user")
            for s in self.serving_sets:
                if len(s) != self.serving_set_size or len(set(s)) != len(s):
                    raise ConfigError(f"serving set {s} must hold {self.serving_set_size} distinct RRUs")
                if any(b < 0 or b >= self.num_rrus for b in s):
                    raise ConfigError(f"serving set {s} has RRU index out of range")
        if not self.noise_power > 0:
            raise ConfigError("derived noise power must be positive")

    @property
    def noise_power(self) -> float:
        """Noise power in watts integrated over the full bandwidth."""
        return dbm_to_watt(self.noise_psd_dbm_hz + 10.0 * math.log10(self.bandwidth_hz))

    @property
    def tx_power(self) -> float:
        """Per-RRU power budget P_b in watts."""
        return dbm_to_watt(self.tx_power_dbm)

    @property
    def weights(self) -> tuple[float, ...]:
        if self.user_weights is None:
            return (1.0,) * self.num_users
        return self.user_weights

    @property
    def wavelength(self) -> float:
        return 299_792_458.0 / self.carrier_freq_hz

    def replace(self, **changes: Any) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key in ("user_weights", "serving_sets"):
            if out[key] is not None:
                out[key] = json.loads(json.dumps(out[key]))
            else:
                del out[key]
        return out


FIELD_NAMES = frozenset(f.name for f in dataclasses.fields(SystemConfig))


def _flatten(raw: dict, where: str = "") -> dict:
    flat: dict = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            for k, v in _flatten(value, f"{where}{key}.").items():
                if k in flat:
                    raise ConfigError(f"duplicate key {k!r}")
                flat[k] = v
        else:
            if key in flat:
                raise ConfigError(f"duplicate key {key!r}")
            flat[key] = value
    return flat


def config_from_mapping(raw: dict) -> SystemConfig:
    """Build a config from a (possibly sectioned) mapping.

    Tables are flattened; every leaf key must name a `SystemConfig` field.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table/object")
    flat = _flatten(raw)
    unknown = sorted(set(flat) - FIELD_NAMES)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(SystemConfig):
        if f.name not in flat:
            continue
        value = flat[f.name]
        if f.type in ("int",) and isinstance(value, float) and value.is_integer():
            value = int(value)
        if f.type == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{f.name} must be a number, got {value!r}")
            value = float(value)
        kwargs[f.name] = value
    try:
        return SystemConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> SystemConfig:
    """Read a JSON or TOML config file; the format is chosen by suffix."""
    path = Path(path)
    text = path.read_text()
    try:
        if path.suffix.lower() == ".toml":
            raw = tomllib.loads(text)
        else:
            raw = json.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_mapping(raw)


def rng_for(seed: int, *path: int):
    """Counter-derived random stream: the same (seed, path) always yields the same draws."""
    import numpy as np

    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *map(int, path)]))
