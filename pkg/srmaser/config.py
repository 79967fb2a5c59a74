"""
Configuration for srmaser.

Two layers:
    Settings    runtime knobs from the environment (a .env file is honoured)
    RunConfig   a plain-text ``key = value`` run description

Run config example::

    # Breeze maser, strong pumping
    units = angular
    preset = breeze2018
    temperature = 0.025
    eta_over_gamma = 1000

    sweep.axis1.name = eta_over_gamma
    sweep.axis1.scale = log
    sweep.axis1.min = 1e-3
    sweep.axis1.max = 1e5
    sweep.axis1.points = 17
    sweep.outputs = photon_number, linewidth, regime
"""

import math
import os
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from srmaser.cache import make_key
from srmaser.errors import ConfigError, ParameterError, UnknownPresetError
from srmaser.logger_config import get_logger
from srmaser.model import FREQUENCY_FIELDS, RATE_FIELDS, SystemParams, load_preset, make_params

logger = get_logger(__name__)

TWO_PI = 2.0 * math.pi

PARAM_KEYS = tuple(SystemParams.model_fields)
UNIT_KEYS = set(FREQUENCY_FIELDS) | set(RATE_FIELDS) | {"detuning", "fig2.chi_inh", "fig2.center"}
VIRTUAL_AXES = ("eta_over_gamma", "detuning")
AXIS_UNITS = ("absolute", "gamma", "chi", "kappa_c", "hertz")
OUTPUTS = ("photon_number", "linewidth", "inversion", "dicke", "spectrum", "regime")

_AXIS_FIELDS = ("name", "scale", "min", "max", "points", "unit")
_FIG2_FIELDS = ("n_classes", "chi_inh", "span_sigmas", "eta_over_gamma", "split_factor",
                "split_spread_hz", "center")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class Settings(BaseModel):
    """Runtime settings read from SRMASER_* environment variables."""

    model_config = ConfigDict(frozen=True)

    log_level: str = "INFO"
    log_dir: Optional[str] = "logs"
    workers: int = Field(default=1, ge=1)
    ode_rtol: float = Field(default=1e-8, gt=0, le=1e-2)
    newton_tol: float = Field(default=1e-10, gt=0)
    cache_size: int = Field(default=256, ge=1)

    @classmethod
    def from_env(cls) -> "Settings":
        values = {}
        for name in cls.model_fields:
            raw = os.getenv(f"SRMASER_{name.upper()}")
            if raw is not None and raw != "":
                values[name] = raw
        if values.get("log_dir", "").lower() in ("none", "off"):
            values["log_dir"] = None
        try:
            return cls(**values)
        except ValidationError as exc:
            raise ConfigError(f"invalid environment settings: {exc}") from exc


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Load .env once and return the process settings."""
    load_dotenv()
    return Settings.from_env()


class SweepAxis(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    scale: str = "linear"
    min: float
    max: float
    points: int
    unit: str = "absolute"

    @field_validator("name")
    @classmethod
    def _known_name(cls, value: str) -> str:
        if value not in PARAM_KEYS and value not in VIRTUAL_AXES:
            raise ValueError(f"unknown sweep parameter '{value}'")
        return value

    @model_validator(mode="after")
    def _check(self) -> "SweepAxis":
        if self.scale not in ("linear", "log"):
            raise ValueError(f"scale must be linear or log, got '{self.scale}'")
        if self.points < 2:
            raise ValueError("points must be >= 2")
        if self.unit not in AXIS_UNITS:
            raise ValueError(f"unit must be one of {', '.join(AXIS_UNITS)}")
        if self.scale == "log" and (self.min <= 0 or self.max <= 0):
            raise ValueError("log axes require positive bounds")
        return self

    def raw_values(self) -> np.ndarray:
        """Grid values before the unit multiplier."""
        if self.scale == "log":
            return np.logspace(math.log10(self.min), math.log10(self.max), self.points)
        return np.linspace(self.min, self.max, self.points)

    def multiplier(self, params: SystemParams) -> float:
        return {
            "absolute": 1.0,
            "gamma": params.gamma,
            "chi": params.chi,
            "kappa_c": params.kappa_c,
            "hertz": TWO_PI,
        }[self.unit]

    def values(self, params: SystemParams) -> np.ndarray:
        return self.raw_values() * self.multiplier(params)


class SweepSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    axis1: SweepAxis
    axis2: Optional[SweepAxis] = None
    outputs: Tuple[str, ...] = ("photon_number", "regime")
    bidirectional: bool = False

    @field_validator("outputs")
    @classmethod
    def _known_outputs(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        unknown = [o for o in value if o not in OUTPUTS]
        if unknown:
            raise ValueError(f"unknown outputs: {', '.join(unknown)}")
        if not value:
            raise ValueError("at least one output is required")
        return value

    @model_validator(mode="after")
    def _distinct_axes(self) -> "SweepSpec":
        if self.axis2 is not None and self.axis2.name == self.axis1.name:
            raise ValueError("sweep axes must differ")
        return self


class Fig2Options(BaseModel):
    """Sub-ensemble spectrum study settings (angular units)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_classes: int = Field(default=50, ge=1, le=100)
    chi_inh: float = Field(default=4e6, gt=0)
    span_sigmas: float = Field(default=2.5, gt=0)
    eta_over_gamma: Tuple[float, ...] = tuple(float(v) for v in np.logspace(-3, 5, 9))
    split_factor: int = Field(default=0, ge=0)
    split_spread_hz: float = Field(default=2e-3, ge=0)
    center: Optional[float] = None


class RunConfig(BaseModel):
    """A fully resolved run description."""

    model_config = ConfigDict(frozen=True)

    units: str = "angular"
    preset: Optional[str] = None
    params: SystemParams
    sweep: Optional[SweepSpec] = None
    fig2: Fig2Options = Fig2Options()

    def canonical(self) -> Dict:
        return self.model_dump(mode="json")

    @property
    def config_hash(self) -> str:
        return make_key(self.canonical())


def _parse_lines(lines: Iterable[Tuple[str, str]]) -> Dict[str, Tuple[str, str]]:
    entries: Dict[str, Tuple[str, str]] = {}
    for where, raw in lines:
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{where}: expected 'key = value', got '{text}'")
        key, value = (part.strip() for part in text.split("=", 1))
        if not key or value == "":
            raise ConfigError(f"{where}: empty key or value")
        entries[key] = (value, where)
    return entries


def parse_config_text(text: str, overrides: Iterable[str] = ()) -> Dict[str, Tuple[str, str]]:
    """
    Split config text into ``{key: (raw_value, location)}``.

    Overrides use the same grammar and are applied after the file.
    """
    numbered = [(f"line {i}", line) for i, line in enumerate(text.splitlines(), start=1)]
    numbered += [(f"override {i}", line) for i, line in enumerate(overrides, start=1)]
    return _parse_lines(numbered)


def _number(key: str, value: str, where: str) -> float:
    try:
        number = float(value)
    except ValueError:
        raise ConfigError(f"{where}: '{key}' expects a number, got '{value}'") from None
    if not math.isfinite(number):
        raise ConfigError(f"{where}: '{key}' must be finite")
    return number


def _boolean(key: str, value: str, where: str) -> bool:
    lowered = value.lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ConfigError(f"{where}: '{key}' expects a boolean, got '{value}'")


def _number_list(key: str, value: str, where: str) -> Tuple[float, ...]:
    return tuple(_number(key, item.strip(), where) for item in value.split(",") if item.strip())


def _is_known(key: str) -> bool:
    if key in PARAM_KEYS or key in ("units", "preset", "eta_over_gamma", "detuning"):
        return True
    parts = key.split(".")
    if parts[0] == "sweep":
        if len(parts) == 3 and parts[1] in ("axis1", "axis2") and parts[2] in _AXIS_FIELDS:
            return True
        return len(parts) == 2 and parts[1] in ("outputs", "bidirectional")
    if parts[0] == "fig2":
        return len(parts) == 2 and parts[1] in _FIG2_FIELDS
    return False


def build_config(entries: Dict[str, Tuple[str, str]], preset: Optional[str] = None) -> RunConfig:
    """
    Resolve parsed entries into a RunConfig.

    Order: preset values, explicit parameter keys, then ``eta_over_gamma`` and
    ``detuning`` which are relative to the resolved gamma and omega_c.

    Raises:
        ConfigError: unknown key, missing units, invalid values
    """
    for key, (_value, where) in entries.items():
        if not _is_known(key):
            raise ConfigError(f"{where}: unknown key '{key}'")

    units = entries.get("units", (None, None))[0]
    if units is not None and units not in ("angular", "hertz"):
        raise ConfigError(f"{entries['units'][1]}: units must be angular or hertz, got '{units}'")
    needs_units = [k for k in entries if k in UNIT_KEYS]
    if needs_units and units is None:
        first = entries[needs_units[0]][1]
        raise ConfigError(f"{first}: 'units = angular|hertz' is required when '{needs_units[0]}' is given")
    factor = TWO_PI if units == "hertz" else 1.0

    def scaled(key: str) -> float:
        value, where = entries[key]
        number = _number(key, value, where)
        return number * factor if key in UNIT_KEYS else number

    preset_name = preset or entries.get("preset", (None, None))[0]
    values: Dict[str, float] = {}
    if preset_name:
        try:
            values.update(load_preset(preset_name).params.model_dump())
        except UnknownPresetError as exc:
            raise ConfigError(str(exc)) from exc

    for key in PARAM_KEYS:
        if key in entries:
            values[key] = scaled(key)
    if "omega_s" not in values and "omega_c" in values:
        values["omega_s"] = values["omega_c"]
    if "detuning" in entries:
        if "omega_c" not in values:
            raise ConfigError(f"{entries['detuning'][1]}: 'detuning' needs omega_c or a preset")
        values["omega_s"] = values["omega_c"] + scaled("detuning")
    if "eta_over_gamma" in entries:
        value, where = entries["eta_over_gamma"]
        values["eta"] = _number("eta_over_gamma", value, where) * values.get("gamma", SystemParams.model_fields["gamma"].default)

    missing = [k for k in ("omega_c", "kappa_c", "n_spins", "g") if k not in values]
    if missing:
        raise ConfigError(f"missing parameters: {', '.join(missing)} (set them or choose a preset)")
    try:
        params = make_params(**values)
    except ParameterError as exc:
        raise ConfigError(f"invalid parameters: {exc}") from exc

    try:
        sweep = _build_sweep(entries)
        fig2 = _build_fig2(entries, factor)
        config = RunConfig(units=units or "angular", preset=preset_name, params=params, sweep=sweep, fig2=fig2)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    logger.debug(f"Config resolved | preset={preset_name} | hash={config.config_hash}")
    return config


def _build_sweep(entries: Dict[str, Tuple[str, str]]) -> Optional[SweepSpec]:
    axes = {}
    for axis in ("axis1", "axis2"):
        fields = {}
        for name in _AXIS_FIELDS:
            key = f"sweep.{axis}.{name}"
            if key not in entries:
                continue
            value, where = entries[key]
            if name in ("name", "scale", "unit"):
                fields[name] = value
            elif name == "points":
                points = _number(key, value, where)
                if points != int(points):
                    raise ConfigError(f"{where}: '{key}' must be an integer")
                fields[name] = int(points)
            else:
                fields[name] = _number(key, value, where)
        if fields:
            axes[axis] = SweepAxis(**fields)

    if "axis1" not in axes:
        if "axis2" in axes or any(k.startswith("sweep.") for k in entries):
            raise ConfigError("sweep keys given without sweep.axis1")
        return None

    spec = {"axis1": axes["axis1"], "axis2": axes.get("axis2")}
    if "sweep.outputs" in entries:
        value, _where = entries["sweep.outputs"]
        spec["outputs"] = tuple(item.strip() for item in value.split(",") if item.strip())
    if "sweep.bidirectional" in entries:
        value, where = entries["sweep.bidirectional"]
        spec["bidirectional"] = _boolean("sweep.bidirectional", value, where)
    return SweepSpec(**spec)


def _build_fig2(entries: Dict[str, Tuple[str, str]], factor: float) -> Fig2Options:
    fields = {}
    for name in _FIG2_FIELDS:
        key = f"fig2.{name}"
        if key not in entries:
            continue
        value, where = entries[key]
        if name == "eta_over_gamma":
            fields[name] = _number_list(key, value, where)
        elif name in ("n_classes", "split_factor"):
            number = _number(key, value, where)
            if number != int(number):
                raise ConfigError(f"{where}: '{key}' must be an integer")
            fields[name] = int(number)
        elif key in UNIT_KEYS:
            fields[name] = _number(key, value, where) * factor
        else:
            fields[name] = _number(key, value, where)
    return Fig2Options(**fields)


def load_config(path: Optional[str] = None, overrides: Iterable[str] = (),
                preset: Optional[str] = None) -> RunConfig:
    """
    Read a run config file (optional) plus ``key=value`` overrides.

    Args:
        path: Config file; None starts from an empty file
        overrides: Extra ``key=value`` lines applied after the file
        preset: Preset name taking precedence over a ``preset`` key

    Returns:
        Resolved RunConfig.
    """
    text = ""
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                text = f.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config '{path}': {exc}") from exc
    return build_config(parse_config_text(text, list(overrides)), preset=preset)


def config_hash(config: RunConfig) -> str:
    """md5 of the canonical JSON of a resolved config."""
    return config.config_hash
