import os
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import yaml
from dotenv import load_dotenv

from errors import ConfigError
from gaussian_core import EPRSpec, db_to_r
from mbnla import FilterSpec
from teleporter import TeleporterConfig, unity_gain_phis

logger = logging.getLogger(__name__)

# Environment variables and defaults
THREADS_ENV = "TELEPORTSIM_THREADS"
CONFIG_FILE_ENV = "TELEPORTSIM_CONFIG_FILE"
LOG_LEVEL_ENV = "TELEPORTSIM_LOG_LEVEL"

SWEEP_AXES = ("phi", "g", "r_db", "efficiency")
RUN_MODES = ("analytic", "montecarlo")
MODE_ALIASES = {"analytic": "analytic", "montecarlo": "montecarlo", "mc": "montecarlo"}
MIN_MC_TRIALS = 100

DEFAULTS = {
    "teleporter.squeezing_db":   3.0,
    "teleporter.phi":            "unity",
    "teleporter.gain":           1.0,
    "teleporter.efficiency":     1.0,
    "teleporter.input.mean_x":   1.0,
    "teleporter.input.mean_y":   1.0,
    "teleporter.input.var_x":    1.0,
    "teleporter.input.var_y":    1.0,
    "filter.cutoff_sigma":       5.0,
    "run.mode":                  "analytic",
    "run.n_trials":              1_000_000,
    "run.seed":                  0,
    "run.bootstrap":             200,
    "channel.r_choi":            2.0,
}

OPTIONAL_KEYS = {
    "teleporter.squeezing_db_ax", "teleporter.squeezing_db_ay",
    "teleporter.squeezing_db_bx", "teleporter.squeezing_db_by",
    "teleporter.phi_x", "teleporter.phi_y",
    "filter.alpha_c",
    "sweep.axis", "sweep.start", "sweep.stop", "sweep.steps", "sweep.output",
}
KNOWN_KEYS = set(DEFAULTS) | OPTIONAL_KEYS


@dataclass(frozen=True)
class RawValue:
    value: Any
    line: Optional[int] = None


@dataclass(frozen=True)
class RunSettings:
    mode: str = "analytic"
    n_trials: int = 1_000_000
    seed: int = 0
    bootstrap: int = 200


@dataclass(frozen=True)
class SweepSpec:
    """One-dimensional sweep of `axis` over linspace(start, stop, steps)."""

    axis: str
    start: float
    stop: float
    steps: int
    output: Optional[str] = None

    def values(self):
        if self.steps == 1:
            return [self.start]
        step = (self.stop - self.start) / (self.steps - 1)
        return [self.start + i * step for i in range(self.steps)]


@dataclass(frozen=True)
class SimulationSettings:
    teleporter: TeleporterConfig
    filter: FilterSpec
    run: RunSettings
    r_choi: float
    sweep: Optional[SweepSpec] = None
    source: Optional[str] = None
    # "unity" phi is re-solved for every sweep point
    unity_phi: bool = False
    cutoff_sigma: Optional[float] = None
    raw: Mapping[str, RawValue] = field(default_factory=dict, repr=False, compare=False)


def load_environment(dotenv_path: Optional[str] = None) -> None:
    """Load a .env file into os.environ without overriding existing values."""
    load_dotenv(dotenv_path=dotenv_path, override=False)


def thread_count() -> int:
    """Shard parallelism cap from TELEPORTSIM_THREADS, else the CPU count."""
    raw = os.getenv(THREADS_ENV)
    if not raw:
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"expected a positive integer, got {raw!r}", key=THREADS_ENV)
    if value < 1:
        raise ConfigError(f"expected a positive integer, got {value}", key=THREADS_ENV)
    return value


def log_level(default: str = "WARNING") -> str:
    return os.getenv(LOG_LEVEL_ENV, default).upper()


def default_config_file() -> Optional[str]:
    return os.getenv(CONFIG_FILE_ENV) or None


def _flatten(data: Mapping, prefix: str = "") -> Dict[str, RawValue]:
    flat = {}
    for k, v in data.items():
        key = f"{prefix}{k}"
        if isinstance(v, Mapping):
            flat.update(_flatten(v, key + "."))
        else:
            flat[key] = RawValue(v)
    return flat


def parse_key_values(text: str, source: str = None) -> Dict[str, RawValue]:
    """
    Parse `key = value` lines. `#` starts a comment, blank lines are skipped
    and dotted keys name nested sections.
    """
    entries = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", line=lineno, source=source)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", line=lineno, source=source)
        if key in entries:
            raise ConfigError(f"duplicate key (first set on line {entries[key].line})",
                              key=key, line=lineno, source=source)
        entries[key] = RawValue(value, lineno)
    return entries


def read_config(path: str) -> Dict[str, RawValue]:
    """Read a key-value, YAML or JSON config file into flat dotted keys."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config file not found", source=str(path))
    text = p.read_text()
    if p.suffix in (".yml", ".yaml", ".json"):
        loader = yaml.safe_load if p.suffix in (".yml", ".yaml") else json.loads
        try:
            data = loader(text)
        except (yaml.YAMLError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot parse: {e}", source=str(path)) from e
        if not isinstance(data, Mapping):
            raise ConfigError("top level must be a mapping", source=str(path))
        return _flatten(data)
    return parse_key_values(text, source=str(path))


class _Reader:
    def __init__(self, entries: Mapping[str, RawValue], source: Optional[str]):
        self.entries = entries
        self.source = source

    def _error(self, key, message):
        line = self.entries[key].line if key in self.entries else None
        return ConfigError(message, key=key, line=line, source=self.source)

    def has(self, key):
        return key in self.entries

    def raw(self, key):
        if key in self.entries:
            return self.entries[key].value
        return DEFAULTS.get(key)

    def text(self, key) -> Optional[str]:
        value = self.raw(key)
        return None if value is None else str(value).strip()

    def number(self, key, low=None, high=None, low_open=False) -> Optional[float]:
        value = self.raw(key)
        if value is None:
            return None
        try:
            x = float(value)
        except (TypeError, ValueError):
            raise self._error(key, f"expected a number, got {value!r}")
        if not math.isfinite(x):
            raise self._error(key, f"expected a finite number, got {value!r}")
        if low is not None and (x < low or (low_open and x == low)):
            bound = ">" if low_open else ">="
            raise self._error(key, f"must be {bound} {low}, got {x}")
        if high is not None and x > high:
            raise self._error(key, f"must be <= {high}, got {x}")
        return x

    def integer(self, key, low=None, high=None) -> Optional[int]:
        value = self.raw(key)
        if value is None:
            return None
        try:
            x = int(str(value).strip())
        except ValueError:
            raise self._error(key, f"expected an integer, got {value!r}")
        if low is not None and x < low:
            raise self._error(key, f"must be >= {low}, got {x}")
        if high is not None and x > high:
            raise self._error(key, f"must be <= {high}, got {x}")
        return x


def _phi(reader: _Reader, key: str) -> Optional[float]:
    if not reader.has(key) and key != "teleporter.phi":
        return None
    if reader.text(key).lower() == "unity":
        return None
    return reader.number(key)


def build_settings(entries: Mapping[str, RawValue], source: str = None,
                   overrides: Mapping[str, Any] = None) -> SimulationSettings:
    """Validate flat config entries (plus CLI overrides) into SimulationSettings."""
    entries = dict(entries)
    for k, v in (overrides or {}).items():
        if v is not None:
            entries[k] = RawValue(v)

    for key, raw in entries.items():
        if key not in KNOWN_KEYS:
            raise ConfigError("unknown key", key=key, line=raw.line, source=source)

    reader = _Reader(entries, source)

    db = reader.number("teleporter.squeezing_db", low=0.0)
    r = {}
    for arm in ("ax", "ay", "bx", "by"):
        key = f"teleporter.squeezing_db_{arm}"
        r[arm] = db_to_r(reader.number(key, low=0.0) if reader.has(key) else db)
    epr = EPRSpec(r["ax"], r["ay"], r["bx"], r["by"])

    g = reader.number("teleporter.gain", low=1.0)
    efficiency = reader.number("teleporter.efficiency", low=0.0, high=1.0, low_open=True)
    input_mean = (reader.number("teleporter.input.mean_x"), reader.number("teleporter.input.mean_y"))
    input_var = (reader.number("teleporter.input.var_x", low=1.0), reader.number("teleporter.input.var_y", low=1.0))

    phi_common = _phi(reader, "teleporter.phi")
    phi_x = _phi(reader, "teleporter.phi_x") if reader.has("teleporter.phi_x") else phi_common
    phi_y = _phi(reader, "teleporter.phi_y") if reader.has("teleporter.phi_y") else phi_common
    unity = phi_x is None or phi_y is None

    base = TeleporterConfig(epr, 1.0, 1.0, g, efficiency, input_mean, input_var)
    if unity:
        ux, uy = unity_gain_phis(base)
        phi_x = ux if phi_x is None else phi_x
        phi_y = uy if phi_y is None else phi_y
    teleporter_cfg = base.replace(phi_x=phi_x, phi_y=phi_y)

    mode = MODE_ALIASES.get(reader.text("run.mode").lower())
    if mode is None:
        raise reader._error("run.mode", f"must be one of {RUN_MODES}, got {reader.text('run.mode')!r}")
    run = RunSettings(
        mode=mode,
        n_trials=reader.integer("run.n_trials", low=1),
        seed=reader.integer("run.seed", low=0, high=2 ** 64 - 1),
        bootstrap=reader.integer("run.bootstrap", low=2),
    )
    if mode == "montecarlo" and run.n_trials < MIN_MC_TRIALS:
        raise reader._error("run.n_trials", f"montecarlo mode needs at least {MIN_MC_TRIALS} trials")

    cutoff_sigma = None
    if reader.has("filter.alpha_c"):
        alpha_c = reader.number("filter.alpha_c", low=0.0)
    else:
        cutoff_sigma = reader.number("filter.cutoff_sigma", low=0.0, low_open=True)
        alpha_c = cutoff_for(teleporter_cfg, g, cutoff_sigma)

    sweep = None
    if reader.has("sweep.axis"):
        axis = reader.text("sweep.axis")
        if axis not in SWEEP_AXES:
            raise reader._error("sweep.axis", f"must be one of {SWEEP_AXES}, got {axis!r}")
        for key in ("sweep.start", "sweep.stop", "sweep.steps"):
            if not reader.has(key):
                raise ConfigError("required when sweep.axis is set", key=key, source=source)
        sweep = SweepSpec(
            axis=axis,
            start=reader.number("sweep.start"),
            stop=reader.number("sweep.stop"),
            steps=reader.integer("sweep.steps", low=2),
            output=reader.text("sweep.output"),
        )

    settings = SimulationSettings(
        teleporter=teleporter_cfg,
        filter=FilterSpec(g, alpha_c),
        run=run,
        r_choi=reader.number("channel.r_choi", low=0.0, low_open=True),
        sweep=sweep,
        source=source,
        unity_phi=unity,
        cutoff_sigma=cutoff_sigma,
        raw=entries,
    )
    logger.debug("settings from %s: %s", source or "defaults", settings)
    return settings


def cutoff_for(cfg: TeleporterConfig, g: float, cutoff_sigma: float) -> float:
    # local import: montecarlo imports this module
    from montecarlo import suggest_cutoff
    return suggest_cutoff(cfg, g, cutoff_sigma)


def load_settings(path: Optional[str] = None, overrides: Mapping[str, Any] = None) -> SimulationSettings:
    """
    Load settings from `path`, falling back to TELEPORTSIM_CONFIG_FILE and then
    to the built-in defaults.
    """
    path = path or default_config_file()
    entries = read_config(path) if path else {}
    return build_settings(entries, source=path, overrides=overrides)
