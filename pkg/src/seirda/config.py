"""Run configuration and its flat ``key = value`` file format.

Every key has a default. Lines starting with ``#`` are comments. Values:

* numbers, optionally written ``log(1.3)`` for log-scale standard deviations
* ISO dates (``2020-03-06``) or ``none``
* comma-separated lists for ``spinup_beta_grid``
* ``start/end`` date pairs separated by commas for ``emergency_periods``
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import math
import re
import typing
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .model import K_RATIO, SYMPTOMATIC_FRACTION, TAU_H_SWITCH_DATE

DEFAULT_BETA_GRID = tuple(round(0.05 * i, 2) for i in range(1, 41))
CI_METHODS = ("sd", "percentile")


@dataclass(frozen=True)
class RunConfig:
    region: str = "tokyo"
    population: float | None = None
    start_date: dt.date | None = None
    end_date: dt.date | None = None
    ensemble_size: int = 50
    obs_sd: float = math.log(1.3)
    k_ratio: float = K_RATIO
    symptomatic_fraction: float = SYMPTOMATIC_FRACTION
    rho: float = 1.05
    alpha: float = 0.05
    seed: int = 0
    jitter: float = 0.1
    # Initial spread of the ensemble around the spin-up state (log scale).
    init_log_sd: float = 0.2
    # No published value exists for the initial log beta_s spread; 0.1 is a guess.
    init_log_beta_sd: float = 0.1
    spinup_days: int = 14
    spinup_seed_e: float = 10.0
    spinup_seed_ia: float = 10.0
    spinup_seed_is: float = 1.0
    spinup_beta_grid: tuple[float, ...] = DEFAULT_BETA_GRID
    floor: float = 1e-3
    substep: float = 0.1
    ci_method: str = "sd"
    tau_h_switch_date: dt.date = TAU_H_SWITCH_DATE
    # Plot shading only; never used in computations.
    emergency_periods: tuple[tuple[dt.date, dt.date], ...] = ()

    def __post_init__(self):
        problems = []
        if self.population is not None and not self.population > 0:
            problems.append(f"population must be > 0, got {self.population}")
        if self.start_date and self.end_date and not self.start_date < self.end_date:
            problems.append(f"start_date {self.start_date} must precede end_date {self.end_date}")
        if self.ensemble_size < 2:
            problems.append(f"ensemble_size must be >= 2, got {self.ensemble_size}")
        if not self.obs_sd > 0:
            problems.append(f"obs_sd must be > 0, got {self.obs_sd}")
        if not 0 < self.k_ratio <= 1:
            problems.append(f"k_ratio must lie in (0, 1], got {self.k_ratio}")
        if not 0 < self.symptomatic_fraction <= 1:
            problems.append(f"symptomatic_fraction must lie in (0, 1], got {self.symptomatic_fraction}")
        if not self.rho >= 1:
            problems.append(f"rho must be >= 1, got {self.rho}")
        if not 0 < self.alpha < 1:
            problems.append(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.jitter < 0 or self.init_log_sd < 0 or self.init_log_beta_sd < 0:
            problems.append("jitter and initial spreads must be >= 0")
        if self.spinup_days < 1:
            problems.append(f"spinup_days must be >= 1, got {self.spinup_days}")
        if not self.spinup_beta_grid or any(b <= 0 for b in self.spinup_beta_grid):
            problems.append("spinup_beta_grid must be a non-empty list of positive rates")
        if not self.floor > 0:
            problems.append(f"floor must be > 0, got {self.floor}")
        if self.ci_method not in CI_METHODS:
            problems.append(f"ci_method must be one of {CI_METHODS}, got {self.ci_method!r}")
        if problems:
            raise ConfigError("; ".join(problems))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            out[f.name] = _jsonable(getattr(self, f.name))
        return out


def _jsonable(value):
    if isinstance(value, dt.date):
        return value.isoformat()
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    return value


_LOG_RE = re.compile(r"^log\(\s*([^)]+?)\s*\)$")


def parse_number(text: str) -> float:
    m = _LOG_RE.match(text.strip())
    if m:
        return math.log(float(m.group(1)))
    return float(text)


def _parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip())


def _parse_value(name: str, hint, text: str):
    text = text.strip()
    if name == "emergency_periods":
        periods = []
        for item in filter(None, (s.strip() for s in text.split(","))):
            start, _, end = item.partition("/")
            periods.append((_parse_date(start), _parse_date(end)))
        return tuple(periods)
    if name == "spinup_beta_grid":
        return tuple(parse_number(s) for s in text.split(",") if s.strip())
    optional = type(None) in typing.get_args(hint)
    if optional and text.lower() == "none":
        return None
    base = hint
    if optional:
        base = next(a for a in typing.get_args(hint) if a is not type(None))
    if base is int:
        return int(text)
    if base is float:
        return parse_number(text)
    if base is dt.date:
        return _parse_date(text)
    return text


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    hints = typing.get_type_hints(RunConfig)
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        if key not in hints:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _parse_value(key, hints[key], value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    """Read a config file; a bare preset name (``tokyo``) loads the bundled preset."""
    p = Path(path)
    if not p.exists() and str(path) in preset_names():
        return load_preset(str(path))
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config(text, str(path))


def preset_names() -> list[str]:
    folder = resources.files("seirda") / "presets"
    return sorted(p.name[:-4] for p in folder.iterdir() if p.name.endswith(".cfg"))


def load_preset(name: str) -> RunConfig:
    res = resources.files("seirda") / "presets" / f"{name}.cfg"
    if not res.is_file():
        raise ConfigError(f"no preset named {name!r}; available: {', '.join(preset_names())}")
    return parse_config(res.read_text(encoding="utf-8"), f"preset:{name}")


def format_config(cfg: RunConfig) -> str:
    """Serialize to the same flat format; ``parse_config`` reads it back unchanged."""
    lines = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if value is None:
            text = "none"
        elif f.name == "emergency_periods":
            text = ", ".join(f"{a.isoformat()}/{b.isoformat()}" for a, b in value)
        elif f.name == "spinup_beta_grid":
            text = ", ".join(repr(float(v)) for v in value)
        elif isinstance(value, dt.date):
            text = value.isoformat()
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"
