"""Reference reproduction number, twin experiments and parameter sweeps."""
from __future__ import annotations

import dataclasses
import datetime as dt
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .assimilator import run_assimilation, spinup_seed
from .config import RunConfig, parse_number
from .dataio import ObservationSeries, write_analysis, write_table
from .errors import ConfigError, DataError, SeirdaError, StateCollapseError
from .integrator import simulate
from .model import (
    COMPARTMENTS,
    K_RATIO,
    SYMPTOMATIC_FRACTION,
    Compartments,
    ParamSchedule,
    effective_rt,
    estimate_removal_rates,
    smooth7,
)

GENERATION_TIME_DAYS = 5.0
REPORTING_INTERVAL_DAYS = 7.0
DEFAULT_BURN_IN = 60
# Large enough that susceptibles stay near N for a whole 300-day twin run.
TWIN_POPULATION = 1e18


def toyokeizai_rt(new_cases) -> np.ndarray:
    """Week-over-week case ratio raised to generation time / reporting interval.

    ``Rt(t) = (sum cases[t-6..t] / sum cases[t-13..t-7]) ** (5 / 7)``. The
    first 13 days, and days whose earlier week sums to zero, are NaN.
    """
    cases = np.asarray(new_cases, dtype=float)
    if cases.ndim != 1:
        raise ValueError("new_cases must be one-dimensional")
    if np.any(cases[np.isfinite(cases)] < 0):
        raise ValueError("new_cases must be nonnegative")
    exponent = GENERATION_TIME_DAYS / REPORTING_INTERVAL_DAYS
    out = np.full(cases.size, np.nan)
    for t in range(13, cases.size):
        recent = cases[t - 6:t + 1].sum()
        earlier = cases[t - 13:t - 6].sum()
        if earlier > 0 and np.isfinite(recent) and np.isfinite(earlier):
            out[t] = (recent / earlier) ** exponent
    return out


@dataclass(frozen=True)
class TwinSpec:
    """Known truth for a synthetic (twin) experiment.

    ``beta_s[t]`` drives the truth from day ``t`` to ``t + 1``; its length is
    the run length in days.
    """

    beta_s: np.ndarray
    initial: Compartments
    obs_sd: float = math.log(1.3)
    seed: int = 0
    start_date: dt.date = dt.date(2020, 3, 6)
    gamma_H: float = 0.1
    gamma_D: float = 0.002
    k_ratio: float = K_RATIO
    symptomatic_fraction: float = SYMPTOMATIC_FRACTION

    def __post_init__(self):
        beta = np.array(self.beta_s, dtype=float)
        if beta.ndim != 1 or beta.size < 2:
            raise ValueError("beta_s trajectory must cover at least two days")
        if np.any(~np.isfinite(beta)) or np.any(beta <= 0):
            raise ValueError("true beta_s must be finite and > 0")
        if self.obs_sd < 0:
            raise ValueError("obs_sd must be >= 0")
        beta.setflags(write=False)
        object.__setattr__(self, "beta_s", beta)

    @property
    def length(self) -> int:
        return self.beta_s.size

    @property
    def dates(self) -> tuple:
        return tuple(self.start_date + dt.timedelta(days=i) for i in range(self.length))

    def schedule(self, k_ratio: float | None = None,
                 symptomatic_fraction: float | None = None) -> ParamSchedule:
        """Constant removal rates over the run; other rates from the given fractions."""
        return ParamSchedule.build(
            self.start_date,
            np.full(self.length, self.gamma_H),
            np.full(self.length, self.gamma_D),
            k_ratio=self.k_ratio if k_ratio is None else k_ratio,
            symptomatic_fraction=(self.symptomatic_fraction if symptomatic_fraction is None
                                  else symptomatic_fraction),
        )


def step_beta(length: int, before: float, after: float, step_day: int) -> np.ndarray:
    beta = np.full(length, float(before))
    beta[step_day:] = after
    return beta


def default_twin_spec(cfg: RunConfig | None = None, length: int = 300,
                      beta_s: Sequence[float] | None = None, **overrides) -> TwinSpec:
    """Twin with beta_s stepping 0.5 -> 0.25 halfway through.

    The true initial state is the spin-up seed of ``cfg`` run for
    ``cfg.spinup_days`` at the first true ``beta_s``, so the filter's own
    spin-up can in principle find it.
    """
    cfg = cfg or RunConfig(population=TWIN_POPULATION)
    if cfg.population is None:
        cfg = cfg.replace(population=TWIN_POPULATION)
    beta = step_beta(length, 0.5, 0.25, length // 2) if beta_s is None else np.asarray(beta_s, float)
    start = overrides.pop("start_date", cfg.start_date or dt.date(2020, 3, 6))
    probe = TwinSpec(beta, Compartments.seeded(cfg.population, E=1.0), start_date=start,
                     k_ratio=cfg.k_ratio, symptomatic_fraction=cfg.symptomatic_fraction)
    probe = dataclasses.replace(probe, **overrides)
    if "initial" not in overrides:
        p0 = probe.schedule().params_on(start, beta_s=float(beta[0]))
        final = simulate(spinup_seed(cfg), p0, cfg.spinup_days, cfg.substep)[-1]
        probe = dataclasses.replace(probe, initial=Compartments.from_array(final, cfg.population))
    return probe


TWIN_KEYS = ("length", "beta_s", "obs_sd", "seed", "start_date", "gamma_H", "gamma_D",
             "population", "initial")


def parse_beta_trajectory(text: str, length: int) -> np.ndarray:
    """``0.5`` (constant) or ``0.5@0, 0.25@150`` (value from the given day on)."""
    pieces = [p.strip() for p in text.split(",") if p.strip()]
    if len(pieces) == 1 and "@" not in pieces[0]:
        return np.full(length, parse_number(pieces[0]))
    beta = np.full(length, np.nan)
    for piece in pieces:
        value, sep, day = piece.partition("@")
        if not sep:
            raise ValueError(f"expected value@day, got {piece!r}")
        beta[int(day):] = parse_number(value)
    if np.isnan(beta[0]):
        raise ValueError("the beta_s trajectory must start at day 0")
    return beta


def parse_twin_spec(text: str, cfg: RunConfig | None = None, source: str = "<twin>") -> tuple:
    """Read a flat ``key = value`` twin description.

    Returns ``(spec, cfg)`` where ``cfg`` has the twin's population and
    start date so the filter runs in the same world as the truth. Unset keys
    fall back to :func:`default_twin_spec`; ``seed`` defaults to ``cfg.seed``.
    """
    cfg = cfg or RunConfig()
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or key not in TWIN_KEYS:
            raise ConfigError(f"{source}:{lineno}: expected one of {', '.join(TWIN_KEYS)} as 'key = value'")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = value
    try:
        length = int(raw.pop("length", 300))
        beta = parse_beta_trajectory(raw.pop("beta_s"), length) if "beta_s" in raw else None
        population = parse_number(raw.pop("population", repr(TWIN_POPULATION)))
        start = dt.date.fromisoformat(raw.pop("start_date", "2020-03-06"))
        overrides = {"seed": int(raw.pop("seed", cfg.seed)), "start_date": start}
        for key in ("obs_sd", "gamma_H", "gamma_D"):
            if key in raw:
                overrides[key] = parse_number(raw.pop(key))
        if "initial" in raw:
            counts = {}
            for item in raw.pop("initial").split(","):
                name, _, value = item.partition("=")
                counts[name.strip()] = parse_number(value)
            overrides["initial"] = Compartments.seeded(population, **counts)
        cfg = cfg.replace(population=population, start_date=None, end_date=None)
        return default_twin_spec(cfg, length=length, beta_s=beta, **overrides), cfg
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


class TwinTruth(NamedTuple):
    dates: tuple
    compartments: np.ndarray  # days x 9, COMPARTMENTS order
    beta_s: np.ndarray
    rt: np.ndarray


class TwinData(NamedTuple):
    observations: ObservationSeries
    truth: TwinTruth


def generate_twin(spec: TwinSpec, sched: ParamSchedule | None = None,
                  substep: float = 0.1) -> TwinData:
    """Integrate the truth daily and observe H, R, D with log-normal noise.

    Observations are ``X * exp(sd * z)``; the cumulative R and D are then
    replaced by running maxima. ``new_cases`` is the noise-free daily inflow
    into H (the integral of ``tau_H * Is`` over each day, equal to the
    combined increase of H, R and D); the first day is missing.
    """
    sched = sched or spec.schedule()
    dates = spec.dates
    params = [sched.params_on(d, beta_s=float(b)) for d, b in zip(dates[:-1], spec.beta_s[:-1])]
    traj = simulate(spec.initial, params, spec.length - 1, substep)
    if not (np.all(np.isfinite(traj)) and np.all(traj[:, 0] > 0) and np.all(traj >= 0)):
        raise StateCollapseError("twin truth left the admissible region")

    rng = np.random.default_rng(spec.seed)
    z = rng.standard_normal((spec.length, 3))
    observed = traj[:, [4, 5, 6]] * np.exp(spec.obs_sd * z)
    observed[:, 1] = np.maximum.accumulate(observed[:, 1])
    observed[:, 2] = np.maximum.accumulate(observed[:, 2])

    inflow = np.full(spec.length, np.nan)
    inflow[1:] = np.diff(traj[:, 4]) + np.diff(traj[:, 5]) + np.diff(traj[:, 6])
    obs = ObservationSeries("twin", dates, observed[:, 0], observed[:, 1], observed[:, 2],
                            np.maximum(inflow, 0.0, where=np.isfinite(inflow), out=inflow))
    rt = np.array([effective_rt([b], sched.params_on(d))[0] for d, b in zip(dates, spec.beta_s)])
    return TwinData(obs, TwinTruth(dates, traj, spec.beta_s.copy(), rt))


@dataclass
class TwinScore:
    burn_in: int
    log_rmse: dict
    coverage68: dict
    coverage95: dict
    beta_rel_error: np.ndarray
    beta_within_10pct: float
    rt_coverage68: float
    rt_coverage95: float

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["beta_rel_error"] = [float(v) for v in self.beta_rel_error]
        return out


def score_twin(records: Sequence, truth: TwinTruth, true_beta_s=None,
               burn_in: int = DEFAULT_BURN_IN) -> TwinScore:
    """Compare analysis records with the twin truth after ``burn_in`` days."""
    rec_dates = [r.date for r in records]
    if rec_dates != list(truth.dates):
        raise DataError("records and truth are not aligned on the same dates")
    beta_true = np.asarray(truth.beta_s if true_beta_s is None else true_beta_s, dtype=float)
    if beta_true.size != len(records):
        raise DataError("true beta_s trajectory does not match the record count")
    if not 0 <= burn_in < len(records):
        raise ValueError(f"burn_in must lie in [0, {len(records)}), got {burn_in}")

    post = records[burn_in:]
    comps = truth.compartments[burn_in:]
    log_rmse, cov68, cov95 = {}, {}, {}
    for j, name in enumerate(COMPARTMENTS[1:], start=1):
        true = comps[:, j]
        summ = [r.summaries[name] for r in post]
        est = np.array([s.mean for s in summ])
        log_rmse[name] = float(np.sqrt(np.mean((np.log(est) - np.log(true)) ** 2)))
        cov68[name] = _coverage(summ, true, "lo68", "hi68")
        cov95[name] = _coverage(summ, true, "lo95", "hi95")

    beta_est = np.array([r.beta_s_mean for r in post])
    rel = (beta_est - beta_true[burn_in:]) / beta_true[burn_in:]
    rt_summ = [r.rt for r in post]
    rt_true = truth.rt[burn_in:]
    return TwinScore(
        burn_in=burn_in,
        log_rmse=log_rmse,
        coverage68=cov68,
        coverage95=cov95,
        beta_rel_error=rel,
        beta_within_10pct=float(np.mean(np.abs(rel) <= 0.10)),
        rt_coverage68=_coverage(rt_summ, rt_true, "lo68", "hi68"),
        rt_coverage95=_coverage(rt_summ, rt_true, "lo95", "hi95"),
    )


def _coverage(summaries, truth, lo, hi) -> float:
    lows = np.array([getattr(s, lo) for s in summaries])
    highs = np.array([getattr(s, hi) for s in summaries])
    return float(np.mean((lows <= truth) & (truth <= highs)))


# --- sweeps -----------------------------------------------------------------

class AxisValue(NamedTuple):
    label: str
    value: float


AXES = {
    "k": "k_ratio",
    "sd": "obs_sd",
    "sympfrac": "symptomatic_fraction",
}


def default_axis_values(axis: str) -> list[AxisValue]:
    if axis == "k":
        return [AxisValue(str(v), v) for v in (0.1, 0.3, 0.58, 0.8, 1.0)]
    if axis == "sd":
        return [AxisValue(f"log{b}", math.log(b)) for b in (1.1, 1.3, 1.5, 2.0, 2.5)]
    if axis == "sympfrac":
        return [AxisValue(str(v), v) for v in (0.83, 0.70, 0.50)]
    raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {', '.join(AXES)}")


def parse_axis_values(axis: str, text: str) -> list[AxisValue]:
    """Values from a comma list; ``sd`` entries may be ``log1.3`` or ``log(1.3)``."""
    if axis not in AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {', '.join(AXES)}")
    out = []
    for item in (s.strip() for s in text.split(",")):
        if not item:
            continue
        if item.startswith("log") and not item.startswith("log("):
            value = math.log(float(item[3:]))
        else:
            value = parse_number(item)
        out.append(AxisValue(item, value))
    if not out:
        raise ConfigError("no sweep values given")
    return out


class SweepResult(NamedTuple):
    axis: str
    values: list
    records: dict  # label -> list of AnalysisRecord
    files: list
    comparison: Path | None


def _schedule_for(cfg: RunConfig, start: dt.date, gamma_H, gamma_D) -> ParamSchedule:
    return ParamSchedule.build(start, gamma_H, gamma_D, k_ratio=cfg.k_ratio,
                               symptomatic_fraction=cfg.symptomatic_fraction,
                               tau_H_switch_date=cfg.tau_h_switch_date)


def _run_one(cfg: RunConfig, obs: ObservationSeries, rates, keep_members: bool):
    sched = None
    if rates is not None:
        start = cfg.start_date or obs.start_date
        offset = (start - rates[0]).days
        n = ((cfg.end_date or obs.end_date) - start).days + 1
        sched = _schedule_for(cfg, start, rates[1][offset:offset + n], rates[2][offset:offset + n])
    return run_assimilation(cfg, obs, sched, keep_members=keep_members)


def sweep(template: RunConfig, axis: str, obs: ObservationSeries,
          values: Sequence[AxisValue] | None = None, out_dir=None,
          rates: tuple | None = None, jobs: int = 1, keep_members: bool = False) -> SweepResult:
    """Rerun the assimilation once per value of one parameter.

    All runs share the template's seed. ``rates`` optionally fixes the removal
    rates as ``(start_date, gamma_H, gamma_D)``; otherwise each run estimates
    them from ``obs``. With ``out_dir`` one analysis CSV per value and a
    ``comparison_<axis>.csv`` of daily mean Rt per value are written.
    """
    if axis not in AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {', '.join(AXES)}")
    values = list(values) if values is not None else default_axis_values(axis)
    field = AXES[axis]
    configs = []
    for v in values:
        try:
            configs.append(template.replace(**{field: v.value}))
        except SeirdaError as exc:
            raise ConfigError(f"{axis}={v.label}: {exc}") from None

    runs = {}
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(configs))) as pool:
            futures = [pool.submit(_run_one, c, obs, rates, keep_members) for c in configs]
            for v, fut in zip(values, futures):
                runs[v.label] = _tagged(fut.result, axis, v)
    else:
        for v, c in zip(values, configs):
            runs[v.label] = _tagged(lambda: _run_one(c, obs, rates, keep_members), axis, v)

    files = []
    comparison = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for v in values:
            run = runs[v.label]
            path = out_dir / f"analysis_{axis}={v.label}.csv"
            meta = run.metadata()
            meta["sweep"] = {"axis": axis, "label": v.label, "value": v.value}
            write_analysis(run.records, path, meta)
            files.append(path)
        comparison = out_dir / f"comparison_{axis}.csv"
        write_comparison(comparison, axis, values, {k: r.records for k, r in runs.items()})
    return SweepResult(axis, values, {k: r.records for k, r in runs.items()}, files, comparison)


def _tagged(fn, axis, value):
    try:
        return fn()
    except SeirdaError as exc:
        raise SweepRunError(axis, value, exc) from exc


class SweepRunError(SeirdaError):
    """A single sweep run failed; names the axis value that caused it."""

    def __init__(self, axis, value, cause):
        super().__init__(f"{axis}={value.label}: {cause}")
        self.axis = axis
        self.value = value
        self.cause = cause


def write_comparison(path, axis: str, values: Sequence[AxisValue], records: dict) -> None:
    first = records[values[0].label]
    header = ["date"] + [f"Rt_mean[{axis}={v.label}]" for v in values]
    rows = []
    for i, rec in enumerate(first):
        rows.append([rec.date] + [records[v.label][i].rt.mean for v in values])
    write_table(path, header, rows)


def removal_rates_from(obs: ObservationSeries) -> tuple:
    """``(start_date, gamma_H, gamma_D)`` smoothed from observations."""
    rates = estimate_removal_rates(obs)
    return obs.start_date, smooth7(rates.gamma_H), smooth7(rates.gamma_D)
