"""Daily forecast/analysis cycle for the extended SEIR model.

The assimilated state is ``(e, i_a, i_s, h, r, d, r_a, r_s, log beta_s)``.
Each day the ensemble is forecast one day with independently jittered
medical parameters, inflated, and updated with the ETKF against the logs of
the observed ``H``, ``R`` and ``D``.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .config import RunConfig
from .errors import AssimilationError, DataError, InitializationError, SeirdaError, StateCollapseError
from .etkf import Ensemble, ObsErrorModel, additive_inflation, etkf_analysis
from .integrator import STATE_DIM, LogState, integrate_log_members, simulate
from .model import (
    Compartments,
    MedicalParams,
    ParamSchedule,
    effective_rt,
    estimate_removal_rates,
    smooth7,
)

log = logging.getLogger(__name__)

OBSERVED = (3, 4, 5)  # h, r, d rows of the state
OBS_OPERATOR = np.zeros((3, STATE_DIM))
OBS_OPERATOR[[0, 1, 2], list(OBSERVED)] = 1.0

# Rates that receive forecast jitter, in kernel column order after beta_s, k_ratio.
JITTERED = ("epsilon", "delta", "tau_H", "gamma_a", "gamma_s", "gamma_H", "gamma_D")

LOG_QUANTITIES = ("E", "Ia", "Is", "H", "R", "D", "Ra", "Rs", "beta_s")


def observation_operator(x) -> np.ndarray:
    """Project a state (``LogState`` or 9-vector) onto ``(h, r, d)``."""
    vec = x.as_vector() if isinstance(x, LogState) else np.asarray(x, dtype=float)
    return OBS_OPERATOR @ vec


class Summary(NamedTuple):
    mean: float
    lo95: float
    lo68: float
    hi68: float
    hi95: float
    spread: float


@dataclass(frozen=True)
class AnalysisRecord:
    """Posterior summary for one day.

    ``kind`` is ``"initial"`` for the spin-up ensemble, ``"analysis"`` after
    an ETKF update and ``"forecast"`` when no observation was usable that day.
    """

    date: dt.date
    kind: str
    summaries: dict
    members: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def beta_s_mean(self) -> float:
        return self.summaries["beta_s"].mean

    @property
    def rt(self) -> Summary:
        return self.summaries["Rt"]


def summarize(states: np.ndarray, rt: np.ndarray, ci_method: str = "sd") -> dict:
    """Summaries for every reported quantity of an (l x k) log-state table.

    Log-scale quantities are summarized by the mean and standard deviation of
    the logs and mapped back with ``exp``; ``Rt`` uses linear moments. With
    ``ci_method="percentile"`` the bounds are the 2.5/16/84/97.5 percentiles.
    """
    out = {}
    for name, row in zip(LOG_QUANTITIES, states):
        m = float(row.mean())
        s = float(row.std(ddof=1))
        if ci_method == "percentile":
            q = np.percentile(row, [2.5, 16, 84, 97.5])
            out[name] = Summary(math.exp(m), *np.exp(q).tolist(), s)
        else:
            out[name] = Summary(math.exp(m), math.exp(m - 2 * s), math.exp(m - s),
                                math.exp(m + s), math.exp(m + 2 * s), s)
    m = float(rt.mean())
    s = float(rt.std(ddof=1))
    if ci_method == "percentile":
        out["Rt"] = Summary(m, *np.percentile(rt, [2.5, 16, 84, 97.5]).tolist(), s)
    else:
        out["Rt"] = Summary(m, m - 2 * s, m - s, m + s, m + 2 * s, s)
    return out


def build_schedule(cfg: RunConfig, obs) -> ParamSchedule:
    """Removal-rate schedule from observations: raw daily ratios, then smooth7."""
    rates = estimate_removal_rates(obs)
    if rates.clamped["R"] or rates.clamped["D"]:
        log.warning("clamped negative daily increments: %s", rates.clamped)
    return ParamSchedule.build(
        obs.start_date,
        smooth7(rates.gamma_H),
        smooth7(rates.gamma_D),
        k_ratio=cfg.k_ratio,
        symptomatic_fraction=cfg.symptomatic_fraction,
        tau_H_switch_date=cfg.tau_h_switch_date,
    )


class SpinupResult(NamedTuple):
    beta_s: float
    center: LogState
    misfits: dict


def spinup_seed(cfg: RunConfig) -> Compartments:
    """Seed state for spin-up: a few infections, everything else at the floor."""
    return Compartments.seeded(
        cfg.population,
        E=cfg.spinup_seed_e, Ia=cfg.spinup_seed_ia, Is=cfg.spinup_seed_is,
        H=cfg.floor, R=cfg.floor, D=cfg.floor, Ra=cfg.floor, Rs=cfg.floor,
    )


def spinup_search(cfg: RunConfig, day0_obs, params: MedicalParams) -> SpinupResult:
    """Pick the trial ``beta_s`` whose seeded run best matches the day-0 H/R/D.

    Misfit is the sum of squared log differences over the three observed
    compartments after ``cfg.spinup_days`` days.
    """
    target = np.asarray(day0_obs, dtype=float)
    if target.shape != (3,) or np.any(~(target > 0)):
        raise InitializationError(f"day-0 observations must be three positive counts, got {day0_obs}")
    seed = spinup_seed(cfg)
    misfits = {}
    finals = {}
    for beta in cfg.spinup_beta_grid:
        p = dataclasses.replace(params, beta_s=beta)
        final = simulate(seed, p, cfg.spinup_days, cfg.substep)[-1]
        finals[beta] = final
        misfits[beta] = float(np.sum((np.log(final[[4, 5, 6]]) - np.log(target)) ** 2))
    peak_h = max(f[4] for f in finals.values())
    if peak_h < 1:
        raise InitializationError(
            f"no trial beta_s reaches H >= 1 after {cfg.spinup_days} days "
            f"(largest H {peak_h:.3g}; grid {min(cfg.spinup_beta_grid)}..{max(cfg.spinup_beta_grid)})"
        )
    best = min(cfg.spinup_beta_grid, key=lambda b: misfits[b])
    final = np.maximum(finals[best][1:], cfg.floor)
    center = LogState.from_vector(np.append(np.log(final), math.log(best)), cfg.population)
    return SpinupResult(best, center, misfits)


def perturb_center(center: LogState, cfg: RunConfig, rng: np.random.Generator) -> Ensemble:
    """Ensemble of ``cfg.ensemble_size`` members scattered around ``center``."""
    k = cfg.ensemble_size
    sd = np.full(STATE_DIM, cfg.init_log_sd)
    sd[-1] = cfg.init_log_beta_sd
    noise = rng.standard_normal((STATE_DIM, k)) * sd[:, None]
    return Ensemble(center.as_vector()[:, None] + noise)


def spinup_initialize(cfg: RunConfig, day0_obs, rng: np.random.Generator,
                      params: MedicalParams) -> Ensemble:
    """Initial ensemble consistent with the first day's observations.

    ``params`` supplies the rates used during spin-up (its ``beta_s`` is
    replaced by each trial value).
    """
    return perturb_center(spinup_search(cfg, day0_obs, params).center, cfg, rng)


def jitter_params(base: MedicalParams, k: int, jitter: float, rng: np.random.Generator) -> np.ndarray:
    """Per-member parameter rows (k x 9, kernel order) with jittered rates.

    Each rate ``M`` in ``JITTERED`` is drawn from ``N(M, (jitter * M)^2)``
    independently per member and clamped at zero. The ``beta_s`` column is
    left at zero; members supply their own.
    """
    values = np.array([getattr(base, name) for name in JITTERED])
    draws = values + rng.standard_normal((k, values.size)) * (jitter * values)
    np.maximum(draws, 0.0, out=draws)
    return np.column_stack([np.zeros(k), np.full(k, base.k_ratio), draws])


def forecast_step(ens: Ensemble, sched: ParamSchedule, date: dt.date, cfg: RunConfig,
                  rng: np.random.Generator, N: float | None = None) -> Ensemble:
    """One-day forecast of every member with freshly jittered parameters.

    ``log beta_s`` is carried over unchanged.
    """
    N = cfg.population if N is None else N
    params = jitter_params(sched.params_on(date), ens.size, cfg.jitter, rng)
    try:
        out = integrate_log_members(ens.members, params, N, cfg.substep)
    except StateCollapseError as exc:
        exc.date = date
        raise
    return Ensemble(out)


def member_rt(states: np.ndarray, sched: ParamSchedule, date: dt.date) -> np.ndarray:
    return effective_rt(np.exp(states[-1]), sched.params_on(date))


@dataclass
class AssimilationRun:
    records: list
    spinup: SpinupResult
    schedule: ParamSchedule
    config: RunConfig

    def metadata(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "ci_method": self.config.ci_method,
            "ci_construction": (
                "log-space mean +/- 1 and 2 ensemble sd for compartments and beta_s, "
                "linear mean +/- 1 and 2 sd for Rt" if self.config.ci_method == "sd"
                else "ensemble percentiles 2.5/16/84/97.5"
            ),
            "spinup": {
                "selected_beta_s": self.spinup.beta_s,
                "days": self.config.spinup_days,
                "seed_infections": {
                    "E": self.config.spinup_seed_e,
                    "Ia": self.config.spinup_seed_ia,
                    "Is": self.config.spinup_seed_is,
                },
            },
            "forecast_only_days": [r.date.isoformat() for r in self.records if r.kind == "forecast"],
        }


def run_assimilation(cfg: RunConfig, obs, sched: ParamSchedule | None = None,
                     keep_members: bool = True) -> AssimilationRun:
    """Full assimilation run over ``[cfg.start_date, cfg.end_date]``.

    ``cfg.start_date``/``end_date`` default to the ends of ``obs``. Without an
    explicit ``sched`` the removal rates are estimated from ``obs``.
    """
    if cfg.population is None:
        raise DataError("population is not set in the run configuration")
    start = cfg.start_date or obs.start_date
    end = cfg.end_date or obs.end_date
    obs = obs.window(start, end)
    if len(obs) < 2:
        raise DataError("need at least two days to assimilate")
    if sched is None:
        sched = build_schedule(cfg, obs)
    sched.day_index(end)
    rng = np.random.default_rng(cfg.seed)
    err_all = ObsErrorModel(np.full(3, cfg.obs_sd))

    spin = spinup_search(cfg, obs.values_on(start), sched.params_on(start))
    ens = perturb_center(spin.center, cfg, rng)
    records = [_record(start, "initial", ens, sched, cfg, keep_members)]

    for date in obs.dates[1:]:
        prev = date - dt.timedelta(days=1)
        try:
            ens = forecast_step(ens, sched, prev, cfg, rng)
            y = obs.values_on(date)
            usable = np.flatnonzero(np.isfinite(y) & (y > 0))
            if usable.size:
                ens = additive_inflation(ens, cfg.alpha, rng)
                ens = etkf_analysis(ens, np.log(y[usable]), OBS_OPERATOR[usable],
                                    err_all.subset(usable), cfg.rho)
                kind = "analysis"
            else:
                kind = "forecast"
            records.append(_record(date, kind, ens, sched, cfg, keep_members))
        except StateCollapseError:
            raise
        except (SeirdaError, ValueError) as exc:
            raise AssimilationError(date, exc) from exc
    return AssimilationRun(records, spin, sched, cfg)


def _record(date, kind, ens: Ensemble, sched, cfg, keep_members) -> AnalysisRecord:
    states = ens.members
    rt = member_rt(states, sched, date)
    return AnalysisRecord(date, kind, summarize(states, rt, cfg.ci_method),
                          states if keep_members else None)


def assimilate(cfg: RunConfig, obs, sched: ParamSchedule | None = None) -> list:
    """Sequence of daily :class:`AnalysisRecord` for the run window."""
    return run_assimilation(cfg, obs, sched).records
