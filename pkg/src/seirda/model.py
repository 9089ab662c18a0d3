"""Extended SEIR dynamics, reproduction numbers and observation-derived rates.

The population is split into nine compartments::

    S -> E -> Ia -> Is -> H -> R
               |      |     `-> D
               v      v
               Ra     Rs

``Ia`` holds asymptomatic and pre-symptomatic carriers, ``Is`` symptomatic
carriers that are not yet registered, ``H`` registered cases (hospital, hotel
or home care), ``R``/``D`` cumulative registered recoveries and deaths, and
``Ra``/``Rs`` the unregistered recoveries.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels
from .errors import DataError, ModelDomainError

COMPARTMENTS = ("S", "E", "Ia", "Is", "H", "R", "D", "Ra", "Rs")

# Medical constants: proportion x (duration in days)^-1.
INCUBATION_DAYS = 3.0
PRESYMPTOMATIC_DAYS = 2.0
ASYMPTOMATIC_DAYS = 9.0
DETECTED_FRACTION = 0.78
ONSET_TO_REGISTRATION_DAYS_EARLY = 8.3
ONSET_TO_REGISTRATION_DAYS_LATE = 5.2
UNDETECTED_FRACTION = 0.22
SYMPTOMATIC_DAYS = 7.0
SYMPTOMATIC_FRACTION = 0.83
K_RATIO = 0.58
TAU_H_SWITCH_DATE = dt.date(2020, 6, 1)

SMOOTH7_WEIGHTS = np.array([1.0, 6.0, 15.0, 20.0, 15.0, 6.0, 1.0]) / 64.0


@dataclass(frozen=True)
class Compartments:
    """Nonnegative compartment sizes (individuals) summing to ``N``."""

    S: float
    E: float
    Ia: float
    Is: float
    H: float
    R: float
    D: float
    Ra: float
    Rs: float
    N: float

    def __post_init__(self):
        values = self.as_array()
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError(f"compartments must be finite and >= 0, got {values}")
        if not (self.N > 0 and math.isfinite(self.N)):
            raise ValueError(f"population N must be positive, got {self.N}")
        total = math.fsum(values)
        if abs(total - self.N) > 1e-9 * self.N:
            raise ValueError(f"compartments sum to {total}, expected N={self.N}")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in COMPARTMENTS], dtype=float)

    @classmethod
    def from_array(cls, values, N: float | None = None) -> "Compartments":
        values = np.asarray(values, dtype=float)
        if N is None:
            N = math.fsum(values)
        return cls(*(float(v) for v in values), N=float(N))

    @classmethod
    def seeded(cls, N: float, **infected: float) -> "Compartments":
        """Population ``N`` with the given non-S compartments; S takes the rest."""
        unknown = set(infected) - set(COMPARTMENTS[1:])
        if unknown:
            raise ValueError(f"unknown compartments {sorted(unknown)}")
        values = {name: float(infected.get(name, 0.0)) for name in COMPARTMENTS[1:]}
        return cls(S=N - math.fsum(values.values()), N=float(N), **values)


@dataclass(frozen=True)
class MedicalParams:
    """Rate constants of the extended SEIR model, all per day.

    ``beta_a`` is not stored; it is ``k_ratio * beta_s``.
    """

    beta_s: float
    k_ratio: float = K_RATIO
    epsilon: float = 1.0 / INCUBATION_DAYS
    delta: float = SYMPTOMATIC_FRACTION / PRESYMPTOMATIC_DAYS
    tau_H: float = DETECTED_FRACTION / ONSET_TO_REGISTRATION_DAYS_EARLY
    gamma_a: float = (1.0 - SYMPTOMATIC_FRACTION) / ASYMPTOMATIC_DAYS
    gamma_s: float = UNDETECTED_FRACTION / SYMPTOMATIC_DAYS
    gamma_H: float = 0.0
    gamma_D: float = 0.0

    def __post_init__(self):
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{field.name} must be finite and >= 0, got {value}")
        if not 0 < self.k_ratio <= 1:
            raise ValueError(f"k_ratio must lie in (0, 1], got {self.k_ratio}")

    @property
    def beta_a(self) -> float:
        return self.k_ratio * self.beta_s

    @classmethod
    def from_fraction(
        cls,
        beta_s: float,
        symptomatic_fraction: float = SYMPTOMATIC_FRACTION,
        k_ratio: float = K_RATIO,
        **overrides: float,
    ) -> "MedicalParams":
        """Build ``delta`` and ``gamma_a`` from a symptomatic fraction.

        The symptomatic and asymptomatic proportions always sum to one, so a
        sweep over the fraction moves both rates consistently.
        """
        if not 0 < symptomatic_fraction <= 1:
            raise ValueError(f"symptomatic_fraction must lie in (0, 1], got {symptomatic_fraction}")
        rates = dict(
            delta=symptomatic_fraction / PRESYMPTOMATIC_DAYS,
            gamma_a=(1.0 - symptomatic_fraction) / ASYMPTOMATIC_DAYS,
        )
        rates.update(overrides)
        return cls(beta_s=beta_s, k_ratio=k_ratio, **rates)

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.beta_s, self.k_ratio, self.epsilon, self.delta, self.tau_H,
             self.gamma_a, self.gamma_s, self.gamma_H, self.gamma_D],
            dtype=float,
        )


@dataclass(frozen=True)
class ParamSchedule:
    """Medical parameters indexed by calendar date.

    ``tau_H`` switches once, at ``tau_H_switch_date`` (inclusive). The removal
    rates ``gamma_H``/``gamma_D`` come from per-day series starting at
    ``start_date``.
    """

    base: MedicalParams
    start_date: dt.date
    gamma_H_series: np.ndarray
    gamma_D_series: np.ndarray
    symptomatic_fraction: float = SYMPTOMATIC_FRACTION
    tau_H_switch_date: dt.date = TAU_H_SWITCH_DATE
    tau_H_before: float = DETECTED_FRACTION / ONSET_TO_REGISTRATION_DAYS_EARLY
    tau_H_after: float = DETECTED_FRACTION / ONSET_TO_REGISTRATION_DAYS_LATE

    def __post_init__(self):
        gh = np.asarray(self.gamma_H_series, dtype=float)
        gd = np.asarray(self.gamma_D_series, dtype=float)
        if gh.ndim != 1 or gh.shape != gd.shape or gh.size == 0:
            raise ValueError("gamma_H_series and gamma_D_series must be equal-length 1-d series")
        if np.any(~np.isfinite(gh)) or np.any(~np.isfinite(gd)) or np.any(gh < 0) or np.any(gd < 0):
            raise ValueError("removal-rate series must be finite and >= 0")
        gh.setflags(write=False)
        gd.setflags(write=False)
        object.__setattr__(self, "gamma_H_series", gh)
        object.__setattr__(self, "gamma_D_series", gd)

    @classmethod
    def build(
        cls,
        start_date: dt.date,
        gamma_H_series,
        gamma_D_series,
        k_ratio: float = K_RATIO,
        symptomatic_fraction: float = SYMPTOMATIC_FRACTION,
        tau_H_switch_date: dt.date = TAU_H_SWITCH_DATE,
    ) -> "ParamSchedule":
        base = MedicalParams.from_fraction(0.0, symptomatic_fraction, k_ratio)
        return cls(
            base=base,
            start_date=start_date,
            gamma_H_series=np.asarray(gamma_H_series, dtype=float),
            gamma_D_series=np.asarray(gamma_D_series, dtype=float),
            symptomatic_fraction=symptomatic_fraction,
            tau_H_switch_date=tau_H_switch_date,
        )

    @property
    def n_days(self) -> int:
        return len(self.gamma_H_series)

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=self.n_days - 1)

    def day_index(self, date: dt.date) -> int:
        idx = (date - self.start_date).days
        if not 0 <= idx < self.n_days:
            raise ValueError(f"{date} outside schedule {self.start_date}..{self.end_date}")
        return idx

    def tau_H_on(self, date: dt.date) -> float:
        return self.tau_H_after if date >= self.tau_H_switch_date else self.tau_H_before

    def params_on(self, date: dt.date, beta_s: float | None = None) -> MedicalParams:
        idx = self.day_index(date)
        return dataclasses.replace(
            self.base,
            beta_s=self.base.beta_s if beta_s is None else beta_s,
            tau_H=self.tau_H_on(date),
            gamma_H=float(self.gamma_H_series[idx]),
            gamma_D=float(self.gamma_D_series[idx]),
        )


def flows(c: Compartments, p: MedicalParams) -> dict[str, float]:
    """The eight inter-compartment transfer rates (individuals per day)."""
    return {
        "infection": (p.beta_a * c.Ia + p.beta_s * c.Is) * c.S / c.N,
        "incubation": p.epsilon * c.E,
        "onset": p.delta * c.Ia,
        "recovery_a": p.gamma_a * c.Ia,
        "admission": p.tau_H * c.Is,
        "recovery_s": p.gamma_s * c.Is,
        "discharge": p.gamma_H * c.H,
        "death": p.gamma_D * c.H,
    }


def derivative(c: Compartments, p: MedicalParams) -> dict[str, float]:
    """Per-day rate of change of each compartment."""
    out = np.empty(len(COMPARTMENTS))
    _kernels.rhs(c.as_array(), p.as_array(), float(c.N), out)
    return dict(zip(COMPARTMENTS, out.tolist()))


def basic_reproduction_number(p: MedicalParams) -> float:
    """Expected secondary infections per case in a fully susceptible population.

    Sum of the infections produced while in ``Ia`` and, for the fraction that
    develops symptoms, while in ``Is``.
    """
    leave_a = p.delta + p.gamma_a
    leave_s = p.gamma_s + p.tau_H
    if leave_a <= 0 or leave_s <= 0:
        raise ModelDomainError(
            f"reproduction number undefined: delta+gamma_a={leave_a}, gamma_s+tau_H={leave_s}"
        )
    return p.beta_a / leave_a + p.beta_s * p.delta / (leave_a * leave_s)


def effective_rt(beta_s_members: Sequence[float], p_at_t: MedicalParams) -> np.ndarray:
    """Member-wise reproduction number for the transmission rates in force at t."""
    betas = np.asarray(beta_s_members, dtype=float)
    if betas.ndim != 1:
        raise ValueError("beta_s_members must be one-dimensional")
    if np.any(~np.isfinite(betas)) or np.any(betas <= 0):
        raise ValueError("beta_s members must be finite and > 0")
    # R0 is linear in beta_s: evaluate once at beta_s = 1 and scale.
    unit = basic_reproduction_number(dataclasses.replace(p_at_t, beta_s=1.0))
    return betas * unit


class RemovalRates(NamedTuple):
    gamma_H: np.ndarray
    gamma_D: np.ndarray
    clamped: dict


def estimate_removal_rates(obs) -> RemovalRates:
    """Daily discharge and death rates from cumulative counts.

    ``gamma_H(t) = (R(t+1) - R(t)) / H(t)`` and likewise for deaths. The last
    day repeats the previous value. Days with missing data carry the last
    computable value forward (leading gaps take the first one). Negative
    increments are clamped to zero and tallied in ``clamped``.
    """
    dates = list(obs.dates)
    H = np.asarray(obs.H, dtype=float)
    R = np.asarray(obs.R, dtype=float)
    D = np.asarray(obs.D, dtype=float)
    n = len(dates)
    if n < 2:
        raise DataError("need at least two days of observations to estimate removal rates")

    zero_h = np.flatnonzero(H[:-1] == 0)
    if zero_h.size:
        raise DataError(f"hospitalized count is zero on {dates[zero_h[0]]}; removal rate undefined")

    dR = R[1:] - R[:-1]
    dD = D[1:] - D[:-1]
    clamped = {"R": int(np.sum(dR < 0)), "D": int(np.sum(dD < 0))}
    with np.errstate(invalid="ignore"):
        gh = np.maximum(dR, 0.0) / H[:-1]
        gd = np.maximum(dD, 0.0) / H[:-1]
    gh = np.append(gh, gh[-1])
    gd = np.append(gd, gd[-1])
    return RemovalRates(_fill_gaps(gh, dates, "gamma_H"), _fill_gaps(gd, dates, "gamma_D"), clamped)


def _fill_gaps(series: np.ndarray, dates, name: str) -> np.ndarray:
    ok = np.isfinite(series)
    if not ok.any():
        raise DataError(f"{name} could not be computed on any day from {dates[0]} to {dates[-1]}")
    idx = np.where(ok, np.arange(len(series)), 0)
    np.maximum.accumulate(idx, out=idx)
    out = series[idx]
    out[: np.argmax(ok)] = series[np.argmax(ok)]
    return out


def smooth7(series) -> np.ndarray:
    """Centered (1, 6, 15, 20, 15, 6, 1)/64 smoothing.

    Near the ends the window is truncated and its weights renormalized. The
    average is formed from differences to the center value so that constant
    series come back bit-for-bit.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("smooth7 needs a non-empty 1-d series")
    n = x.size
    out = np.empty(n)
    for t in range(n):
        lo = max(0, t - 3)
        hi = min(n, t + 4)
        w = SMOOTH7_WEIGHTS[lo - t + 3: hi - t + 3]
        out[t] = x[t] + np.dot(w, x[lo:hi] - x[t]) / w.sum()
    return out
