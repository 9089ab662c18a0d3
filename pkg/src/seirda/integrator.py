"""One-day advance of the log-transformed, beta-augmented state.

The filter works on log compartments, but the dynamics are integrated on the
original scale (fixed-step RK4) and re-logged afterwards. Susceptibles are not
part of the state; they are recovered from the population total.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import StateCollapseError
from .model import COMPARTMENTS, Compartments, MedicalParams, ParamSchedule

LOG_FIELDS = ("e", "i_a", "i_s", "h", "r", "d", "r_a", "r_s", "log_beta_s")
STATE_DIM = len(LOG_FIELDS)
DEFAULT_FLOOR = 1e-3
DEFAULT_SUBSTEP = 0.1


@dataclass(frozen=True)
class LogState:
    """Natural logs of the eight non-S compartments plus ``log(beta_s)``."""

    e: float
    i_a: float
    i_s: float
    h: float
    r: float
    d: float
    r_a: float
    r_s: float
    log_beta_s: float
    N: float

    def __post_init__(self):
        vec = self.as_vector()
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"log state has non-finite entries: {vec}")
        if susceptible(vec[:8], self.N) <= 0:
            raise StateCollapseError("compartments exceed the population (S <= 0)")

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in LOG_FIELDS], dtype=float)

    @classmethod
    def from_vector(cls, vec, N: float) -> "LogState":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (STATE_DIM,):
            raise ValueError(f"expected a {STATE_DIM}-vector, got shape {vec.shape}")
        return cls(*(float(v) for v in vec), N=float(N))

    @property
    def beta_s(self) -> float:
        return math.exp(self.log_beta_s)


def susceptible(log_compartments, N: float) -> float:
    return N - math.fsum(np.exp(log_compartments))


def to_log(c: Compartments, beta_s: float, floor: float = DEFAULT_FLOOR) -> LogState:
    """Log-transform all non-S compartments, clipping from below at ``floor``."""
    if not beta_s > 0:
        raise ValueError(f"beta_s must be > 0, got {beta_s}")
    values = np.maximum(c.as_array()[1:], floor)
    return LogState.from_vector(np.append(np.log(values), math.log(beta_s)), c.N)


def from_log(x: LogState) -> tuple[Compartments, float]:
    """Back to individuals; S is whatever the population total leaves."""
    comps = np.exp(x.as_vector()[:8])
    s = x.N - math.fsum(comps)
    if s <= 0:
        raise StateCollapseError("compartments exceed the population (S <= 0)")
    return Compartments.from_array(np.insert(comps, 0, s), N=x.N), x.beta_s


def _n_substeps(substep: float) -> int:
    n = int(round(1.0 / substep))
    if n < 1 or abs(n * substep - 1.0) > 1e-9:
        raise ValueError(f"substep must divide one day evenly, got {substep}")
    return n


def advance_compartments(ys: np.ndarray, params: np.ndarray, N: float,
                         substep: float = DEFAULT_SUBSTEP, days: int = 1) -> np.ndarray:
    """RK4-advance rows of original-scale compartments (members x 9)."""
    ys = np.ascontiguousarray(ys, dtype=float)
    params = np.ascontiguousarray(params, dtype=float)
    return _kernels.rk4_advance(ys, params, float(N), substep, _n_substeps(substep) * days)


def integrate_log_members(states: np.ndarray, params: np.ndarray, N: float,
                          substep: float = DEFAULT_SUBSTEP) -> np.ndarray:
    """Advance an (l x k) table of log states by one day.

    ``params`` has one row per member in kernel order; its ``beta_s`` column
    is ignored in favour of each member's own ``exp(log_beta_s)``.
    """
    states = np.asarray(states, dtype=float)
    comps = np.exp(states[:8].T)
    s = N - comps.sum(axis=1)
    bad = np.flatnonzero(~(s > 0))
    if bad.size:
        raise StateCollapseError("compartments exceed the population (S <= 0)", member=int(bad[0]))
    ys = np.column_stack([s, comps])
    p = np.array(params, dtype=float, copy=True)
    p[:, 0] = np.exp(states[8])
    out = advance_compartments(ys, p, N, substep)
    _check_admissible(out, N)
    result = np.empty_like(states)
    result[:8] = np.log(out[:, 1:]).T
    result[8] = states[8]
    return result


def _check_admissible(ys: np.ndarray, N: float) -> None:
    ok = np.all(np.isfinite(ys), axis=1) & (ys[:, 0] > 0) & np.all(ys[:, 1:] > 0, axis=1)
    ok &= np.all(ys <= N, axis=1)
    bad = np.flatnonzero(~ok)
    if bad.size:
        row = ys[bad[0]]
        raise StateCollapseError(
            f"integration left the admissible region ({dict(zip(COMPARTMENTS, row.tolist()))})",
            member=int(bad[0]),
        )


def integrate_one_day(x: LogState, sched: ParamSchedule, date: dt.date,
                      substep: float = DEFAULT_SUBSTEP,
                      params: MedicalParams | None = None) -> LogState:
    """Forecast ``x`` from ``date`` to the next day.

    Parameters are frozen at their ``date`` values; ``beta_s`` is the state's
    own and is carried over unchanged. ``params`` overrides the schedule
    (its ``beta_s`` is ignored).
    """
    p = sched.params_on(date) if params is None else params
    row = p.as_array()[None, :]
    out = integrate_log_members(x.as_vector()[:, None], row, x.N, substep)
    return LogState.from_vector(out[:, 0], x.N)


def simulate(c0: Compartments, params, days: int, substep: float = DEFAULT_SUBSTEP) -> np.ndarray:
    """Free run on the original scale; returns a (days + 1) x 9 trajectory.

    ``params`` is a single :class:`MedicalParams` or a sequence with one entry
    per day.
    """
    if isinstance(params, MedicalParams):
        table = np.tile(params.as_array(), (days, 1))
    else:
        table = np.array([p.as_array() for p in params], dtype=float)
        if table.shape[0] != days:
            raise ValueError(f"expected {days} daily parameter sets, got {table.shape[0]}")
    return _kernels.rk4_trajectory(c0.as_array(), table, float(c0.N), substep, _n_substeps(substep))
