"""Compiled right-hand side and fixed-step RK4 for the extended SEIR system.

State rows are ordered ``S, E, Ia, Is, H, R, D, Ra, Rs``; parameter rows are
``beta_s, k_ratio, epsilon, delta, tau_H, gamma_a, gamma_s, gamma_H, gamma_D``.
"""
import numpy as np
from numba import njit

N_COMPARTMENTS = 9
N_PARAMS = 9


@njit(cache=True)
def rhs(y, p, n, out):
    s = y[0]
    e = y[1]
    ia = y[2]
    i_s = y[3]
    h = y[4]
    beta_s = p[0]
    beta_a = p[1] * beta_s
    eps = p[2]
    delta = p[3]
    tau_h = p[4]
    gamma_a = p[5]
    gamma_s = p[6]
    gamma_h = p[7]
    gamma_d = p[8]

    infection = (beta_a * ia + beta_s * i_s) * s / n
    incubation = eps * e
    onset = delta * ia
    recovery_a = gamma_a * ia
    admission = tau_h * i_s
    recovery_s = gamma_s * i_s
    discharge = gamma_h * h
    death = gamma_d * h

    out[0] = -infection
    out[1] = infection - incubation
    out[2] = incubation - onset - recovery_a
    out[3] = onset - admission - recovery_s
    out[4] = admission - discharge - death
    out[5] = discharge
    out[6] = death
    out[7] = recovery_a
    out[8] = recovery_s


@njit(cache=True)
def rk4_advance(ys, ps, n, dt, nsteps):
    """Advance every row of ``ys`` (members x 9) by ``nsteps`` RK4 steps of ``dt``.

    ``ps`` holds one parameter row per member, held constant over the interval.
    """
    m = ys.shape[0]
    out = np.empty_like(ys)
    k1 = np.empty(N_COMPARTMENTS)
    k2 = np.empty(N_COMPARTMENTS)
    k3 = np.empty(N_COMPARTMENTS)
    k4 = np.empty(N_COMPARTMENTS)
    tmp = np.empty(N_COMPARTMENTS)
    y = np.empty(N_COMPARTMENTS)
    half = 0.5 * dt
    sixth = dt / 6.0
    for i in range(m):
        p = ps[i]
        for j in range(N_COMPARTMENTS):
            y[j] = ys[i, j]
        for _ in range(nsteps):
            rhs(y, p, n, k1)
            for j in range(N_COMPARTMENTS):
                tmp[j] = y[j] + half * k1[j]
            rhs(tmp, p, n, k2)
            for j in range(N_COMPARTMENTS):
                tmp[j] = y[j] + half * k2[j]
            rhs(tmp, p, n, k3)
            for j in range(N_COMPARTMENTS):
                tmp[j] = y[j] + dt * k3[j]
            rhs(tmp, p, n, k4)
            for j in range(N_COMPARTMENTS):
                y[j] = y[j] + sixth * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        for j in range(N_COMPARTMENTS):
            out[i, j] = y[j]
    return out


@njit(cache=True)
def rk4_trajectory(y0, day_params, n, dt, nsteps):
    """Daily trajectory of a single state; ``day_params`` has one row per day."""
    days = day_params.shape[0]
    traj = np.empty((days + 1, N_COMPARTMENTS))
    traj[0] = y0
    cur = np.empty((1, N_COMPARTMENTS))
    cur[0] = y0
    for d in range(days):
        cur = rk4_advance(cur, day_params[d:d + 1], n, dt, nsteps)
        traj[d + 1] = cur[0]
    return traj
