"""Ensemble transform Kalman filter with multiplicative and additive inflation.

Notation follows the usual square-root filter conventions: members are the
columns of an ``l x k`` table, ``X`` denotes perturbations from the ensemble
mean and ``Y = H X`` their image in observation space.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import FilterError


@dataclass(frozen=True)
class Ensemble:
    """Ordered ensemble of state vectors stored column-wise (``l x k``)."""

    members: np.ndarray

    def __post_init__(self):
        m = np.array(self.members, dtype=float)
        if m.ndim != 2:
            raise ValueError(f"members must be an l x k table, got shape {m.shape}")
        if m.shape[1] < 2:
            raise ValueError("an ensemble needs at least two members")
        if not np.all(np.isfinite(m)):
            raise ValueError("ensemble contains non-finite values")
        m.setflags(write=False)
        object.__setattr__(self, "members", m)

    @property
    def size(self) -> int:
        return self.members.shape[1]

    @property
    def dim(self) -> int:
        return self.members.shape[0]

    @cached_property
    def mean(self) -> np.ndarray:
        return self.members.mean(axis=1)

    @cached_property
    def perturbations(self) -> np.ndarray:
        return self.members - self.mean[:, None]

    @cached_property
    def covariance(self) -> np.ndarray:
        X = self.perturbations
        return X @ X.T / (self.size - 1)

    @classmethod
    def from_moments(cls, mean, cov, size: int, rng: np.random.Generator) -> "Ensemble":
        """Ensemble whose sample mean and covariance equal ``mean``/``cov`` exactly.

        Needs ``size > len(mean)``.
        """
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        l = mean.size
        if size <= l:
            raise ValueError(f"moment matching needs more members ({size}) than dimensions ({l})")
        Z = rng.standard_normal((l, size))
        Z -= Z.mean(axis=1, keepdims=True)
        # Whiten so the sample covariance of Z is the identity.
        C = Z @ Z.T / (size - 1)
        Z = np.linalg.solve(np.linalg.cholesky(C), Z)
        L = np.linalg.cholesky(cov)
        return cls(mean[:, None] + L @ Z)


@dataclass(frozen=True)
class ObsErrorModel:
    """Independent observation errors with the given standard deviations."""

    sd: np.ndarray

    def __post_init__(self):
        sd = np.atleast_1d(np.array(self.sd, dtype=float))
        if sd.ndim != 1 or np.any(~np.isfinite(sd)) or np.any(sd <= 0):
            raise ValueError(f"observation standard deviations must be finite and > 0, got {sd}")
        object.__setattr__(self, "sd", sd)

    @property
    def variance(self) -> np.ndarray:
        return self.sd ** 2

    @property
    def covariance(self) -> np.ndarray:
        return np.diag(self.variance)

    def subset(self, rows) -> "ObsErrorModel":
        return ObsErrorModel(self.sd[rows])


def etkf_analysis(bg: Ensemble, y, obs_op, err: ObsErrorModel, rho: float = 1.0) -> Ensemble:
    """Deterministic ETKF update of ``bg`` against observation ``y``.

    Parameters
    ----------
    bg : Ensemble
        Background (forecast) ensemble.
    y : array_like, shape (m,)
        Observation vector.
    obs_op : array_like, shape (m, l)
        Linear observation operator.
    err : ObsErrorModel
        Diagonal observation error model of size m.
    rho : float
        Multiplicative inflation (>= 1), applied to the background
        covariance through the ensemble-space system.

    Returns
    -------
    Ensemble
        Analysis ensemble: the analysis mean plus perturbations transformed by
        the symmetric square root of ``(k - 1) * Pa_tilde``.
    """
    if rho < 1:
        raise ValueError(f"multiplicative inflation must be >= 1, got {rho}")
    H = np.atleast_2d(np.asarray(obs_op, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if H.shape != (y.size, bg.dim) or err.sd.size != y.size:
        raise ValueError(
            f"inconsistent dimensions: H {H.shape}, y {y.shape}, state {bg.dim}, errors {err.sd.size}"
        )

    Xb = bg.perturbations
    Yb = H @ Xb
    if not np.any(Yb):
        # No spread in observation space: zero gain, only inflation acts.
        if rho == 1:
            return bg
        return Ensemble(bg.mean[:, None] + np.sqrt(rho) * Xb)
    innovation = y - H @ bg.mean
    weights, W = ensemble_transform(Yb, innovation, err, rho)
    return Ensemble((bg.mean + Xb @ weights)[:, None] + Xb @ W)


def ensemble_transform(Yb, innovation, err: ObsErrorModel, rho: float = 1.0):
    """Mean weights and the symmetric transform matrix in ensemble space.

    Returns ``(w, W)`` with ``w = Pa (Yb^T R^-1 d)`` and
    ``W = [(k - 1) Pa]^(1/2)``, where
    ``Pa = [(k - 1) I / rho + Yb^T R^-1 Yb]^-1``.
    """
    k = Yb.shape[1]
    YtRinv = Yb.T / err.variance
    A = (k - 1) / rho * np.eye(k) + YtRinv @ Yb
    A = 0.5 * (A + A.T)
    evals, V = np.linalg.eigh(A)
    if not evals[0] > 1e-12 * max(evals[-1], 1.0):
        raise FilterError(f"ensemble-space system is singular (smallest eigenvalue {evals[0]:.3e})")
    Pa = (V / evals) @ V.T
    W = (V * np.sqrt((k - 1) / evals)) @ V.T
    return Pa @ (YtRinv @ innovation), W


def additive_inflation(ens: Ensemble, alpha: float, rng: np.random.Generator) -> Ensemble:
    """Add zero-mean noise with covariance ``alpha * P_b`` to every member.

    Noise is drawn inside the ensemble subspace as ``X w / sqrt(k - 1)`` with
    ``w ~ N(0, alpha I_k)``, then recentered so the mean does not move.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"additive inflation factor must lie in (0, 1), got {alpha}")
    k = ens.size
    W = rng.standard_normal((k, k)) * np.sqrt(alpha)
    noise = ens.perturbations @ W / np.sqrt(k - 1)
    noise -= noise.mean(axis=1, keepdims=True)
    return Ensemble(ens.members + noise)


def kalman_oracle(x_b, P_b, y, H, R):
    """Classical Kalman analysis, returning ``(x_a, P_a)``."""
    x_b = np.atleast_1d(np.asarray(x_b, dtype=float))
    P_b = np.atleast_2d(np.asarray(P_b, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    S = H @ P_b @ H.T + R
    try:
        K = np.linalg.solve(S, H @ P_b).T
    except np.linalg.LinAlgError as exc:
        raise FilterError(f"innovation covariance is singular: {exc}") from exc
    x_a = x_b + K @ (y - H @ x_b)
    P_a = (np.eye(x_b.size) - K @ H) @ P_b
    return x_a, P_a
