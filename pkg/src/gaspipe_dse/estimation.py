"""Classical and innovation-scaled robust Kalman filtering of the network state.

The robust variant estimates the innovation covariance over a sliding window
and inflates each measurement variance by the ratio of the unexplained
innovation power to the nominal variance, clamped from below. All matrix
inverses are realised as Cholesky or LU solves.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .network import GasNetwork
from .simulator import MeasurementSeries, Scenario, input_series
from .transient import TransientModel

CLASSIC = "classic"
ROBUST = "robust"


class FilterDivergenceError(np.linalg.LinAlgError):
    """Innovation covariance could not be factorized."""


@dataclass(frozen=True, eq=False)
class EstimatorConfig:
    Q: np.ndarray
    R: np.ndarray  # diagonal entries (2 n_nodes,)
    P0: np.ndarray
    m_w: int = 10
    variant: str = ROBUST
    mu_floor: float = 1.0

    def __post_init__(self):
        if self.variant not in (CLASSIC, ROBUST):
            raise ValueError(f"variant must be {CLASSIC!r} or {ROBUST!r}")
        if self.m_w < 1:
            raise ValueError("window length m_w must be >= 1")
        if self.mu_floor < 1:
            raise ValueError("mu_floor must be >= 1")
        if np.any(np.asarray(self.R) <= 0):
            raise ValueError("R must be positive definite")
        for name in ("Q", "P0"):
            M = np.asarray(getattr(self, name))
            if not np.allclose(M, M.T):
                raise ValueError(f"{name} must be symmetric")
            try:
                np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                raise ValueError(f"{name} must be positive definite") from None

    def with_variant(self, variant: str) -> EstimatorConfig:
        return EstimatorConfig(self.Q, self.R, self.P0, self.m_w, variant, self.mu_floor)


def default_config(x0: np.ndarray, sigma: np.ndarray, variant: str = ROBUST, m_w: int = 10,
                   mu_floor: float = 1.0, q_scale: float = 1e-4,
                   p0_scale: float = 1e-2) -> EstimatorConfig:
    """Q = (q_scale * max|x0|)^2 I, P0 = diag((p0_scale * |x0_i|)^2), R = diag(sigma^2).

    P0 entries for (near-)zero states are floored at ``p0_scale * 1e-6 * max|x0|``.
    """
    typical = float(np.max(np.abs(x0)))
    Q = np.eye(x0.size) * (q_scale * typical) ** 2
    p0_sd = p0_scale * np.maximum(np.abs(x0), 1e-6 * typical)
    return EstimatorConfig(Q, np.asarray(sigma, dtype=float) ** 2, np.diag(p0_sd**2),
                           m_w, variant, mu_floor)


def _sym(P):
    return 0.5 * (P + P.T)


def predict(x, P, F, u, Q):
    """One-step state and covariance prediction."""
    return F @ x + u, _sym(F @ P @ F.T + Q)


def kf_update(x_pred, P_pred, z, H, R):
    """Measurement update; ``R`` is the vector of (possibly scaled) variances or a matrix.

    Returns ``(x, P, e)`` with ``e`` the innovation.
    """
    R = np.diag(R) if np.ndim(R) == 1 else R
    e = z - H @ x_pred
    PHt = P_pred @ H.T
    S = _sym(H @ PHt + R)
    try:
        cf = linalg.cho_factor(S, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise FilterDivergenceError(f"innovation covariance not positive definite: {exc}") from exc
    # K = P H^T S^-1, so K^T = S^-1 H P
    Kt = linalg.cho_solve(cf, PHt.T)
    x = x_pred + Kt.T @ e
    P = _sym(P_pred - Kt.T @ (H @ P_pred))
    return x, P, e


def gain(P_pred, H, R):
    """Kalman gain P H^T (H P H^T + R)^-1, via Cholesky."""
    R = np.diag(R) if np.ndim(R) == 1 else R
    PHt = P_pred @ H.T
    cf = linalg.cho_factor(_sym(H @ PHt + R))
    return linalg.cho_solve(cf, PHt.T).T


def innovation_covariance_estimate(window) -> np.ndarray:
    """Sample second moment of the innovations held in ``window``."""
    E = np.asarray(list(window), dtype=float)
    return E.T @ E / E.shape[0]


def compute_scalar(C_e, H, P_pred, R, mu_floor: float = 1.0) -> np.ndarray:
    """Diagonal of the measurement-variance scaling matrix.

    Solves ``C_e = H P H^T + mu R`` for ``mu`` (``R`` diagonal), keeps the
    diagonal only and clamps it at ``mu_floor``.
    """
    R = np.diag(R) if np.ndim(R) == 2 else np.asarray(R)
    HPH = H @ P_pred @ H.T
    mu = (np.asarray(C_e) - HPH) / R[np.newaxis, :]
    return np.maximum(np.diag(mu), mu_floor)


@dataclass(frozen=True, eq=False)
class EstimationResult:
    """Filter traces over steps 0..T; row 0 is the initial condition.

    ``innovation`` and ``mu`` cover steps 1..T. ``mu`` is None for the
    classic variant.
    """

    variant: str
    x: np.ndarray
    P_diag: np.ndarray
    innovation: np.ndarray
    S_diag: np.ndarray  # nominal innovation variance (H P H^T + R) per channel
    mu: np.ndarray | None
    z_hat: np.ndarray  # H x over steps 1..T


def run_filter(model: TransientModel, net: GasNetwork, scenario: Scenario,
               measurements: MeasurementSeries, H: np.ndarray, cfg: EstimatorConfig,
               x0: np.ndarray) -> EstimationResult:
    """Filter a measurement series.

    The prediction uses the model input built from the scenario's source
    densities and loads; ``x0`` is the initial estimate (the steady state at
    the t=0 loads).
    """
    T = measurements.n_steps
    if not np.allclose(measurements.times, model.dt * np.arange(1, T + 1), rtol=1e-9, atol=0):
        raise ValueError("measurement times do not match the model time step")
    if measurements.z.shape[1] != H.shape[0]:
        raise ValueError(f"{measurements.z.shape[1]} measurement channels, H expects {H.shape[0]}")
    u = input_series(model, net, scenario)
    R = np.asarray(cfg.R, dtype=float)
    robust = cfg.variant == ROBUST

    xs = np.empty((T + 1, model.index.dim))
    Pd = np.empty_like(xs)
    E = np.empty((T, H.shape[0]))
    Sd = np.empty_like(E)
    mus = np.empty_like(E) if robust else None
    x, P = np.array(x0, dtype=float), np.array(cfg.P0, dtype=float)
    xs[0], Pd[0] = x, np.diag(P)
    window: deque = deque(maxlen=cfg.m_w)

    for k in range(T):
        x_pred, P_pred = predict(x, P, model.F, u[k + 1], cfg.Q)
        z = measurements.z[k]
        if robust:
            window.append(z - H @ x_pred)
            C_e = innovation_covariance_estimate(window)
            mu = compute_scalar(C_e, H, P_pred, R, cfg.mu_floor)
            mus[k] = mu
            R_eff = mu * R
        else:
            R_eff = R
        x, P, e = kf_update(x_pred, P_pred, z, H, R_eff)
        xs[k + 1], Pd[k + 1], E[k] = x, np.diag(P), e
        Sd[k] = np.einsum("ij,jk,ik->i", H, P_pred, H) + R
    return EstimationResult(cfg.variant, xs, Pd, E, Sd, mus, xs[1:] @ H.T)
