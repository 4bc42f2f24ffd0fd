"""Ridge regression on estimated contexts and the posterior width schedule.

The design row at epoch s is ``x_s = [a_s, z_hat_s]``: coordinate 0 is the
action, the remaining r coordinates the estimated common factors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .latent import recovery_radius


@dataclass(frozen=True)
class RidgeFit:
    tau_hat: float
    lambda_hat: np.ndarray
    omega: np.ndarray
    sigma_hat: float
    rho: float

    @property
    def theta_hat(self) -> np.ndarray:
        return np.concatenate([[self.tau_hat], self.lambda_hat])


def design_matrix(actions, Z_hat) -> np.ndarray:
    actions = np.asarray(actions, dtype=float)
    Z_hat = np.asarray(Z_hat, dtype=float)
    return np.column_stack([actions, Z_hat]) if actions.size else np.zeros((0, 1 + Z_hat.shape[1]))


def fit_ridge(y0, actions, Z_hat, rho: float = 1.0) -> RidgeFit:
    """Regularised least squares of ``y0`` on ``[actions, Z_hat]``.

    Minimises ``sum_s (y0_s - tau a_s - <lambda, z_s>)^2 + rho (tau^2 + |lambda|^2)``
    by a Cholesky solve of the precision matrix ``rho I + X^T X``.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    y0 = np.asarray(y0, dtype=float)
    Z_hat = np.asarray(Z_hat, dtype=float)
    if Z_hat.ndim != 2:
        raise ValueError("Z_hat must be a 2-d array")
    if not (len(y0) == len(actions) == Z_hat.shape[0]):
        raise ValueError(
            f"length mismatch: y0 {len(y0)}, actions {len(actions)}, Z_hat rows {Z_hat.shape[0]}"
        )
    X = design_matrix(actions, Z_hat)
    d = X.shape[1]
    omega = rho * np.eye(d) + X.T @ X
    c = cho_factor(omega)
    theta = cho_solve(c, X.T @ y0)
    e1 = np.zeros(d)
    e1[0] = 1.0
    var = cho_solve(c, e1)[0]
    return RidgeFit(tau_hat=float(theta[0]), lambda_hat=theta[1:], omega=omega,
                    sigma_hat=float(np.sqrt(var)), rho=float(rho))


def ridge_tau_batch(Z_hat, A, Y, rho: float = 1.0):
    """``(tau_hat, sigma_hat)`` for many regressions sharing the contexts.

    ``A`` and ``Y`` are t x J: column j holds one action sequence and the
    matching outcomes.  Uses the Schur complement of the shared context
    block, so the cost is one r x r factorisation plus O(t r J).
    """
    Z_hat = np.asarray(Z_hat, dtype=float)
    A = np.asarray(A, dtype=float)
    Y = np.asarray(Y, dtype=float)
    r = Z_hat.shape[1]
    G = rho * np.eye(r) + Z_hat.T @ Z_hat
    c = cho_factor(G)
    b = Z_hat.T @ A                      # r x J
    d = Z_hat.T @ Y                      # r x J
    Sb = cho_solve(c, b)
    m = np.einsum("ij,ij->j", A, A)
    schur = rho + m - np.einsum("ij,ij->j", b, Sb)
    num = np.einsum("ij,ij->j", A, Y) - np.einsum("ij,ij->j", Sb, d)
    return num / schur, 1.0 / np.sqrt(schur)


@dataclass(frozen=True)
class BetaSchedule:
    """Inputs of the posterior expansion factor beta_t.

    ``scale`` multiplies the theoretical value (``scale == 1`` is the
    theoretical mode).
    """

    sigma: float
    B: float
    r: int
    n: int
    T: int
    lambda_norm_plus_tau: float
    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("beta scale must be positive")

    @property
    def mode(self) -> str:
        return "theoretical" if self.scale == 1.0 else f"scaled({self.scale:g})"

    @property
    def recovery_radius(self) -> float:
        return recovery_radius(self.sigma, self.n, self.T)

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "B": self.B, "r": self.r, "n": self.n, "T": self.T,
                "lambda_norm_plus_tau": self.lambda_norm_plus_tau, "scale": self.scale}


def beta_t(schedule: BetaSchedule, t: int) -> float:
    """Width multiplier of the uniform approximate posterior after t observations.

    2 sigma sqrt(2 (r+1) log(t (r+1 + t (B+1+alpha)))) + (|lambda*|+|tau*|)(1+alpha),
    with the log t part floored at log 2 so the first epoch is not degenerate.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    s = schedule
    alpha = s.recovery_radius
    d = s.r + 1
    log_term = max(np.log(t), np.log(2.0)) + np.log(d + t * (s.B + 1.0 + alpha))
    value = 2.0 * s.sigma * np.sqrt(2.0 * d * log_term) + s.lambda_norm_plus_tau * (1.0 + alpha)
    return float(s.scale * value)


def elliptical_potential_bound(B: float, rho: float, d: int, T: int) -> float:
    """sqrt((B^2/rho) d T log(1 + T B^2 / (d rho)))."""
    if T <= 0:
        return 0.0
    return float(np.sqrt(B * B / rho * d * T * np.log1p(T * B * B / (d * rho))))


def elliptical_potential_sum(actions, factors, rho: float = 1.0, T0: int = 0):
    """Accumulate sum_t ||x_t||_{Omega_{t-1}^{-1}} over treatment epochs.

    ``x_t = [a_t, z_t]`` uses the true contexts; ``Omega`` starts at
    ``rho I`` and absorbs every epoch (pre-treatment included).

    Returns ``(total, max_row_norm)``; the row norm feeds the bound's B.
    """
    X = design_matrix(actions, factors)
    d = X.shape[1]
    omega = rho * np.eye(d)
    total = 0.0
    for t, x in enumerate(X):
        if t >= T0:
            total += float(np.sqrt(x @ np.linalg.solve(omega, x)))
        omega += np.outer(x, x)
    return total, float(np.max(np.linalg.norm(X, axis=1)))
