"""Post-experiment treatment-effect estimators and high-probability half-widths."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .latent import estimate_factors
from .panel import PanelData
from .policies import final_ridge

KINDS = ("sc", "scts", "ridge", "diff_in_means")


@dataclass(frozen=True)
class ScWeights:
    w: np.ndarray
    objective: float = float("nan")
    iterations: int = 0


@dataclass(frozen=True)
class EffectEstimate:
    value: float
    kind: str
    M_size: int | None = None
    hp_interval: tuple | None = None
    raw: float | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"value": self.value, "kind": self.kind, "M_size": self.M_size,
                "interval": None if self.hp_interval is None else list(self.hp_interval),
                "raw": self.raw, "calibration": self.metadata}


# --- simplex-constrained least squares ------------------------------------

def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1} (sort-based, exact)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    cond = u - css / k > 0
    rho = k[cond][-1]
    theta = css[cond][-1] / rho
    return np.maximum(v - theta, 0.0)


def fit_sc_weights(donor_pre: np.ndarray, unit_pre: np.ndarray, rtol: float = 1e-10,
                   max_iter: int = 50_000) -> ScWeights:
    """Convex weights matching the unit to the donors over the pre-treatment period.

    Accelerated projected gradient (FISTA with function-value restart),
    started from uniform weights, stopped once the objective improves by
    less than ``rtol`` relative.
    """
    D = np.asarray(donor_pre, dtype=float)
    y = np.asarray(unit_pre, dtype=float)
    if D.ndim != 2 or D.shape[1] == 0:
        raise DataError("synthetic control weights need at least one pre-treatment epoch")
    if y.shape != (D.shape[1],):
        raise ValueError(f"unit_pre length {y.shape} does not match donor_pre {D.shape}")
    n = D.shape[0]
    A = D.T                                  # T0 x n
    L = 2.0 * np.linalg.norm(A, 2) ** 2
    if L == 0.0:
        return ScWeights(np.full(n, 1.0 / n), float(y @ y), 0)

    def f(w):
        res = A @ w - y
        return float(res @ res)

    w = np.full(n, 1.0 / n)
    z = w.copy()
    tk = 1.0
    f_w = f(w)
    it = 0
    for it in range(1, max_iter + 1):
        grad = 2.0 * A.T @ (A @ z - y)
        w_new = project_simplex(z - grad / L)
        f_new = f(w_new)
        if f_new > f_w:
            # restart momentum from the last iterate
            z = w.copy()
            tk = 1.0
            continue
        converged = f_w - f_new <= rtol * f_w
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        z = w_new + ((tk - 1.0) / t_next) * (w_new - w)
        w, f_w, tk = w_new, f_new, t_next
        if converged:
            break
    return ScWeights(w, f_w, it)


def _sc_gaps(panel: PanelData, w: ScWeights) -> np.ndarray:
    T0 = panel.T0
    return panel.unit_obs[T0:] - w.w @ panel.donor_obs[:, T0:]


def fit_sc_from_panel(panel: PanelData) -> ScWeights:
    T0 = panel.T0
    return fit_sc_weights(panel.donor_obs[:, :T0], panel.unit_obs[:T0])


def estimate_sc(panel: PanelData, w: ScWeights) -> EffectEstimate:
    """Average gap between the unit and its synthetic control over treatment epochs."""
    acts = panel.treatment_actions
    if acts.size == 0:
        raise DataError("no treatment epochs")
    if np.any(acts != 1):
        raise ValueError("vanilla SC needs a_t = 1 on every treatment epoch; use estimate_scts")
    value = float(np.mean(_sc_gaps(panel, w)))
    return EffectEstimate(value=value, kind="sc", M_size=int(acts.size), raw=value)


def _passes_threshold(M_size: int, T: int) -> bool:
    return 2 * M_size >= T


def estimate_scts(panel: PanelData, w: ScWeights, T: int | None = None) -> EffectEstimate:
    """Synthetic-control gap averaged over treated epochs, zeroed when |M| < T/2."""
    T = panel.treatment_epochs if T is None else T
    acts = panel.treatment_actions
    mask = acts == 1
    M = int(mask.sum())
    raw = float(np.mean(_sc_gaps(panel, w)[mask])) if M else 0.0
    value = raw if _passes_threshold(M, T) else 0.0
    return EffectEstimate(value=value, kind="scts", M_size=M, raw=raw)


def estimate_ridge_final(panel: PanelData, r: int, T: int | None = None, rho: float = 1.0,
                         threshold: bool = True, cache=None) -> EffectEstimate:
    """Final ridge tau_hat on the complete panel, thresholded like :func:`estimate_scts`.

    ``threshold=False`` returns the plain ridge estimate (used for the
    switchback design).
    """
    T = panel.treatment_epochs if T is None else T
    fit, _ = final_ridge(panel, r, rho, cache)
    M = int(np.sum(panel.treatment_actions == 1))
    value = fit.tau_hat
    if threshold and not _passes_threshold(M, T):
        value = 0.0
    return EffectEstimate(value=float(value), kind="ridge", M_size=M, raw=fit.tau_hat,
                          metadata={"sigma_hat": fit.sigma_hat, "thresholded": threshold})


def estimate_diff_in_means(panel: PanelData) -> EffectEstimate:
    acts = panel.treatment_actions
    y = panel.unit_obs[panel.T0:]
    if acts.size == 0 or np.all(acts == acts[0]):
        raise DataError("difference in means needs both actions in the treatment period")
    value = float(y[acts == 1].mean() - y[acts == 0].mean())
    return EffectEstimate(value=value, kind="diff_in_means", M_size=int(acts.sum()), raw=value)


# --- high-probability intervals -------------------------------------------

def sc_constants(factors_pre: np.ndarray, factors_all: np.ndarray | None = None, r: int | None = None):
    """``(c1, c2)``: c1 is the r-th eigenvalue of the pre-period second moment
    of the factors, c2 the largest factor norm (over ``factors_all`` if given).
    """
    Zp = np.asarray(factors_pre, dtype=float)
    r = Zp.shape[1] if r is None else r
    eig = np.linalg.eigvalsh(Zp.T @ Zp / Zp.shape[0])[::-1]
    c1 = float(eig[r - 1])
    Za = Zp if factors_all is None else np.asarray(factors_all, dtype=float)
    c2 = float(np.max(np.linalg.norm(Za, axis=1)))
    return c1, c2


def sc_constants_from_data(panel: PanelData, r: int):
    """Surrogate (c1, c2) from PCA factors of the pre-treatment donor matrix."""
    est = estimate_factors(panel.donor_obs[:, : panel.T0], r)
    return sc_constants(est.padded(), r=r)


def hp_interval_sc(T: int, T0: int, sigma: float, c1: float, c2: float, n: int, delta: float):
    """The two additive half-width terms, leading constant 1.

    ``(sigma / sqrt(T) sqrt(log 1/delta), c2 sigma / sqrt(c1 T0) sqrt(log 1/delta + log n))``
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    if min(T, T0, n) <= 0 or c1 <= 0:
        raise ValueError("T, T0, n and c1 must be positive")
    L = np.log(1.0 / delta)
    first = sigma / np.sqrt(T) * np.sqrt(L)
    second = c2 * sigma / np.sqrt(c1 * T0) * np.sqrt(L + np.log(n))
    return float(first), float(second)


def with_hp_interval(est: EffectEstimate, T: int, T0: int, sigma: float, c1: float, c2: float,
                     n: int, delta: float, multiplier: float = 1.0,
                     surrogate: bool = False) -> EffectEstimate:
    """Attach ``value +/- multiplier * (sum of half-widths)`` to an estimate."""
    h = multiplier * sum(hp_interval_sc(T, T0, sigma, c1, c2, n, delta))
    meta = dict(est.metadata, multiplier=multiplier, delta=delta, surrogate_constants=surrogate)
    return EffectEstimate(est.value, est.kind, est.M_size, (est.value - h, est.value + h),
                          est.raw, meta)
