"""Re-randomisation tests of sharp nulls and confidence sets by test inversion.

Under the sharp null ``H_tau`` the unit outcome a replay would have seen
is ``y_hist + tau * (a - a_hist)``; donors are untouched.  A replay re-runs
the historical policy with a fresh sampler seed on those outcomes, and its
final ridge ``tau_hat`` is one draw of the test statistic under the null.

All replays of one history share the donor panel, hence the sequence of
factor estimates.  :class:`ReplayEngine` computes that sequence once and
advances every replay (for every null value) together.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .latent import LatentCache
from .panel import _BufferedGenerator
from .policies import ExperimentResult
from .ridge import BetaSchedule, beta_t, ridge_tau_batch
from .seeding import derive_seed


@dataclass(frozen=True)
class RerandomizationConfig:
    k: int = 100
    alpha: float = 0.1
    grid: tuple | None = None           # (lo, hi, step); None -> data-driven default
    base_seed: int = 0
    two_sided: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("alpha must be in (0, 1]")
        if self.grid is not None:
            lo, hi, step = self.grid
            if not (lo < hi and step > 0):
                raise ConfigError(f"grid needs lo < hi and step > 0, got {self.grid}")

    def replay_seeds(self) -> list[int]:
        return [derive_seed(self.base_seed, "replay", i) for i in range(self.k)]


@dataclass(frozen=True)
class TestReport:
    tau_null: float
    statistic: float
    samples: np.ndarray = field(repr=False)
    p_value: float
    rejected: bool
    alpha: float
    two_sided: bool = False

    def to_dict(self) -> dict:
        return {"tau_null": self.tau_null, "statistic": self.statistic,
                "samples": [float(s) for s in self.samples], "p_value": self.p_value,
                "rejected": self.rejected, "alpha": self.alpha, "two_sided": self.two_sided}


@dataclass(frozen=True)
class ConfidenceSet:
    grid: np.ndarray = field(repr=False)
    p_values: np.ndarray = field(repr=False)
    accepted: np.ndarray
    alpha: float

    @property
    def empty(self) -> bool:
        return self.accepted.size == 0

    @property
    def hull(self):
        if self.empty:
            return None
        return float(self.accepted.min()), float(self.accepted.max())

    def contains(self, tau: float) -> bool:
        """Whether ``tau`` lies in the hull of the accepted grid points."""
        h = self.hull
        return h is not None and h[0] <= tau <= h[1]

    def to_dict(self) -> dict:
        return {"grid": self.grid.tolist(), "p_values": self.p_values.tolist(),
                "accepted": self.accepted.tolist(), "hull": self.hull, "empty": self.empty,
                "alpha": self.alpha}


def p_value(statistic: float, samples, two_sided: bool = False) -> float:
    """One minus the fraction of samples strictly below the statistic."""
    samples = np.asarray(samples, dtype=float)
    p = 1.0 - np.count_nonzero(samples < statistic) / samples.size
    if two_sided:
        p = min(1.0, 2.0 * min(p, 1.0 - p))
    return float(p)


class ReplayGenerator(_BufferedGenerator):
    """Generator emitting a history's donors and null-adjusted unit outcomes.

    Sequential counterpart of :class:`ReplayEngine`, usable with
    :func:`scts.policies.run_experiment`.
    """

    def __init__(self, history: ExperimentResult, tau_null: float):
        p = history.panel
        super().__init__(p.n, p.T0, p.treatment_epochs, tau_null)
        self._donors = p.donor_obs
        self._y_hist = p.unit_obs
        self._a_hist = p.actions.astype(float)

    def _emit(self, t, action):
        return self._donors[:, t], self._y_hist[t] + self.tau_star * (action - self._a_hist[t])


class ReplayEngine:
    """Batched replays of one history's policy under sharp nulls."""

    def __init__(self, history: ExperimentResult, latent_cache: LatentCache | None = None):
        p = history.panel
        if p is None or p.donor_obs is None or p.donor_obs.size == 0:
            raise DataError("history has no donor panel")
        pol = history.policy or {}
        if pol.get("kind") not in ("scts", "ucb", "switchback"):
            raise DataError(f"cannot replay design {pol.get('kind')!r}")
        self.kind = pol["kind"]
        self.r = int(pol["r"])
        self.rho = float(pol.get("rho", 1.0))
        self.refresh_every = int(pol.get("refresh_every", 1))
        bs = pol.get("beta_schedule")
        self.beta_schedule = BetaSchedule(**bs) if bs else None
        self.Y = p.donor_obs
        self.y_hist = p.unit_obs
        self.a_hist = p.actions.astype(float)
        self.T0 = p.T0
        self.T = p.treatment_epochs
        self.cache = latent_cache if latent_cache is not None else LatentCache(self.r)
        self._statistic = None

    def _Z(self, L: int) -> np.ndarray:
        return self.cache.get(self.Y[:, :L]).padded()

    @property
    def statistic(self) -> float:
        """Final ridge tau_hat of the history, computed the same way as the samples."""
        if self._statistic is None:
            Z = self._Z(self.T0 + self.T)
            tau, _ = ridge_tau_batch(Z, self.a_hist[:, None], self.y_hist[:, None], self.rho)
            self._statistic = float(tau[0])
        return self._statistic

    def run(self, taus, seeds) -> np.ndarray:
        """Final tau_hat of every replay; column j uses ``taus[j]`` and ``seeds[j]``.

        Each replay draws one uniform per treatment epoch from its own
        ``default_rng(seed)`` stream, matching :func:`scts.policies.scts_step`.
        """
        taus = np.asarray(taus, dtype=float)
        J = taus.size
        T0, T, rho = self.T0, self.T, self.rho
        total = T0 + T
        U = np.empty((T, J))
        if self.kind in ("scts", "switchback"):
            for j, s in enumerate(seeds):
                U[:, j] = np.random.default_rng(s).random(T)
        A = np.zeros((total, J))
        Yrep = np.repeat(self.y_hist[:, None], J, axis=1)   # pre-period is unchanged
        tau_hat = np.zeros(J)
        sig_hat = np.full(J, 1.0 / np.sqrt(rho))
        for t in range(T):
            L = T0 + t
            if self.kind in ("scts", "ucb") and t % self.refresh_every == 0:
                if L == 0:
                    tau_hat = np.zeros(J)
                    sig_hat = np.full(J, 1.0 / np.sqrt(rho))
                else:
                    tau_hat, sig_hat = ridge_tau_batch(self._Z(L), A[:L], Yrep[:L], rho)
            if self.kind == "switchback":
                act = (U[t] < 0.5).astype(float)
            else:
                half = beta_t(self.beta_schedule, max(L, 1)) * sig_hat
                if self.kind == "scts":
                    score = tau_hat + half * (2.0 * U[t] - 1.0)
                else:
                    score = tau_hat + half
                act = (score >= 0.0).astype(float)
            A[L] = act
            Yrep[L] = self.y_hist[L] + taus * (act - self.a_hist[L])
        final, _ = ridge_tau_batch(self._Z(total), A, Yrep, rho)
        return final

    def samples(self, tau_null: float, config: RerandomizationConfig) -> np.ndarray:
        return self.run(np.full(config.k, float(tau_null)), config.replay_seeds())

    def test(self, tau_null: float, config: RerandomizationConfig) -> TestReport:
        return _report(tau_null, self.statistic, self.samples(tau_null, config), config)

    def default_grid(self, config: RerandomizationConfig) -> np.ndarray:
        if config.grid is not None:
            lo, hi, step = config.grid
        else:
            lo, hi, step = default_grid_bounds(self)
        n = int(np.floor((hi - lo) / step + 1e-9)) + 1
        return lo + step * np.arange(n)

    def invert(self, config: RerandomizationConfig, grid=None) -> ConfidenceSet:
        grid = self.default_grid(config) if grid is None else np.asarray(grid, dtype=float)
        seeds = config.replay_seeds()
        k = config.k
        taus = np.repeat(grid, k)
        draws = self.run(taus, seeds * grid.size).reshape(grid.size, k)
        stat = self.statistic
        pv = np.array([p_value(stat, row, config.two_sided) for row in draws])
        accepted = grid[~np.array([_rejects(p, config.alpha) for p in pv], dtype=bool)]
        cs = ConfidenceSet(grid=grid, p_values=pv, accepted=accepted, alpha=config.alpha)
        if cs.empty:
            warnings.warn("re-randomisation confidence set is empty", RuntimeWarning, stacklevel=2)
        return cs


def default_grid_bounds(engine: ReplayEngine):
    """tau_hat +/- 6 standard errors, step a quarter standard error.

    The standard error is sigma_hat (precision-matrix scale) times the RMS
    ridge residual, so the grid carries the outcome units.
    """
    Z = engine._Z(engine.T0 + engine.T)
    a = engine.a_hist
    y = engine.y_hist
    X = np.column_stack([a, Z])
    omega = engine.rho * np.eye(X.shape[1]) + X.T @ X
    theta = np.linalg.solve(omega, X.T @ y)
    resid = y - X @ theta
    s = float(np.sqrt(np.mean(resid ** 2))) if resid.size else 1.0
    se = s * float(np.sqrt(np.linalg.inv(omega)[0, 0]))
    if se <= 0:
        se = 1e-3
    center = engine.statistic
    return center - 6.0 * se, center + 6.0 * se, se / 4.0


def _rejects(p: float, alpha: float) -> bool:
    """``p < alpha``; a level-1 test rejects unconditionally (p can equal 1)."""
    return bool(p < alpha or alpha >= 1.0)


def _report(tau_null, stat, samples, config) -> TestReport:
    p = p_value(stat, samples, config.two_sided)
    return TestReport(tau_null=float(tau_null), statistic=float(stat), samples=samples, p_value=p,
                      rejected=_rejects(p, config.alpha), alpha=config.alpha,
                      two_sided=config.two_sided)


def rerandomize_test(history: ExperimentResult, tau_null: float, config: RerandomizationConfig,
                     engine: ReplayEngine | None = None) -> TestReport:
    engine = engine or ReplayEngine(history)
    return engine.test(tau_null, config)


def invert_to_ci(history: ExperimentResult, config: RerandomizationConfig,
                 engine: ReplayEngine | None = None) -> ConfidenceSet:
    engine = engine or ReplayEngine(history)
    return engine.invert(config)
