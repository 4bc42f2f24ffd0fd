"""Epoch-loop engine, the four designs and regret accounting."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .latent import LatentCache, LatentEstimate, estimate_factors
from .panel import PanelData
from .ridge import BetaSchedule, RidgeFit, beta_t, fit_ridge

KINDS = ("scts", "ucb", "fixed", "switchback")
SCHEMA_VERSION = 1


@dataclass
class PolicyState:
    """Mutable state of one design during one experiment.

    ``r``, ``rho`` and ``beta_schedule`` are only used by the regression
    based designs (scts, ucb); ``seed`` only by the randomised ones (scts,
    switchback).  ``r`` is still needed by fixed/switchback to produce the
    final ridge estimate.
    """

    kind: str
    r: int = 1
    rho: float = 1.0
    beta_schedule: BetaSchedule | None = None
    seed: int | None = None
    refresh_every: int = 1
    latent_cache: LatentCache | None = field(default=None, repr=False)
    current_fit: RidgeFit | None = field(default=None, repr=False)
    latent: LatentEstimate | None = field(default=None, repr=False)
    trace: dict = field(default_factory=lambda: {"tau_hat": [], "sigma_hat": [], "tau_tilde": [], "beta": []})

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown design {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("scts", "ucb") and self.beta_schedule is None:
            raise ValueError(f"{self.kind} needs a beta schedule")
        if self.refresh_every < 1:
            raise ValueError("refresh_every must be >= 1")
        self.rng = np.random.default_rng(self.seed)

    def config(self) -> dict:
        return {
            "kind": self.kind, "r": self.r, "rho": self.rho, "seed": self.seed,
            "refresh_every": self.refresh_every,
            "beta_schedule": self.beta_schedule.to_dict() if self.beta_schedule else None,
        }

    @classmethod
    def from_config(cls, cfg: dict, seed=None, latent_cache=None) -> "PolicyState":
        bs = cfg.get("beta_schedule")
        return cls(kind=cfg["kind"], r=cfg["r"], rho=cfg["rho"],
                   beta_schedule=BetaSchedule(**bs) if bs else None,
                   seed=cfg.get("seed") if seed is None else seed,
                   refresh_every=cfg.get("refresh_every", 1), latent_cache=latent_cache)


def _latent(state: PolicyState, Y: np.ndarray) -> LatentEstimate:
    if state.latent_cache is not None:
        return state.latent_cache.get(Y)
    return estimate_factors(Y, state.r)


def _refit(state: PolicyState, panel: PanelData) -> RidgeFit:
    """Refresh (Z_hat, ridge fit) unless the refresh cadence says to reuse."""
    t = panel.epochs
    due = state.current_fit is None or (panel.treatment_epochs % state.refresh_every == 0)
    if not due:
        return state.current_fit
    if t == 0:
        state.latent = None
        Z = np.zeros((0, state.r))
    else:
        state.latent = _latent(state, panel.donor_obs)
        Z = state.latent.padded()
    state.current_fit = fit_ridge(panel.unit_obs, panel.actions, Z, state.rho)
    return state.current_fit


def _record(state, fit, beta, tau_tilde):
    state.trace["tau_hat"].append(fit.tau_hat)
    state.trace["sigma_hat"].append(fit.sigma_hat)
    state.trace["tau_tilde"].append(tau_tilde)
    state.trace["beta"].append(beta)


def scts_step(state: PolicyState, panel: PanelData):
    """Thompson step: sample tau from Unif[tau_hat -/+ beta sigma_hat], treat iff >= 0."""
    fit = _refit(state, panel)
    beta = beta_t(state.beta_schedule, max(panel.epochs, 1))
    half = beta * fit.sigma_hat
    u = state.rng.random()
    tau_tilde = fit.tau_hat + half * (2.0 * u - 1.0)
    _record(state, fit, beta, tau_tilde)
    return int(tau_tilde >= 0.0), state


def ucb_step(state: PolicyState, panel: PanelData):
    """Optimistic step: treat iff tau_hat + beta sigma_hat >= 0."""
    fit = _refit(state, panel)
    beta = beta_t(state.beta_schedule, max(panel.epochs, 1))
    ucb = fit.tau_hat + beta * fit.sigma_hat
    _record(state, fit, beta, ucb)
    return int(ucb >= 0.0), state


def fixed_step(state: PolicyState, panel: PanelData):
    return 1, state


def switchback_step(state: PolicyState, panel: PanelData):
    return int(state.rng.random() < 0.5), state


STEPS = {"scts": scts_step, "ucb": ucb_step, "fixed": fixed_step, "switchback": switchback_step}


@dataclass(frozen=True)
class RegretTrace:
    per_epoch: np.ndarray
    total: float
    suboptimal_count: int

    @property
    def normalized(self) -> float:
        """Fraction of treatment epochs with the sub-optimal action."""
        return self.suboptimal_count / len(self.per_epoch) if len(self.per_epoch) else 0.0


def compute_regret(tau_star: float, actions) -> RegretTrace:
    a = np.asarray(actions, dtype=float)
    optimal = 1.0 if tau_star >= 0 else 0.0
    wrong = a != optimal
    per = abs(tau_star) * wrong.astype(float)
    count = int(wrong.sum())
    return RegretTrace(per_epoch=per, total=abs(tau_star) * count, suboptimal_count=count)


@dataclass
class ExperimentResult:
    """Everything a finished experiment produced.

    ``M`` lists the 1-based treatment epochs with ``a_t = 1``.  The full
    panel and the policy configuration are kept so the experiment can be
    replayed (randomisation tests need both).
    """

    design: str
    panel: PanelData
    tau_star: float | None
    regret: RegretTrace | None
    M: list
    final_fit: RidgeFit | None
    final_latent: LatentEstimate | None = field(default=None, repr=False)
    trace: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    policy: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.panel.treatment_epochs

    @property
    def T0(self) -> int:
        return self.panel.T0

    @property
    def tau_hat(self) -> float:
        return self.final_fit.tau_hat

    def to_dict(self) -> dict:
        p = self.panel
        return {
            "schema_version": SCHEMA_VERSION,
            "design": self.design,
            "T0": p.T0,
            "T": self.T,
            "tau_star": self.tau_star,
            "actions": [int(a) for a in p.treatment_actions],
            "M": list(self.M),
            "regret": None if self.regret is None else {
                "per_epoch": self.regret.per_epoch.tolist(),
                "total": self.regret.total,
                "suboptimal_count": self.regret.suboptimal_count,
                "normalized": self.regret.normalized,
            },
            "trace": {k: [float(v) for v in vals] for k, vals in self.trace.items()},
            "final": None if self.final_fit is None else {
                "tau_hat": self.final_fit.tau_hat, "sigma_hat": self.final_fit.sigma_hat,
            },
            "seeds": self.seeds,
            "policy": self.policy,
            "metadata": self.metadata,
            "panel": {
                "donor_obs": p.donor_obs.tolist(),
                "unit_obs": p.unit_obs.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentResult":
        from .errors import DataError

        if d.get("schema_version") != SCHEMA_VERSION:
            raise DataError(f"unsupported schema_version {d.get('schema_version')!r}")
        if "panel" not in d or "donor_obs" not in d["panel"]:
            raise DataError("experiment record has no donor panel")
        T0 = int(d["T0"])
        actions = np.concatenate([np.zeros(T0, dtype=np.int8), np.asarray(d["actions"], dtype=np.int8)])
        panel = PanelData(np.asarray(d["panel"]["donor_obs"], dtype=float),
                          np.asarray(d["panel"]["unit_obs"], dtype=float), actions, T0)
        reg = d.get("regret")
        regret = None if reg is None else RegretTrace(
            np.asarray(reg["per_epoch"], dtype=float), reg["total"], reg["suboptimal_count"])
        final_fit = None
        r = (d.get("policy") or {}).get("r")
        if r is not None:
            final_fit, latent = final_ridge(panel, r, (d.get("policy") or {}).get("rho", 1.0))
        else:
            latent = None
        return cls(design=d["design"], panel=panel, tau_star=d.get("tau_star"), regret=regret,
                   M=list(d["M"]), final_fit=final_fit, final_latent=latent,
                   trace=d.get("trace", {}), seeds=d.get("seeds", {}),
                   policy=d.get("policy", {}), metadata=d.get("metadata", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "ExperimentResult":
        return cls.from_dict(json.loads(Path(path).read_text()))


def final_ridge(panel: PanelData, r: int, rho: float = 1.0, cache: LatentCache | None = None):
    """Ridge fit on the complete panel; returns ``(fit, latent)``."""
    latent = cache.get(panel.donor_obs) if cache is not None else estimate_factors(panel.donor_obs, r)
    return fit_ridge(panel.unit_obs, panel.actions, latent.padded(), rho), latent


def run_experiment(design: PolicyState, generator, T0: int | None = None, T: int | None = None,
                   seeds: dict | None = None) -> ExperimentResult:
    """Play ``T0`` pre-treatment epochs with a = 0, then ``T`` epochs of ``design``.

    Each action is computed from the panel of already emitted epochs only.
    """
    T0 = generator.T0 if T0 is None else T0
    T = generator.T if T is None else T
    if generator.epochs_emitted != 0:
        raise ValueError("generator must be fresh")
    if T0 != generator.T0 or T > generator.T:
        raise ValueError(f"generator has T0={generator.T0}, T={generator.T}; asked for T0={T0}, T={T}")
    step = STEPS[design.kind]
    for _ in range(T0):
        generator.step(0)
    for _ in range(T):
        action, design = step(design, generator.panel())
        generator.step(action)
    panel = generator.panel()
    fit, latent = final_ridge(panel, design.r, design.rho, design.latent_cache)
    tau_star = getattr(generator, "tau_star", None)
    acts = panel.treatment_actions
    return ExperimentResult(
        design=design.kind,
        panel=panel,
        tau_star=tau_star,
        regret=None if tau_star is None else compute_regret(tau_star, acts),
        M=[int(i) + 1 for i in np.flatnonzero(acts)],
        final_fit=fit,
        final_latent=latent,
        trace={k: list(v) for k, v in design.trace.items() if v},
        seeds=dict(seeds or {}, policy=design.seed),
        policy=design.config(),
    )
