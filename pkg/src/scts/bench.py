"""Benchmark orchestration: regret/RMSE tables, inference tables, plot-ready series.

One *instance* fixes the world (factor model or choice of experimental
unit) and the outcome noise stream; every design and every effect size is
played against that same instance, and all of them share one
:class:`~scts.latent.LatentCache` because the donor panel never depends on
the actions.  Workers therefore receive whole instances, and results are
reduced in (design, tau, instance) order so the output does not depend on
the worker count.

Everything written to disk is derived from the per-instance records in
``instances.jsonl``; :func:`aggregate` rebuilds the summary rows from those
records alone.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import re
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .estimation import estimate_diff_in_means, estimate_sc, estimate_scts, fit_sc_from_panel
from .inference import ReplayEngine, RerandomizationConfig
from .latent import LatentCache, estimate_factors
from .panel import (FactorModelSpec, InstanceGenerator, SemiSyntheticGenerator, ingest_panel_csv,
                    load_layout, read_key_values, residual_sigma)
from .policies import KINDS, PolicyState, run_experiment
from .ridge import BetaSchedule, elliptical_potential_bound, elliptical_potential_sum, ridge_tau_batch
from .seeding import derive_seed

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCENARIOS = ("synthetic", "semi_synthetic")
COVERAGE_METHODS = ("test", "ci")
OUTPUT_ENV = "SCTS_OUTPUT_DIR"

# estimator whose path feeds the rmse series of each design
PRIMARY = {"scts": "ridge_thresholded", "ucb": "ridge_thresholded", "fixed": "sc", "switchback": "ridge"}
THRESHOLDED = {"ridge_thresholded", "sc_thresholded"}


def parse_beta_mode(mode: str) -> float:
    """``"theoretical"`` -> 1.0, ``"scaled(c)"`` -> c."""
    mode = str(mode).strip()
    if mode == "theoretical":
        return 1.0
    m = re.fullmatch(r"scaled\(\s*([0-9.eE+-]+)\s*\)", mode)
    if m:
        try:
            c = float(m.group(1))
        except ValueError:
            c = -1.0
        if c > 0:
            return c
    raise ConfigError(f"beta_mode must be 'theoretical' or 'scaled(c)' with c > 0, got {mode!r}")


@dataclass(frozen=True)
class BenchmarkConfig:
    """Everything that determines a benchmark run.

    ``tau_values`` are signed multiples of the noise scale (``sigma`` in the
    synthetic scenario, the rank-r residual scale of the panel in the
    semi-synthetic one), so ``tau_values=(-1, 1)`` means SNR 1 with both
    signs.  ``output_dir`` and ``workers`` do not enter the config hash.
    """

    scenario: str = "synthetic"
    n: int = 200
    r: int = 10
    T0: int = 200
    T: int = 200
    sigma: float = 1.0
    data_path: str | None = None
    layout_path: str | None = None
    designs: tuple = ("scts", "ucb", "fixed", "switchback")
    instances: int = 30
    base_seed: int = 0
    tau_values: tuple = (-1.0, 1.0)
    beta_mode: str = "scaled(0.02)"
    rho: float = 1.0
    refresh_every: int = 1
    lambda_bound: float | None = None
    output_dir: str = "scts_output"
    workers: int = 1
    # re-randomisation benchmark
    snr_list: tuple = (0.01, 0.1, 1.0)
    k: int = 100
    alpha: float = 0.1
    infer_beta_mode: str = "scaled(0.1)"
    coverage_method: str = "test"

    def __post_init__(self):
        object.__setattr__(self, "designs", tuple(self.designs))
        object.__setattr__(self, "tau_values", tuple(float(v) for v in self.tau_values))
        object.__setattr__(self, "snr_list", tuple(float(v) for v in self.snr_list))
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if not self.designs:
            raise ConfigError("designs must not be empty")
        bad = [d for d in self.designs if d not in KINDS]
        if bad:
            raise ConfigError(f"unknown designs {bad}; expected a subset of {KINDS}")
        if len(set(self.designs)) != len(self.designs):
            raise ConfigError("designs contain duplicates")
        if self.instances < 1:
            raise ConfigError("instances must be >= 1")
        if not self.tau_values or any(v == 0 for v in self.tau_values):
            raise ConfigError("tau_values must be a non-empty list of non-zero reals")
        if self.r < 1 or self.T < 1 or self.T0 < 0:
            raise ConfigError("need r >= 1, T >= 1, T0 >= 0")
        if self.scenario == "synthetic":
            if self.n < self.r:
                raise ConfigError("need n >= r")
            if self.sigma < 0:
                raise ConfigError("sigma must be non-negative")
        elif not self.data_path:
            raise ConfigError("semi_synthetic scenario needs data_path")
        if self.rho <= 0 or self.refresh_every < 1 or self.workers < 1:
            raise ConfigError("need rho > 0, refresh_every >= 1, workers >= 1")
        parse_beta_mode(self.beta_mode)
        parse_beta_mode(self.infer_beta_mode)
        if self.coverage_method not in COVERAGE_METHODS:
            raise ConfigError(f"coverage_method must be one of {COVERAGE_METHODS}")
        if not self.snr_list or any(v < 0 for v in self.snr_list):
            raise ConfigError("snr_list must be non-empty and non-negative")
        RerandomizationConfig(k=self.k, alpha=self.alpha)   # validates k and alpha

    @property
    def beta_scale(self) -> float:
        return parse_beta_mode(self.beta_mode)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["designs"] = list(self.designs)
        d["tau_values"] = list(self.tau_values)
        d["snr_list"] = list(self.snr_list)
        return d

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("workers")
        payload = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    @classmethod
    def from_mapping(cls, kv: dict) -> "BenchmarkConfig":
        """Build from string key/values (as read from a config file)."""
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(kv) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        kw = {}
        for key, raw in kv.items():
            raw = str(raw).strip()
            try:
                if key in ("designs",):
                    kw[key] = tuple(s.strip() for s in raw.split(",") if s.strip())
                elif key in ("tau_values", "snr_list"):
                    kw[key] = tuple(float(s) for s in raw.split(",") if s.strip())
                elif key in ("n", "r", "T0", "T", "instances", "base_seed", "refresh_every",
                             "workers", "k"):
                    kw[key] = int(raw)
                elif key in ("sigma", "rho", "alpha"):
                    kw[key] = float(raw)
                elif key == "lambda_bound":
                    kw[key] = None if raw.lower() in ("", "none") else float(raw)
                elif key in ("data_path", "layout_path"):
                    kw[key] = raw or None
                else:
                    kw[key] = raw
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "BenchmarkConfig":
        if not Path(path).exists():
            raise ConfigError(f"{path}: no such config file")
        cfg = cls.from_mapping(read_key_values(path))
        # relative data paths are resolved against the config file
        base = Path(path).resolve().parent
        upd = {}
        for key in ("data_path", "layout_path"):
            v = getattr(cfg, key)
            if v and not Path(v).is_absolute():
                upd[key] = str(base / v)
        return replace(cfg, **upd) if upd else cfg


def resolve_output_dir(config: BenchmarkConfig, override=None) -> Path:
    """Explicit override, then the environment variable, then the config."""
    return Path(override or os.environ.get(OUTPUT_ENV) or config.output_dir)


# --- instance construction -------------------------------------------------

@dataclass
class _World:
    """What one instance index fixes, independent of design and tau."""

    index: int
    noise_scale: float
    seeds: dict
    spec: FactorModelSpec | None = None          # synthetic
    O: np.ndarray | None = field(default=None, repr=False)   # semi-synthetic
    unit_index: int | None = None
    T0: int = 0
    T: int = 0
    n: int = 0
    B: float = 0.0

    def generator(self, tau_star: float):
        if self.spec is not None:
            return InstanceGenerator(self.spec.with_tau(tau_star), self.seeds["noise"])
        return SemiSyntheticGenerator(self.O, self.unit_index, tau_star, self.T0)

    def lambda_norm_plus_tau(self, tau_star: float, config: BenchmarkConfig) -> float:
        if self.spec is not None:
            return self.spec.lambda_norm + abs(tau_star)
        bound = config.lambda_bound
        return float(np.sqrt(config.r) + 1.0) if bound is None else float(bound)

    def beta_schedule(self, tau_star: float, config: BenchmarkConfig, scale: float) -> BetaSchedule:
        return BetaSchedule(sigma=self.noise_scale, B=self.B, r=config.r, n=self.n,
                            T=self.T0 + self.T,
                            lambda_norm_plus_tau=self.lambda_norm_plus_tau(tau_star, config),
                            scale=scale)


def load_panel(config: BenchmarkConfig):
    """``(O, T0, sigma_hat)`` for the semi-synthetic scenario."""
    path = Path(config.data_path)
    if not path.exists():
        raise DataError(f"{path}: no such data file")
    layout = load_layout(config.layout_path) if config.layout_path else None
    O, _ = ingest_panel_csv(path, layout)
    T0 = layout.T0 if layout is not None and layout.T0 is not None else config.T0
    if not 0 < T0 < O.shape[1]:
        raise ConfigError(f"T0={T0} must split the {O.shape[1]} epochs of {path}")
    if O.shape[0] < 2 or O.shape[0] - 1 < config.r:
        raise DataError(f"{path}: need at least r+1 = {config.r + 1} units, got {O.shape[0]}")
    return O, T0, residual_sigma(O, config.r)


def make_world(config: BenchmarkConfig, index: int, panel=None) -> _World:
    base, scen = config.base_seed, config.scenario
    if scen == "synthetic":
        seeds = {"world": derive_seed(base, scen, "world", index),
                 "noise": derive_seed(base, scen, "noise", index)}
        spec = FactorModelSpec.random(config.n, config.r, config.T0, config.T, config.sigma,
                                      0.0, seed=seeds["world"])
        scale = config.sigma if config.sigma > 0 else 1.0
        return _World(index=index, noise_scale=scale, seeds=seeds, spec=spec, T0=config.T0,
                      T=config.T, n=config.n, B=spec.context_bound)
    O, T0, sigma_hat = panel if panel is not None else load_panel(config)
    seeds = {"unit": derive_seed(base, scen, "unit", index)}
    unit = int(np.random.default_rng(seeds["unit"]).integers(O.shape[0]))
    donors_pre = np.delete(O, unit, axis=0)[:, :T0]
    # surrogate context bound: largest PCA-factor norm of the pre-treatment donors
    B = float(np.max(np.linalg.norm(estimate_factors(donors_pre, config.r).padded(), axis=1)))
    return _World(index=index, noise_scale=sigma_hat, seeds=seeds, O=O, unit_index=unit, T0=T0,
                  T=O.shape[1] - T0, n=O.shape[0] - 1, B=B)


# --- one instance ----------------------------------------------------------

def _ridge_path(result, cache: LatentCache, rho: float, threshold: bool) -> np.ndarray:
    """Ridge tau_hat after each treatment epoch, optionally thresholded at 2|M_t| >= t."""
    p = result.panel
    T0, T = p.T0, p.treatment_epochs
    out = np.empty(T)
    a = p.actions.astype(float)
    treated = np.cumsum(p.treatment_actions)
    for t in range(1, T + 1):
        L = T0 + t
        Z = cache.get(p.donor_obs[:, :L]).padded()
        tau, _ = ridge_tau_batch(Z, a[:L, None], p.unit_obs[:L, None], rho)
        v = float(tau[0])
        if threshold and 2 * treated[t - 1] < t:
            v = 0.0
        out[t - 1] = v
    return out


def _sc_path(result, w, threshold: bool) -> np.ndarray:
    p = result.panel
    gaps = p.unit_obs[p.T0:] - w.w @ p.donor_obs[:, p.T0:]
    acts = p.treatment_actions.astype(float)
    cnt = np.cumsum(acts)
    sums = np.cumsum(gaps * acts)
    t = np.arange(1, acts.size + 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        path = np.where(cnt > 0, sums / np.maximum(cnt, 1), 0.0)
    if threshold:
        path = np.where(2 * cnt >= t, path, 0.0)
    return path


def _estimates(design, result, cache, config, semi: bool):
    """Final estimates of every estimator reported for ``design``, plus the primary path."""
    p = result.panel
    est = {}
    path = None
    if design in ("scts", "ucb"):
        path = _ridge_path(result, cache, config.rho, threshold=True)
        est["ridge_thresholded"] = float(path[-1])
        if design == "scts" and not semi:
            w = fit_sc_from_panel(p)
            est["sc_thresholded"] = estimate_scts(p, w).value
    elif design == "fixed":
        if semi:
            # the robust-SC family is out of scope; this is the PCA+ridge variant
            path = _ridge_path(result, cache, config.rho, threshold=False)
        else:
            w = fit_sc_from_panel(p)
            path = _sc_path(result, w, threshold=False)
            path[-1] = estimate_sc(p, w).value
        est["sc"] = float(path[-1])
    else:
        path = _ridge_path(result, cache, config.rho, threshold=False)
        est["ridge"] = float(path[-1])
        try:
            est["diff_in_means"] = estimate_diff_in_means(p).value
        except DataError:
            est["diff_in_means"] = None
    return est, path


def _play(config, world: _World, design: str, tau_value: float, cache, scale: float):
    tau_star = tau_value * world.noise_scale
    pseed = derive_seed(config.base_seed, config.scenario, design, tau_value, world.index)
    state = PolicyState(design, r=config.r, rho=config.rho,
                        beta_schedule=world.beta_schedule(tau_star, config, scale)
                        if design in ("scts", "ucb") else None,
                        seed=pseed if design in ("scts", "switchback") else None,
                        refresh_every=config.refresh_every, latent_cache=cache)
    res = run_experiment(state, world.generator(tau_star), seeds=dict(world.seeds, policy=pseed))
    res.metadata.update(scenario=config.scenario, instance=world.index, tau_value=tau_value,
                        config_hash=config.config_hash())
    return res


def simulate(config: BenchmarkConfig, design: str, tau_value: float, index: int = 0):
    """One experiment of the benchmark grid, as a full :class:`ExperimentResult`."""
    if design not in KINDS:
        raise ConfigError(f"unknown design {design!r}")
    world = make_world(config, index)
    return _play(config, world, design, float(tau_value), LatentCache(config.r), config.beta_scale)


def run_instance(config: BenchmarkConfig, index: int, panel=None) -> list[dict]:
    """All (design, tau) records of one instance, in (design, tau) order."""
    world = make_world(config, index, panel)
    cache = LatentCache(config.r)
    scale = config.beta_scale
    semi = config.scenario == "semi_synthetic"
    records = []
    for design in config.designs:
        for v in config.tau_values:
            res = _play(config, world, design, v, cache, scale)
            tau_star, pseed = res.tau_star, res.seeds["policy"]
            est, path = _estimates(design, res, cache, config, semi)
            acts = res.panel.treatment_actions
            rec = {
                "design": design, "tau_value": v, "tau_star": tau_star, "instance": index,
                "seeds": dict(world.seeds, policy=pseed),
                "actions": "".join(str(int(a)) for a in acts),
                "suboptimal_count": res.regret.suboptimal_count,
                "normalized_regret": res.regret.normalized,
                "M_size": int(acts.sum()),
                "estimates": est,
                "primary": PRIMARY[design],
                "path": [float(x) for x in path],
            }
            if semi:
                rec["unit_index"] = world.unit_index
            if design == "scts" and not semi:
                total, bmax = elliptical_potential_sum(res.panel.actions, world.spec.factors,
                                                       config.rho, world.T0)
                rec["elliptical"] = {"sum": total, "B": bmax,
                                     "bound": elliptical_potential_bound(bmax, config.rho,
                                                                         config.r + 1, world.T)}
            records.append(rec)
    return records


def _map_instances(func, config: BenchmarkConfig, extra=None) -> list:
    """Run ``func(config, i, extra)`` for every instance, in index order."""
    jobs = [(config, i, extra) for i in range(config.instances)]
    if config.workers == 1:
        return [func(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(_call, [(func,) + j for j in jobs]))


def _call(args):
    func, *rest = args
    return func(*rest)


# --- aggregation -----------------------------------------------------------

def _sign_decision(estimator: str, value) -> bool:
    """True when the estimate declares a positive effect."""
    if value is None:
        return False
    return value != 0.0 if estimator in THRESHOLDED else value > 0.0


def aggregate(records: list[dict], config: BenchmarkConfig) -> list[dict]:
    """Summary rows, one per (design, tau, estimator), from per-instance records only."""
    rows = []
    order = sorted({(r["design"], r["tau_value"]) for r in records},
                   key=lambda k: (config.designs.index(k[0]) if k[0] in config.designs else 99, k[1]))
    semi = config.scenario == "semi_synthetic"
    for design, v in order:
        recs = sorted((r for r in records if r["design"] == design and r["tau_value"] == v),
                      key=lambda r: r["instance"])
        tau_star = recs[0]["tau_star"]
        regret = float(np.mean([r["normalized_regret"] for r in recs]))
        m_frac = float(np.mean([r["M_size"] / len(r["actions"]) for r in recs]))
        primary = recs[0]["primary"]
        names = [primary] + sorted(e for e in recs[0]["estimates"] if e != primary)
        for est in names:
            vals = [r["estimates"][est] for r in recs]
            ok = [x for x in vals if x is not None]
            rmse = (float(np.sqrt(np.mean((np.asarray(ok) - tau_star) ** 2))) / abs(tau_star)
                    if ok else float("nan"))
            sign = float(np.mean([_sign_decision(est, x) == (tau_star > 0) for x in vals]))
            note = ""
            if semi and design == "fixed":
                note = "pca_ridge variant; not comparable to robust SC"
            elif len(ok) < len(vals):
                note = f"undefined in {len(vals) - len(ok)} instances"
            rows.append({
                "scenario": config.scenario, "design": design, "estimator": est,
                "primary": int(est == primary), "tau_value": v, "tau_star": tau_star,
                "instances": len(recs), "normalized_regret_mean": regret,
                "rmse_relative": rmse, "sign_accuracy": sign, "treated_fraction_mean": m_frac,
                "note": note,
            })
    return rows


def series(records: list[dict], config: BenchmarkConfig) -> dict:
    """Per (design, tau): t, mean regret_t / (t |tau*|), rmse_t / |tau*|."""
    out = {}
    for design in config.designs:
        for v in config.tau_values:
            recs = [r for r in records if r["design"] == design and r["tau_value"] == v]
            if not recs:
                continue
            tau_star = recs[0]["tau_star"]
            opt = "1" if tau_star >= 0 else "0"
            wrong = np.array([[c != opt for c in r["actions"]] for r in recs], dtype=float)
            T = wrong.shape[1]
            t = np.arange(1, T + 1)
            regret = np.mean(np.cumsum(wrong, axis=1) / t, axis=0)
            paths = np.array([r["path"] for r in recs])
            rmse = np.sqrt(np.mean((paths - tau_star) ** 2, axis=0)) / abs(tau_star)
            out[(design, v)] = {"t": t.tolist(), "regret_norm": regret.tolist(),
                                "rmse_rel": rmse.tolist()}
    return out


# --- reports ---------------------------------------------------------------

@dataclass
class BenchmarkReport:
    config: BenchmarkConfig
    rows: list
    records: list = field(repr=False)
    series: dict = field(repr=False, default_factory=dict)

    def row(self, design: str, tau_value: float, estimator: str | None = None) -> dict:
        for r in self.rows:
            if r["design"] == design and r["tau_value"] == tau_value and (
                    r["estimator"] == estimator if estimator else r["primary"]):
                return r
        raise KeyError((design, tau_value, estimator))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "config_hash": self.config.config_hash(),
            "rows": self.rows,
            "series": [{"design": d, "tau_value": v, **s} for (d, v), s in self.series.items()],
        }


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def rows_to_csv(rows: list[dict], extra: dict | None = None) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    cols = list(rows[0]) + list(extra or {})
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        full = dict(r, **(extra or {}))
        w.writerow([_fmt(full[c]) for c in cols])
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def write_report(report: BenchmarkReport, output_dir) -> dict:
    out = Path(output_dir)
    h = report.config.config_hash()
    paths = {
        "summary": out / "summary.csv",
        "report": out / "report.json",
        "instances": out / "instances.jsonl",
    }
    _write(paths["summary"], rows_to_csv(report.rows, {"config_hash": h}))
    _write(paths["report"], json.dumps(report.to_dict(), sort_keys=True, indent=1) + "\n")
    _write(paths["instances"], "".join(json.dumps(dict(r, config_hash=h), sort_keys=True) + "\n"
                                       for r in report.records))
    return paths


def run_benchmark(config: BenchmarkConfig, output_dir=None, write: bool = True) -> BenchmarkReport:
    """Play every (instance, design, tau) experiment, aggregate, and write CSV + JSON."""
    panel = load_panel(config) if config.scenario == "semi_synthetic" else None
    log.info("benchmark %s: %d instances x %d designs x %d taus", config.config_hash(),
             config.instances, len(config.designs), len(config.tau_values))
    per_instance = _map_instances(run_instance, config, panel)
    records = [rec for batch in per_instance for rec in batch]
    records.sort(key=lambda r: (config.designs.index(r["design"]),
                                config.tau_values.index(r["tau_value"]), r["instance"]))
    report = BenchmarkReport(config, aggregate(records, config), records, series(records, config))
    if write:
        write_report(report, resolve_output_dir(config, output_dir))
    return report


def load_records(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def report_from_dir(output_dir) -> BenchmarkReport:
    """Rebuild a report from ``report.json`` (config) and ``instances.jsonl`` (records)."""
    out = Path(output_dir)
    meta_path = out / "report.json"
    if not meta_path.exists():
        raise DataError(f"{meta_path}: no such report")
    meta = json.loads(meta_path.read_text())
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"unsupported schema_version {meta.get('schema_version')!r}")
    config = BenchmarkConfig(**meta["config"])
    records = load_records(out / "instances.jsonl")
    for r in records:
        r.pop("config_hash", None)
    return BenchmarkReport(config, aggregate(records, config), records, series(records, config))


def emit_series(report: BenchmarkReport, output_dir) -> list[Path]:
    """One CSV per (design, tau) with columns t, regret_norm, rmse_rel."""
    out = Path(output_dir)
    written = []
    data = report.series or series(report.records, report.config)
    for (design, v), s in data.items():
        rows = [{"t": t, "regret_norm": a, "rmse_rel": b}
                for t, a, b in zip(s["t"], s["regret_norm"], s["rmse_rel"])]
        path = out / f"series_{design}_tau{v:+g}.csv"
        _write(path, rows_to_csv(rows))
        written.append(path)
    return written


# --- re-randomisation benchmark -------------------------------------------

def inference_instance(config: BenchmarkConfig, index: int, panel=None) -> list[dict]:
    """Coverage and power outcomes of one instance, one record per SNR."""
    world = make_world(config, index, panel)
    cache = LatentCache(config.r)
    scale = parse_beta_mode(config.infer_beta_mode)
    out = []
    for snr in config.snr_list:
        tau_star = snr * world.noise_scale
        pseed = derive_seed(config.base_seed, config.scenario, "infer", snr, index)
        state = PolicyState("scts", r=config.r, rho=config.rho,
                            beta_schedule=world.beta_schedule(tau_star, config, scale),
                            seed=pseed, refresh_every=config.refresh_every, latent_cache=cache)
        hist = run_experiment(state, world.generator(tau_star), seeds=dict(world.seeds, policy=pseed))
        rcfg = RerandomizationConfig(k=config.k, alpha=config.alpha,
                                     base_seed=derive_seed(pseed, "replays"))
        engine = ReplayEngine(hist, cache)
        t_star = engine.test(tau_star, rcfg)
        t_zero = engine.test(0.0, rcfg)
        rec = {"instance": index, "snr": snr, "tau_star": tau_star,
               "seeds": dict(world.seeds, policy=pseed, replays=rcfg.base_seed),
               "statistic": engine.statistic, "p_true": t_star.p_value, "p_zero": t_zero.p_value,
               "covered_test": not t_star.rejected, "rejected_zero": t_zero.rejected,
               "normalized_regret": hist.regret.normalized}
        if config.coverage_method == "ci":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                cs = engine.invert(rcfg)
            rec["hull"] = cs.hull
            rec["covered_ci"] = cs.contains(tau_star)
        out.append(rec)
    return out


def inference_table(records: list[dict], config: BenchmarkConfig) -> list[dict]:
    key = "covered_ci" if config.coverage_method == "ci" else "covered_test"
    rows = []
    for metric in ("coverage", "power"):
        row = {"metric": metric}
        for snr in config.snr_list:
            recs = [r for r in records if r["snr"] == snr]
            if metric == "coverage":
                row[f"snr={snr:g}"] = float(np.mean([r[key] for r in recs]))
            else:
                row[f"snr={snr:g}"] = float(np.mean([r["rejected_zero"] for r in recs]))
        rows.append(row)
    return rows


@dataclass
class InferenceReport:
    config: BenchmarkConfig
    table: list
    records: list = field(repr=False)

    def value(self, metric: str, snr: float) -> float:
        for row in self.table:
            if row["metric"] == metric:
                return row[f"snr={snr:g}"]
        raise KeyError(metric)

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "config": self.config.to_dict(),
                "config_hash": self.config.config_hash(), "table": self.table,
                "records": self.records}


def run_inference_benchmark(config: BenchmarkConfig, output_dir=None,
                            write: bool = True) -> InferenceReport:
    """Coverage (non-rejection of the true effect) and power (rejection of zero) per SNR.

    A degenerate level ``alpha = 1`` rejects every null, so coverage is 0
    and power is 1.
    """
    panel = load_panel(config) if config.scenario == "semi_synthetic" else None
    per_instance = _map_instances(inference_instance, config, panel)
    records = sorted((r for batch in per_instance for r in batch),
                     key=lambda r: (config.snr_list.index(r["snr"]), r["instance"]))
    report = InferenceReport(config, inference_table(records, config), records)
    if write:
        out = resolve_output_dir(config, output_dir)
        h = config.config_hash()
        _write(out / "inference.csv", rows_to_csv(report.table, {"config_hash": h}))
        _write(out / "inference.json", json.dumps(report.to_dict(), sort_keys=True, indent=1) + "\n")
    return report
