from __future__ import annotations

import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chisquare

from oracles import p_value_loop
from scts.errors import ConfigError, DataError
from scts.inference import (ReplayEngine, ReplayGenerator, RerandomizationConfig, invert_to_ci,
                            p_value, rerandomize_test)
from scts.latent import LatentCache
from scts.panel import FactorModelSpec, generate_instance
from scts.policies import PolicyState, run_experiment
from scts.ridge import BetaSchedule
from scts.seeding import derive_seed


def schedule(spec, scale):
    return BetaSchedule(spec.sigma, spec.context_bound, spec.r, spec.n, spec.T0 + spec.T,
                        spec.lambda_norm + abs(spec.tau_star), scale)


def history(seed=0, tau=1.0, kind="scts", n=30, r=2, T0=30, T=40, scale=0.1, sigma=1.0, cache=None):
    spec = FactorModelSpec.random(n, r, T0, T, sigma, tau, seed=seed)
    st_ = PolicyState(kind, r=r, beta_schedule=schedule(spec, scale) if kind in ("scts", "ucb") else None,
                      seed=derive_seed("hist", seed), latent_cache=cache)
    return run_experiment(st_, generate_instance(spec, derive_seed("noise", seed)))


# --- p-values and config ---------------------------------------------------

@given(stat=st.floats(-5, 5), samples=st.lists(st.floats(-5, 5), min_size=1, max_size=50))
def test_p_value_formula(stat, samples):
    assert p_value(stat, samples) == pytest.approx(p_value_loop(stat, samples), abs=1e-12)
    p2 = p_value(stat, samples, two_sided=True)
    p = p_value_loop(stat, samples)
    assert p2 == pytest.approx(min(1.0, 2 * min(p, 1 - p)), abs=1e-12)


def test_statistic_below_all_samples():
    assert p_value(-10.0, [0.0, 1.0, 2.0]) == 1.0


def test_config_validation_and_seeds():
    with pytest.raises(ConfigError):
        RerandomizationConfig(k=0)
    with pytest.raises(ConfigError):
        RerandomizationConfig(alpha=0.0)
    with pytest.raises(ConfigError):
        RerandomizationConfig(grid=(1.0, 0.0, 0.1))
    with pytest.raises(ConfigError):
        RerandomizationConfig(grid=(0.0, 1.0, 0.0))
    cfg = RerandomizationConfig(k=3, base_seed=11)
    assert cfg.replay_seeds() == [derive_seed(11, "replay", i) for i in range(3)]


def test_report_invariants_and_determinism():
    h = history(1)
    cfg = RerandomizationConfig(k=40, alpha=0.2, base_seed=5)
    a = rerandomize_test(h, 0.3, cfg)
    b = rerandomize_test(h, 0.3, cfg)
    assert a.to_dict() == b.to_dict()
    assert a.samples.size == 40
    assert a.p_value == 1 - np.count_nonzero(a.samples < a.statistic) / 40
    assert a.rejected == (a.p_value < 0.2)
    assert a.statistic == pytest.approx(h.tau_hat, abs=1e-10)


def test_level_one_rejects_everything():
    h = history(2)
    rep = rerandomize_test(h, 50.0, RerandomizationConfig(k=10, alpha=1.0))
    assert rep.p_value == 1.0 and rep.rejected


def test_history_requirements():
    h = history(0, kind="fixed")
    with pytest.raises(DataError):
        rerandomize_test(h, 0.0, RerandomizationConfig(k=2))
    h = history(0)
    h.policy = dict(h.policy)
    h.panel.donor_obs = np.zeros((0, h.panel.epochs))
    with pytest.raises(DataError):
        ReplayEngine(h)


# --- replay mechanics ------------------------------------------------------

@pytest.mark.parametrize("kind", ["scts", "ucb", "switchback"])
def test_batched_replays_equal_sequential_runs(kind):
    h = history(3, kind=kind)
    cfg = RerandomizationConfig(k=4, base_seed=2)
    eng = ReplayEngine(h)
    for tau in (-0.5, 0.0, 1.3):
        batch = eng.samples(tau, cfg)
        for j, seed in enumerate(cfg.replay_seeds()):
            st_ = PolicyState.from_config(h.policy, seed=seed)
            rep = run_experiment(st_, ReplayGenerator(h, tau))
            assert batch[j] == pytest.approx(rep.tau_hat, abs=1e-10)


def test_replay_with_history_seed_reproduces_history():
    h = history(4, tau=0.7)
    rep = run_experiment(PolicyState.from_config(h.policy), ReplayGenerator(h, 0.7))
    np.testing.assert_array_equal(rep.panel.actions, h.panel.actions)
    np.testing.assert_allclose(rep.panel.unit_obs, h.panel.unit_obs, atol=1e-12)
    np.testing.assert_array_equal(rep.panel.donor_obs, h.panel.donor_obs)


def test_noiseless_confidence_set():
    spec = FactorModelSpec.random(20, 2, 20, 60, sigma=0.0, tau_star=0.8, seed=1)
    h = run_experiment(PolicyState("switchback", r=2, seed=3), generate_instance(spec, 0))
    step = 0.05
    one = invert_to_ci(h, RerandomizationConfig(k=50, grid=(-1, 3, step)))
    assert abs(one.accepted.min() - 0.8) <= step + 1e-9          # one-sided: the lower edge
    two = invert_to_ci(h, RerandomizationConfig(k=50, grid=(-1, 3, step), two_sided=True))
    assert two.accepted.size > 0 and np.all(np.abs(two.accepted - 0.8) <= step + 1e-9)


def test_empty_confidence_set_warns():
    h = history(5, tau=1.0)
    with pytest.warns(RuntimeWarning):
        cs = invert_to_ci(h, RerandomizationConfig(k=10, alpha=1.0, grid=(0, 1, 0.5)))
    assert cs.empty and cs.hull is None and not cs.contains(0.5)
    assert cs.to_dict()["empty"] is True


def test_default_grid_is_centred_on_statistic():
    h = history(6)
    eng = ReplayEngine(h)
    grid = eng.default_grid(RerandomizationConfig())
    mid = grid[len(grid) // 2]
    assert mid == pytest.approx(eng.statistic, abs=1e-9)
    assert len(grid) == 49


# --- statistical properties ------------------------------------------------

def test_exchangeability_rank_uniformity():
    k = 19
    ranks = []
    for i in range(200):
        h = history(100 + i, tau=0.5, scale=0.2)
        rep = rerandomize_test(h, 0.5, RerandomizationConfig(k=k, base_seed=i))
        ranks.append(int(np.count_nonzero(rep.samples < rep.statistic)))
    counts = np.bincount(ranks, minlength=k + 1)
    assert chisquare(counts).pvalue > 0.01


def test_p_value_rises_past_the_truth():
    h = history(7, tau=1.0, T=80, scale=0.2)
    eng = ReplayEngine(h)
    cfg = RerandomizationConfig(k=60, base_seed=1)
    taus = np.linspace(-2.0, 4.0, 41)
    draws = eng.run(np.repeat(taus, cfg.k), cfg.replay_seeds() * taus.size).reshape(taus.size, cfg.k)
    p = np.array([p_value(eng.statistic, row) for row in draws])
    ma = np.convolve(p, np.ones(5) / 5, mode="valid")
    assert np.all(np.diff(ma) >= -1e-12)
    assert p[0] < 0.05 and p[-1] > 0.95


def test_coverage_stable_in_k():
    cov = {25: [], 100: []}
    for i in range(150):
        cache = LatentCache(3)
        h = history(500 + i, tau=1.0, n=40, r=3, T0=40, T=40, scale=0.1, cache=cache)
        eng = ReplayEngine(h, cache)
        for k in cov:
            cov[k].append(not eng.test(1.0, RerandomizationConfig(k=k, base_seed=i)).rejected)
    assert abs(np.mean(cov[25]) - np.mean(cov[100])) < 0.05


def test_ci_hull_agrees_with_test_at_truth():
    agree = 0
    for i in range(12):
        cache = LatentCache(3)
        h = history(900 + i, tau=1.0, n=60, r=3, T0=60, T=60, scale=0.1, cache=cache)
        eng = ReplayEngine(h, cache)
        cfg = RerandomizationConfig(k=50, base_seed=i)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            cs = eng.invert(cfg)
        agree += cs.contains(1.0) == (not eng.test(1.0, cfg).rejected)
    assert agree >= 11
