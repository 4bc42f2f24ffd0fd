from __future__ import annotations

import sys
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("pkg", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pkg")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def fail_ucb_spec(T=500, tau_star=-1.0, n=5, T0=0):
    """Noise-free rank-1 instance: z_t = 1, donor loadings 1, unit loading 1 - tau*."""
    from scts.panel import FactorModelSpec

    return FactorModelSpec(n=n, r=1, T0=T0, T=T, sigma=0.0, tau_star=tau_star,
                           loadings=np.ones((n, 1)), factors=np.ones((T0 + T, 1)),
                           lambda_star=np.array([1.0 - tau_star]))


@pytest.fixture(scope="session")
def desk_benchmark(tmp_path_factory):
    """Desk-scale benchmark (n=200, T0=T=200, r=10, SNR 1, 30 instances), run once."""
    from scts.bench import BenchmarkConfig, run_benchmark

    out = tmp_path_factory.mktemp("desk")
    cfg = BenchmarkConfig(instances=30, output_dir=str(out))
    start = time.perf_counter()
    report = run_benchmark(cfg, out)
    report.elapsed = time.perf_counter() - start
    report.output_dir = out
    return report


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
