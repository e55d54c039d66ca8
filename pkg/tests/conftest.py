import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dynesom.objective import make_dynamic_least_squares
from dynesom.topology import generate_random_graph, metropolis_weights

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


def small_problem(n=6, p=3, horizon=30, change_period=10, seed=0, r_c=0.5, noise_std=0.5):
    g = generate_random_graph(n, r_c, seed)
    W = metropolis_weights(g)
    obj = make_dynamic_least_squares(n, p, horizon, change_period=change_period, seed=seed,
                                     noise_std=noise_std, redraw_noise=False)
    return g, W, obj


@pytest.fixture
def problem():
    return small_problem()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report: parts are recorded by test_acceptance.py and
# folded into one PASS/FAIL line per criterion at the end of the session
ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    ACCEPTANCE.setdefault(number, []).append((bool(ok), detail))
    print(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        ok = all(p[0] for p in parts)
        if len(parts) > 1:
            detail = "; ".join(f"[{'ok' if p[0] else 'FAIL'}] {p[1]}" for p in parts)
        else:
            detail = parts[0][1]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
