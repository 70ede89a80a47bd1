import sys

import numpy as np
import pytest

from ucdw.uc_model import DemandProfile, GeneratorSpec, UcInstance, generate_fleet


def make_gen(**kw):
    base = dict(no_load_cost=5.0, marginal_cost=10.0, startup_cost=20.0, p_min=2.0, p_max=10.0, ramp_up=4.0,
                ramp_down=4.0, startup_ramp=5.0, shutdown_ramp=5.0, min_up=2, min_down=2, initial_on=False,
                initial_power=0.0)
    base.update(kw)
    if base["initial_on"] and "initial_power" not in kw:
        base["initial_power"] = base["p_min"]
    return GeneratorSpec(**base)


def random_gen(rng, n_T=6, initial_on=None):
    p_max = float(rng.uniform(5, 50))
    p_min = float(rng.uniform(0.2, 0.6) * p_max)
    su = float(p_min + rng.uniform(0, 1) * (p_max - p_min))
    on = bool(rng.integers(2)) if initial_on is None else initial_on
    return GeneratorSpec(
        no_load_cost=float(rng.uniform(0, 100)), marginal_cost=float(rng.uniform(5, 40)),
        startup_cost=float(rng.uniform(0, 300)), p_min=p_min, p_max=p_max,
        ramp_up=float(rng.uniform(0.1, 0.8) * p_max), ramp_down=float(rng.uniform(0.1, 0.8) * p_max),
        startup_ramp=su, shutdown_ramp=float(p_min + rng.uniform(0, 1) * (p_max - p_min)),
        min_up=int(rng.integers(1, n_T + 1)), min_down=int(rng.integers(1, n_T + 1)),
        initial_on=on, initial_power=float(rng.uniform(p_min, p_max)) if on else 0.0)


def random_dual(rng, n_T, scale=60.0):
    from ucdw.pricing import DualPoint
    mask = rng.random(n_T) < 0.8
    return DualPoint(rng.uniform(0, scale, n_T) * mask, rng.uniform(0, scale / 4, n_T) * (rng.random(n_T) < 0.5))


def tiny_instance(rng, n_G=3, n_T=4, load=0.5):
    fleet = [random_gen(rng, n_T) for _ in range(n_G)]
    cap = sum(g.p_max for g in fleet)
    d = rng.uniform(0.2, 1.0, n_T) * load * cap
    return UcInstance(tuple(fleet), DemandProfile(d, 0.1 * d), n_T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_fleet():
    return generate_fleet(5, 7)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")
