import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ionspam.experiment import (
    BudgetEntry,
    SpamConfig,
    budget_csv,
    budget_text,
    budget_total,
    error_budget,
    paren,
    qubit_capacity,
    run_spam,
    scenario_1762,
    schedule,
    wald_sigma,
    wilson_coverage,
    wilson_interval,
)
from ionspam.scenarios import simulate_shelving


@given(st.integers(1, 10**6), st.data())
@settings(max_examples=100)
def test_wilson_brackets_estimate(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = wilson_interval(k, n)
    assert 0 <= lo <= k / n <= hi <= 1


def test_wilson_edges():
    assert wilson_interval(0, 10)[0] == 0
    assert wilson_interval(10, 10)[1] == 1
    with pytest.raises(ValueError):
        wilson_interval(0, 0)
    with pytest.raises(ValueError):
        wilson_interval(5, 4)


def test_wald_digit():
    n = 156_581
    k = round(1.9e-4 * n)
    assert paren(k / n, wald_sigma(k, n)).startswith("1.9(4)")
    n1 = 157_211
    k1 = round(3.8e-4 * n1)
    assert paren(k1 / n1, wald_sigma(k1, n1)).startswith("3.8(5)")


def test_paren_fixed_point():
    assert paren(0.99971, 6e-5) == "0.99971(6)"


def test_wilson_coverage():
    assert wilson_coverage(1.9e-4, 156_581, draws=2000) >= 0.93


def test_schedule_alternates_and_covers():
    blocks = schedule(450, 300, 200)
    assert [b[0] for b in blocks] == [0, 1, 0, 1, 0]
    assert [b[2] for b in blocks] == [200, 200, 200, 100, 50]
    assert sum(b[2] for b in blocks if b[0] == 0) == 450
    starts = [b[1] for b in blocks]
    assert starts == sorted(starts) and starts[0] == 0


def test_capacity():
    assert qubit_capacity(2.9e-4) == 2390
    assert qubit_capacity(math.log(2)) == 1
    assert qubit_capacity(5.9e-2) == 11
    with pytest.raises(ValueError):
        qubit_capacity(0)


def test_budget_defaults(cfg):
    entries = error_budget(cfg)
    assert len(entries) == 6
    assert budget_total(entries) == sum(e.error for e in entries)
    assert entries[2].error == pytest.approx(0.5 * (1 - math.exp(-4.5e-3 / 30)))
    shelve = simulate_shelving(cfg, mode="rate").value
    assert entries[3].error == pytest.approx(0.5 * (1 - shelve))
    txt = budget_text(entries, 1, "abc")
    assert "Total" in txt and txt.startswith("# seed=1")
    assert budget_csv(entries).splitlines()[0] == "process,error,source"


def _zero_cfg(cfg):
    cfg["atom"]["branching"]["P3/2"] = {"S1/2": 0.0, "D5/2": 1.0, "D3/2": 0.0}
    cfg["lasers"]["455"]["linewidth"] = 0.0
    # push |0> far from every laser so off-resonant shelving vanishes
    cfg["atom"]["splittings"]["S1_2"] = 1e9
    cfg["pumping"]["duration"] = 0.0
    cfg["pumping"]["start"] = "qubit0"
    cfg["spam"].update(eps_cp=0.0, background_flip=0.0, trials_0=5000, trials_1=5000)
    cfg["readout"].update(lifetime=1e300, bright_mean=100.0, dark_mean=0.0)
    return cfg


def test_all_channels_off(cfg):
    cfg = _zero_cfg(cfg)
    rep = run_spam(cfg)
    assert rep.fidelity == 1.0 and rep.errors_0 == 0 and rep.errors_1 == 0
    assert budget_total(error_budget(cfg)) < 1e-9


def test_budget_entry_validation():
    with pytest.raises(ValueError):
        BudgetEntry("x", -1.0, "simulated")
    with pytest.raises(ValueError):
        BudgetEntry("x", 1.0, "guessed")


def test_report_identity_and_workers(cfg):
    cfg["spam"].update(trials_0=20_000, trials_1=20_000)
    a = run_spam(cfg, workers=1, with_budget=False)
    b = run_spam(cfg, workers=3, with_budget=False)
    assert a.fidelity == 1 - (a.eps0 + a.eps1) / 2
    assert a.to_json() == b.to_json()
    assert np.array_equal(a.histogram_1.occurrences, b.histogram_1.occurrences)
    assert a.histogram_0.total == 20_000


def test_rate_and_jump_agree(cfg):
    cfg["spam"].update(trials_0=100_000, trials_1=100_000)
    j = run_spam(cfg, SpamConfig.from_config(cfg, mode="jump"), with_budget=False)
    r = run_spam(cfg, SpamConfig.from_config(cfg, mode="rate"), with_budget=False)
    assert abs(j.eps0 - r.eps0) < 3 * math.hypot(j.sigma0, r.sigma0) + 1e-5
    assert abs(j.eps1 - r.eps1) < 3 * math.hypot(j.sigma1, r.sigma1) + 1e-5


def test_spam_config_validation():
    with pytest.raises(ValueError):
        SpamConfig(trials_0=0)
    with pytest.raises(ValueError):
        SpamConfig(eps_cp=2)


def test_scenario_1762_limits(cfg):
    s = scenario_1762(cfg)
    assert 2e-5 <= s.preparation_error <= 8e-5
    s1 = scenario_1762(cfg, transfer=1.0)
    assert s1.preparation_error == 0 and s1.total == s1.readout_decay_error
    s0 = scenario_1762(cfg, transfer=0.0)
    assert s0.preparation_error == pytest.approx(1 - simulate_shelving(cfg, mode="rate").value)
