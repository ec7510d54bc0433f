import pytest

from ionspam.atom import AtomSpec
from ionspam.config import ConfigError
from ionspam.scenarios import (
    analytic_bare_limit,
    parse_start,
    simulate_cycling_readout,
    simulate_offresonant_shelving_of_zero,
    simulate_prepare_zero,
    simulate_shelving,
)


def test_bare_analytic_limit():
    assert analytic_bare_limit(AtomSpec()) == pytest.approx(0.23 / 0.26)


def test_bare_rate_close_to_limit(cfg):
    r = simulate_shelving(cfg, scheme="bare-455", mode="rate")
    assert r.value == pytest.approx(0.8846, abs=3e-3)


def test_repumped_schemes_ordered(cfg):
    iso = simulate_shelving(cfg, scheme="with-repumps", mode="rate").value
    pi = simulate_shelving(cfg, scheme="with-repumps-pi-pol", mode="rate").value
    assert 0.99 < iso < pi < 1


def test_rate_and_jump_agree(cfg):
    rate = simulate_shelving(cfg, scheme="bare-455", mode="rate").value
    jump = simulate_shelving(cfg, scheme="bare-455", mode="jump", trials=20_000)
    assert abs(jump.value - rate) < 4 * jump.sigma


def test_prepare_zero(cfg):
    r = simulate_prepare_zero(cfg, mode="rate")
    assert 0.9999 < r.value < 1


def test_offresonant_shelving_small(cfg):
    r = simulate_offresonant_shelving_of_zero(cfg, mode="rate")
    assert 0 < r.value < 5e-4


def test_parse_start():
    assert parse_start("S1/2:F=1").sum() == pytest.approx(1)
    with pytest.raises(ConfigError):
        parse_start("nonsense")


def test_unknown_scheme(cfg):
    with pytest.raises(ValueError):
        simulate_shelving(cfg, scheme="bogus")


def test_cycling_readout_is_deterministic(cfg):
    a = simulate_cycling_readout(cfg, trials=20_000, seed=5)
    b = simulate_cycling_readout(cfg, trials=20_000, seed=5)
    assert a.details == b.details
    assert 0 < a.details["eps0"] < 0.2 and 0 < a.details["eps1"] < 0.2
