import itertools

import pytest

from ionspam.atom import (
    INDEX,
    N_STATES,
    QUBIT_0,
    QUBIT_1,
    STATES,
    AtomSpec,
    BranchingTable,
    HyperfineState,
    SplittingTable,
    TermForbidden,
    allowed_F,
    line_strength,
    manifold,
    transition_detuning,
)
from ionspam.dynamics import LaserField

SPEC = AtomSpec()


def test_state_space():
    assert N_STATES == 36
    assert STATES[0] == HyperfineState("S1/2", 0, 0)
    assert INDEX[QUBIT_0] == 0 and INDEX[QUBIT_1] == 2
    assert allowed_F("D5/2") == (2, 3)
    with pytest.raises(ValueError):
        manifold("S1/2", 2)


def test_upper_state_strengths_are_normalized():
    for up in STATES:
        if up.term not in ("P1/2", "P3/2"):
            continue
        for lower_term in ("S1/2", "D3/2", "D5/2"):
            total = sum(line_strength(lo, up, q) for lo in STATES if lo.term == lower_term for q in (-1, 0, 1))
            if up.term == "P1/2" and lower_term == "D5/2":
                assert total == 0
            else:
                assert total == pytest.approx(1.0, abs=1e-12)


def test_term_forbidden_pair_flagged():
    s = line_strength(HyperfineState("D5/2", 2, 0), HyperfineState("P1/2", 1, 0), 0)
    assert isinstance(s, TermForbidden) and s == 0


def test_decay_probabilities_sum_to_one():
    for up in STATES:
        if up.term in ("P1/2", "P3/2"):
            assert sum(p for _, p in SPEC.decay_channels(up)) == pytest.approx(1.0, abs=1e-12)


def _decay_to(upper_F, lower_term, lower_F):
    up = HyperfineState("P3/2", upper_F, 0)
    return sum(p for s, p in SPEC.decay_channels(up) if s.term == lower_term and s.F == lower_F)


def test_p32_f2_decays_to_d52_f3():
    # 14/15 of the D5/2 branch goes to F=3
    assert _decay_to(2, "D5/2", 3) / 0.23 == pytest.approx(14 / 15, abs=1e-12)


def test_p32_f1_cannot_reach_d52_f3():
    assert _decay_to(1, "D5/2", 3) == 0.0


def test_p32_f1_to_s_f0_fraction():
    # the angular factor fixes this at 2/3 of the S1/2 branch
    assert _decay_to(1, "S1/2", 0) == pytest.approx(0.74 * 2 / 3, abs=1e-12)


def test_detuning_examples():
    laser = LaserField("455", ("S1/2", 1), ("P3/2", 2))
    assert transition_detuning(SPEC, laser, ("S1/2", 1), ("P3/2", 1)) == pytest.approx(-623.0)
    laser = LaserField("614", ("D5/2", 3), ("P3/2", 2))
    assert transition_detuning(SPEC, laser, ("D5/2", 2), ("P3/2", 2)) == pytest.approx(83.0)
    with pytest.raises(ValueError):
        transition_detuning(SPEC, laser, ("S1/2", 1), ("P3/2", 2))


def test_hyperfine_centroid_is_zero():
    spl = SplittingTable()
    for term in ("S1/2", "P1/2", "D3/2", "P3/2", "D5/2"):
        lo, hi = allowed_F(term)
        c = sum((2 * F + 1) * spl.offset(term, F) for F in (lo, hi))
        assert c == pytest.approx(0.0, abs=1e-9)
        assert abs(spl.offset(term, hi) - spl.offset(term, lo)) == pytest.approx(spl.splitting(term))


def test_branching_validation():
    with pytest.raises(ValueError):
        BranchingTable({"P3/2": {"S1/2": 0.7, "D5/2": 0.23, "D3/2": 0.03}, "P1/2": {"S1/2": 0.73, "D3/2": 0.27}})
    with pytest.raises(ValueError):
        BranchingTable({"P3/2": {"S1/2": 0.74, "D5/2": 0.23, "D3/2": 0.03},
                        "P1/2": {"S1/2": 0.73, "D5/2": 0.27}})


def test_with_changes_returns_new_spec():
    s2 = SPEC.with_changes(splittings={"P3_2": 600.0})
    assert s2.splittings.P3_2 == 600.0 and SPEC.splittings.P3_2 == 623.0


@pytest.mark.parametrize("up,lo", list(itertools.product(["P3/2", "P1/2"], ["S1/2", "D3/2"])))
def test_selection_rule_delta_m(up, lo):
    for u in (s for s in STATES if s.term == up):
        for l in (s for s in STATES if s.term == lo):
            for q in (-1, 0, 1):
                if line_strength(l, u, q) > 0:
                    assert u.mF - l.mF == q
