"""Level structure of the 133Ba+ ion (nuclear spin 1/2).

Five fine-structure terms carry two hyperfine manifolds each, giving a
36-sublevel state space in a fixed canonical order.  Everything here is
immutable; derived tables are cached per ``AtomSpec`` instance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping, NamedTuple

from .wigner import wigner3j_doubled, wigner6j_doubled

TERM_NAMES = ("S1/2", "P1/2", "D3/2", "P3/2", "D5/2")
EXCITED_TERMS = ("P1/2", "P3/2")
# doubled electronic angular momentum J
TERM_J2 = {"S1/2": 1, "P1/2": 1, "D3/2": 3, "P3/2": 3, "D5/2": 5}
NUCLEAR_SPIN2 = 1

# (lower, upper) term pairs joined by an E1 transition, labelled by wavelength
DIPOLE_LINES = {
    ("S1/2", "P1/2"): "493",
    ("S1/2", "P3/2"): "455",
    ("D3/2", "P1/2"): "650",
    ("D3/2", "P3/2"): "585",
    ("D5/2", "P3/2"): "614",
}

POLARIZATIONS = {"pi": (0,), "sigma+": (1,), "sigma-": (-1,), "iso": (-1, 0, 1)}


class HyperfineState(NamedTuple):
    term: str
    F: int
    mF: int

    def __str__(self) -> str:
        return f"{self.term}(F={self.F},mF={self.mF:+d})"


def allowed_F(term: str) -> tuple[int, int]:
    j2 = TERM_J2[term]
    return ((j2 - NUCLEAR_SPIN2) // 2, (j2 + NUCLEAR_SPIN2) // 2)


def _enumerate_states() -> tuple[HyperfineState, ...]:
    out = []
    for term in TERM_NAMES:
        for F in allowed_F(term):
            out.extend(HyperfineState(term, F, m) for m in range(-F, F + 1))
    return tuple(out)


STATES = _enumerate_states()
N_STATES = len(STATES)
INDEX = {s: i for i, s in enumerate(STATES)}

QUBIT_0 = HyperfineState("S1/2", 0, 0)
QUBIT_1 = HyperfineState("S1/2", 1, 0)


def term_mask(term: str) -> list[int]:
    return [i for i, s in enumerate(STATES) if s.term == term]


def manifold(term: str, F: int) -> list[HyperfineState]:
    if F not in allowed_F(term):
        raise ValueError(f"F={F} does not exist in {term}")
    return [s for s in STATES if s.term == term and s.F == F]


class TermForbidden(float):
    """Zero line strength returned for term pairs with no E1 coupling."""

    def __new__(cls):
        return super().__new__(cls, 0.0)

    def __repr__(self) -> str:
        return "TermForbidden()"


@dataclass(frozen=True)
class Term:
    name: str
    lifetime: float | None = None

    def __post_init__(self):
        if self.name not in TERM_NAMES:
            raise ValueError(f"unknown term {self.name!r}")
        if self.name == "S1/2" and self.lifetime is not None:
            raise ValueError("S1/2 has no radiative lifetime")
        if self.lifetime is not None and self.lifetime <= 0:
            raise ValueError(f"lifetime of {self.name} must be positive")

    @property
    def gamma(self) -> float:
        """Natural decay rate 1/tau in s^-1 (0 for the ground term)."""
        return 0.0 if self.lifetime is None else 1.0 / self.lifetime


@dataclass(frozen=True)
class SplittingTable:
    """Hyperfine splittings and isotope shifts, all in MHz.

    ``inverted`` places the lower-F manifold above the higher-F one in every
    term, as for a negative nuclear moment.  P1/2 and D3/2 splittings are
    literature-scale defaults, not measured inputs.
    """

    S1_2: float = 9925.0
    P1_2: float = 1840.0
    D3_2: float = 937.0
    P3_2: float = 623.0
    D5_2: float = 83.0
    isotope_455: float = 358.0
    isotope_614: float = 216.0
    inverted: bool = True

    def __post_init__(self):
        for name in ("S1_2", "P1_2", "D3_2", "P3_2", "D5_2"):
            if getattr(self, name) < 0:
                raise ValueError(f"splitting {name} must be non-negative")

    def splitting(self, term: str) -> float:
        return getattr(self, term.replace("/", "_"))

    def offset(self, term: str, F: int) -> float:
        """Energy of manifold F relative to the term centroid, in MHz."""
        j2 = TERM_J2[term]
        delta = self.splitting(term)
        if 2 * F > j2:
            e = delta * j2 / (2 * (j2 + 1))
        else:
            e = -delta * (j2 + 2) / (2 * (j2 + 1))
        return -e if self.inverted else e

    def isotope_shift(self, line: str) -> float:
        return {"455": self.isotope_455, "614": self.isotope_614}.get(line, 0.0)


DEFAULT_BRANCHING = {
    "P3/2": {"S1/2": 0.74, "D5/2": 0.23, "D3/2": 0.03},
    "P1/2": {"S1/2": 0.73, "D3/2": 0.27},
}

DEFAULT_LIFETIMES = {"P1/2": 7.9e-9, "D3/2": 80.0, "P3/2": 10e-9, "D5/2": 30.0}


@dataclass(frozen=True)
class BranchingTable:
    ratios: Mapping[str, Mapping[str, float]] = field(
        default_factory=lambda: {k: dict(v) for k, v in DEFAULT_BRANCHING.items()}
    )

    def __post_init__(self):
        for upper, row in self.ratios.items():
            if upper not in EXCITED_TERMS:
                raise ValueError(f"{upper} is not a decaying excited term")
            for lower in row:
                if (lower, upper) not in DIPOLE_LINES:
                    raise ValueError(f"no dipole line {upper} -> {lower}")
            if any(p < 0 for p in row.values()):
                raise ValueError(f"negative branching ratio from {upper}")
            if abs(sum(row.values()) - 1.0) > 1e-12:
                raise ValueError(f"branching ratios from {upper} do not sum to 1")

    def __getitem__(self, upper: str) -> Mapping[str, float]:
        return self.ratios[upper]

    def __hash__(self):
        return hash(tuple(sorted((u, tuple(sorted(r.items()))) for u, r in self.ratios.items())))


def dipole_line(lower_term: str, upper_term: str) -> str | None:
    return DIPOLE_LINES.get((lower_term, upper_term))


def line_strength(lower: HyperfineState, upper: HyperfineState, q) -> float:
    """Relative E1 strength for absorbing a photon of polarization ``q``.

    ``q`` is -1, 0, +1 or one of the names in ``POLARIZATIONS`` ("iso" averages
    the three components).  Strengths are normalized so that summing over all
    lower sublevels of one term and all q, from a fixed upper sublevel, gives 1.
    Term pairs without a dipole line return a ``TermForbidden`` zero.
    """
    if (lower.term, upper.term) not in DIPOLE_LINES:
        return TermForbidden()
    if isinstance(q, str):
        qs = POLARIZATIONS[q]
        return sum(_strength(lower, upper, k) for k in qs) / len(qs)
    return _strength(lower, upper, q)


def _strength(lower: HyperfineState, upper: HyperfineState, q: int) -> float:
    if upper.mF - lower.mF != q:
        return 0.0
    return _strength_table(lower.term, lower.F, upper.term, upper.F, lower.mF, q)


def _strength_table(lt, F, ut, Fp, m, q):
    key = (lt, F, ut, Fp, m, q)
    try:
        return _STRENGTH_CACHE[key]
    except KeyError:
        pass
    j2, jp2 = TERM_J2[lt], TERM_J2[ut]
    six = wigner6j_doubled(j2, jp2, 2, 2 * Fp, 2 * F, NUCLEAR_SPIN2)
    three = wigner3j_doubled(2 * F, 2, 2 * Fp, 2 * m, 2 * q, -2 * (m + q))
    val = (jp2 + 1) * (2 * F + 1) * (2 * Fp + 1) * six**2 * three**2
    _STRENGTH_CACHE[key] = val
    return val


_STRENGTH_CACHE: dict = {}


@dataclass(frozen=True)
class AtomSpec:
    """Complete level description consumed by the simulation modules."""

    terms: tuple[Term, ...] = tuple(
        Term(n, DEFAULT_LIFETIMES.get(n)) for n in TERM_NAMES
    )
    splittings: SplittingTable = SplittingTable()
    branching: BranchingTable = BranchingTable()

    def __post_init__(self):
        names = [t.name for t in self.terms]
        if sorted(names) != sorted(TERM_NAMES):
            raise ValueError("exactly the five terms S1/2, P1/2, D3/2, P3/2, D5/2 are required")
        for t in EXCITED_TERMS:
            if self.term(t).lifetime is None:
                raise ValueError(f"{t} needs a lifetime")
            if t not in self.branching.ratios:
                raise ValueError(f"missing branching ratios for {t}")

    def term(self, name: str) -> Term:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)

    def gamma(self, term: str) -> float:
        """Natural linewidth 1/tau in s^-1."""
        return self.term(term).gamma

    def linewidth_mhz(self, term: str) -> float:
        """FWHM of the natural line in MHz, Gamma/2pi."""
        return self.gamma(term) / (2 * math.pi) / 1e6

    def with_changes(self, *, lifetimes=None, splittings=None, branching=None) -> "AtomSpec":
        terms = self.terms
        if lifetimes:
            terms = tuple(
                replace(t, lifetime=lifetimes.get(t.name, t.lifetime)) for t in terms
            )
        spl = replace(self.splittings, **splittings) if splittings else self.splittings
        br = self.branching
        if branching:
            merged = {k: dict(v) for k, v in self.branching.ratios.items()}
            merged.update({k: dict(v) for k, v in branching.items()})
            br = BranchingTable(merged)
        return AtomSpec(terms, spl, br)

    # -- transition bookkeeping ------------------------------------------------

    def component_frequency(self, lower_term: str, lower_F: int, upper_term: str, upper_F: int) -> float:
        """Frequency of one hyperfine component relative to the 138Ba+ line, MHz."""
        line = dipole_line(lower_term, upper_term)
        if line is None:
            raise ValueError(f"{lower_term} and {upper_term} are not dipole connected")
        spl = self.splittings
        return (
            spl.isotope_shift(line)
            + spl.offset(upper_term, upper_F)
            - spl.offset(lower_term, lower_F)
        )

    def decay_channels(self, upper: HyperfineState) -> list[tuple[HyperfineState, float]]:
        """Spontaneous-emission destinations of ``upper`` with probabilities."""
        if upper.term not in EXCITED_TERMS:
            return []
        return list(self._decay_table[upper])

    @cached_property
    def _decay_table(self):
        table = {}
        for upper in STATES:
            if upper.term not in EXCITED_TERMS:
                continue
            chans = []
            for lower_term, b in self.branching[upper.term].items():
                for lower in STATES:
                    if lower.term != lower_term:
                        continue
                    q = upper.mF - lower.mF
                    if abs(q) > 1:
                        continue
                    p = b * _strength(lower, upper, q)
                    if p > 0:
                        chans.append((lower, p))
            table[upper] = tuple(chans)
        return table

    def __hash__(self):
        return hash((self.terms, self.splittings, self.branching))


def transition_detuning(spec: AtomSpec, laser, lower: tuple[str, int], upper: tuple[str, int]) -> float:
    """Signed detuning (MHz) of ``laser`` from the component ``lower -> upper``.

    ``lower`` and ``upper`` are ``(term, F)`` manifolds.  The laser frequency is
    its target component plus its extra detuning, so the laser sits at zero
    detuning from its own target when ``laser.detuning`` is zero.
    """
    (lt, lF), (ut, uF) = lower, upper
    if dipole_line(lt, ut) is None:
        raise ValueError(f"{lt} and {ut} are not dipole connected")
    (tlt, tlF), (tut, tuF) = laser.lower, laser.upper
    if (tlt, tut) != (lt, ut):
        raise ValueError(
            f"laser {laser.label} drives {tlt}-{tut}, not {lt}-{ut}"
        )
    nu_laser = spec.component_frequency(tlt, tlF, tut, tuF) + laser.detuning
    return nu_laser - spec.component_frequency(lt, lF, ut, uF)
