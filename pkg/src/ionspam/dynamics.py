"""Optical pumping and shelving over the 36-sublevel space.

The P terms decay in ~10 ns, far faster than any pumping step, so they are
eliminated: a laser excitation followed by spontaneous decay is one
ground-to-ground transition with rate ``sum_e R(g->e) * b(e->g')``.  The
resulting generator is evolved exactly (matrix exponential) in rate mode or
sampled event by event in jump mode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import expm

from . import rng as rngmod
from .atom import (
    INDEX,
    N_STATES,
    POLARIZATIONS,
    STATES,
    AtomSpec,
    HyperfineState,
    dipole_line,
    line_strength,
    transition_detuning,
)


@dataclass(frozen=True)
class LaserField:
    """One optical drive, tuned relative to a target hyperfine component.

    ``lower`` and ``upper`` are ``(term, F)`` manifolds, ``detuning`` an extra
    offset in MHz, ``saturation`` the dimensionless s, and ``window`` the
    ``(t_on, t_off)`` interval in seconds during which the laser is on.
    ``linewidth`` (MHz FWHM) is an effective Lorentzian laser width; it
    broadens the line while conserving its integrated strength.
    """

    label: str
    lower: tuple[str, int]
    upper: tuple[str, int]
    detuning: float = 0.0
    saturation: float = 1.0
    polarization: str = "iso"
    window: tuple[float, float] = (0.0, math.inf)
    linewidth: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(self.lower))
        object.__setattr__(self, "upper", tuple(self.upper))
        object.__setattr__(self, "window", tuple(float(w) for w in self.window))
        if self.saturation < 0:
            raise ValueError("saturation must be non-negative")
        if self.linewidth < 0:
            raise ValueError("laser linewidth must be non-negative")
        if self.window[1] < self.window[0]:
            raise ValueError("laser window ends before it starts")
        if self.polarization not in POLARIZATIONS:
            raise ValueError(f"unknown polarization {self.polarization!r}")
        if dipole_line(self.lower[0], self.upper[0]) is None:
            raise ValueError(f"laser {self.label}: {self.lower[0]}-{self.upper[0]} is not a dipole line")

    def is_on(self, t: float) -> bool:
        return self.window[0] <= t < self.window[1]


def lorentzian(detuning_mhz: float, linewidth_mhz: float) -> float:
    return 1.0 / (1.0 + (2.0 * detuning_mhz / linewidth_mhz) ** 2)


def scatter_rate(spec: AtomSpec, g: HyperfineState, e: HyperfineState, laser: LaserField) -> float:
    """Excitation rate g -> e in s^-1 (low-saturation Lorentzian law).

    On resonance with unit strength and zero laser linewidth this is
    ``Gamma/2 * s``; forbidden channels give exactly zero.
    """
    if (g.term, e.term) != (laser.lower[0], laser.upper[0]) or laser.saturation == 0:
        return 0.0
    strength = line_strength(g, e, laser.polarization)
    if strength == 0:
        return 0.0
    delta = transition_detuning(spec, laser, (g.term, g.F), (e.term, e.F))
    gamma = spec.gamma(e.term)
    natural = spec.linewidth_mhz(e.term)
    width = natural + laser.linewidth
    return 0.5 * gamma * laser.saturation * strength * (natural / width) * lorentzian(delta, width)


@dataclass(frozen=True, eq=False)
class RateMatrix:
    """Column-convention generator: ``dp/dt = generator @ p``.

    ``scatter[i]`` is the total photon-scattering rate out of sublevel i,
    including excitations that decay straight back to i.
    """

    generator: np.ndarray
    scatter: np.ndarray

    @property
    def out_rates(self) -> np.ndarray:
        return -np.diag(self.generator)


def build_rate_matrix(spec: AtomSpec, lasers: Iterable[LaserField]) -> RateMatrix:
    return _build_rate_matrix(spec, tuple(lasers))


@lru_cache(maxsize=256)
def _build_rate_matrix(spec: AtomSpec, lasers: tuple[LaserField, ...]) -> RateMatrix:
    flow = np.zeros((N_STATES, N_STATES))
    scatter = np.zeros(N_STATES)
    for laser in lasers:
        lt, ut = laser.lower[0], laser.upper[0]
        lows = [s for s in STATES if s.term == lt]
        ups = [s for s in STATES if s.term == ut]
        for g in lows:
            gi = INDEX[g]
            for e in ups:
                r = scatter_rate(spec, g, e, laser)
                if r <= 0:
                    continue
                scatter[gi] += r
                for dest, p in spec.decay_channels(e):
                    flow[INDEX[dest], gi] += r * p
    gen = flow - np.diag(flow.sum(axis=0))
    gen.setflags(write=False)
    scatter.setflags(write=False)
    return RateMatrix(gen, scatter)


def _check_population(p: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(p)):
        raise FloatingPointError("population evolution produced non-finite values")
    if p.min() < -1e-9:
        raise FloatingPointError(f"population went negative ({p.min():.3e})")
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if abs(total - 1.0) > 1e-9:
        raise FloatingPointError(f"population not conserved (sum={total!r})")
    return p / total


def evolve(rm: RateMatrix, p0, t: float) -> np.ndarray:
    """Propagate a population vector for time ``t`` with fixed lasers."""
    if t < 0:
        raise ValueError("evolution time must be non-negative")
    p0 = np.asarray(p0, dtype=float)
    if t == 0:
        return p0.copy()
    return _check_population(expm(rm.generator * t) @ p0)


def segments(lasers: Sequence[LaserField], t_end: float) -> list[tuple[float, float, tuple[LaserField, ...]]]:
    """Split ``[0, t_end]`` at laser switching times; each piece has fixed lasers."""
    cuts = {0.0, float(t_end)}
    for laser in lasers:
        cuts.update(w for w in laser.window if 0.0 < w < t_end)
    edges = sorted(cuts)
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (a + b)
        out.append((a, b, tuple(l for l in lasers if l.is_on(mid))))
    return out


def evolve_schedule(spec: AtomSpec, lasers: Sequence[LaserField], p0, t_end: float) -> np.ndarray:
    p = np.asarray(p0, dtype=float).copy()
    for a, b, active in segments(lasers, t_end):
        p = evolve(build_rate_matrix(spec, active), p, b - a)
    return p


def point_population(state: HyperfineState) -> np.ndarray:
    p = np.zeros(N_STATES)
    p[INDEX[state]] = 1.0
    return p


def uniform_population(states: Iterable[HyperfineState]) -> np.ndarray:
    p = np.zeros(N_STATES)
    idx = [INDEX[s] for s in states]
    p[idx] = 1.0 / len(idx)
    return p


# -- jump mode -----------------------------------------------------------------


@dataclass
class JumpTrajectory:
    events: list[tuple[float, HyperfineState, HyperfineState]]
    final: HyperfineState
    photons: float = 0.0


@dataclass
class JumpBatch:
    """Result of many trajectories sampled in lock-step."""

    final: np.ndarray
    photons: np.ndarray
    n_events: np.ndarray
    counters: np.ndarray


def transition_tables(generator: np.ndarray):
    """Per-state total out-rate and cumulative destination probabilities."""
    n = generator.shape[0]
    out = -np.diag(generator).copy()
    probs = generator.T.copy()
    np.fill_diagonal(probs, 0.0)
    safe = np.where(out > 0, out, 1.0)
    probs = np.where(out[:, None] > 0, probs / safe[:, None], 0.0)
    cum = np.cumsum(probs, axis=1)
    # last reachable destination absorbs rounding in the cumulative sum
    for i in range(n):
        nz = np.nonzero(probs[i])[0]
        if nz.size:
            cum[i, nz[-1]:] = np.inf
    return out, cum


def run_chain(
    pieces,
    start,
    key,
    trials,
    counters=None,
    record: bool = False,
):
    """Sample competing-exponential trajectories of a continuous-time chain.

    ``pieces`` is a list of ``(t0, t1, generator, scatter)`` with the generator
    constant on each piece.  ``start`` holds initial state indices, ``trials``
    the global trial index that keys each trajectory's counter-based stream,
    so results do not depend on how trials are batched.  Returns a
    ``JumpBatch`` and, when ``record`` is set, per-trial event lists.
    """
    trials = np.asarray(trials, dtype=np.int64)
    n = trials.size
    state = np.broadcast_to(np.asarray(start, dtype=np.int64), (n,)).copy()
    ctr = np.zeros(n, dtype=np.int64) if counters is None else np.asarray(counters, dtype=np.int64).copy()
    photons = np.zeros(n)
    n_events = np.zeros(n, dtype=np.int64)
    events: list[list] | None = [[] for _ in range(n)] if record else None

    for t0, t1, generator, scatter in pieces:
        out, cum = transition_tables(generator)
        t = np.full(n, float(t0))
        live = np.arange(n)
        while live.size:
            s = state[live]
            rate = out[s]
            u = rngmod.uniform(key, trials[live], ctr[live])
            ctr[live] += 1
            with np.errstate(divide="ignore"):
                dt = np.where(rate > 0, -np.log(u) / np.where(rate > 0, rate, 1.0), np.inf)
            t_next = t[live] + dt
            done = t_next >= t1
            photons[live] += scatter[s] * (np.minimum(t_next, t1) - t[live])
            jumpers = live[~done]
            if jumpers.size:
                t_jump = t_next[~done]
                u2 = rngmod.uniform(key, trials[jumpers], ctr[jumpers])
                ctr[jumpers] += 1
                src = state[jumpers]
                dest = (u2[:, None] >= cum[src]).sum(axis=1)
                if record:
                    for k, i in enumerate(jumpers):
                        events[i].append((float(t_jump[k]), int(src[k]), int(dest[k])))
                state[jumpers] = dest
                t[jumpers] = t_jump
                n_events[jumpers] += 1
            live = jumpers
    batch = JumpBatch(state, photons, n_events, ctr)
    return (batch, events) if record else batch


def laser_pieces(spec: AtomSpec, lasers: Sequence[LaserField], t_end: float):
    out = []
    for a, b, active in segments(lasers, t_end):
        rm = build_rate_matrix(spec, active)
        out.append((a, b, rm.generator, rm.scatter))
    return out


def run_jumps(spec, lasers, start, t_end, key, trials, counters=None, record=False):
    """Jump-mode trajectories over the 36-sublevel space under ``lasers``."""
    return run_chain(laser_pieces(spec, lasers, t_end), start, key, trials, counters, record)


def sample_trajectory(
    spec: AtomSpec,
    lasers: Sequence[LaserField],
    start: HyperfineState,
    t: float,
    rng: rngmod.Stream,
) -> JumpTrajectory:
    """Sample one trajectory from ``start`` for duration ``t``."""
    batch, events = run_jumps(
        spec, lasers, [INDEX[start]], t, rng.key, [rng.trial], counters=[rng.counter], record=True
    )
    rng.counter = int(batch.counters[0])
    evs = [(time, STATES[a], STATES[b]) for time, a, b in events[0]]
    return JumpTrajectory(evs, STATES[int(batch.final[0])], float(batch.photons[0]))


def sample_populations(spec, lasers, p0, t_end, seed, n_trials, purpose="trajectory", first_trial=0):
    """Empirical final-state distribution from ``n_trials`` jump trajectories."""
    key = rngmod.derive_key(seed, purpose)
    trials = np.arange(first_trial, first_trial + n_trials)
    starts = draw_states(p0, key, trials)
    batch = run_jumps(spec, lasers, starts, t_end, key, trials, counters=np.ones(n_trials, dtype=np.int64))
    return np.bincount(batch.final, minlength=N_STATES) / n_trials


def draw_states(p, key, trials, counter=0) -> np.ndarray:
    """Draw one state index per trial from population vector ``p`` (counter slot ``counter``)."""
    u = rngmod.uniform(key, trials, np.full(len(trials), counter))
    p = np.asarray(p, dtype=float)
    cum = np.cumsum(p)
    cum[np.nonzero(p)[0][-1]:] = np.inf
    return np.searchsorted(cum, u, side="right")
