"""Preparation, shelving and readout scenarios built on the rate model.

Each scenario runs in ``rate`` mode (exact matrix-exponential populations) or
``jump`` mode (counter-keyed Monte Carlo trajectories).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np
from scipy.linalg import null_space
from scipy.stats import poisson

from . import rng as rngmod
from .atom import INDEX, QUBIT_0, QUBIT_1, AtomSpec, manifold, term_mask
from .config import ConfigError, atom_from_config, get, laser_from_config, section
from .dynamics import (
    draw_states,
    evolve_schedule,
    point_population,
    run_chain,
    run_jumps,
    uniform_population,
)

SCHEMES = ("bare-455", "with-repumps", "with-repumps-pi-pol")
MODES = ("rate", "jump")
D52 = term_mask("D5/2")


@dataclass
class ScenarioResult:
    """One scenario outcome; ``sigma`` is the binomial standard error (0 in rate mode)."""

    name: str
    value: float
    mode: str
    trials: int = 0
    sigma: float = 0.0
    details: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return asdict(self)


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n) if n else 0.0


def parse_start(label: str) -> np.ndarray:
    """Population vector for "qubit0", "qubit1" or "TERM:F=k" (uniform over the manifold)."""
    if label == "qubit0":
        return point_population(QUBIT_0)
    if label == "qubit1":
        return point_population(QUBIT_1)
    try:
        term, f = label.split(":F=")
        return uniform_population(manifold(term, int(f)))
    except ValueError:
        raise ConfigError(f"cannot interpret start state {label!r}") from None


def shelving_lasers(cfg: Mapping, scheme: str, duration: float):
    if scheme not in SCHEMES:
        raise ValueError(f"unknown shelving scheme {scheme!r}; expected one of {SCHEMES}")
    window = (0.0, duration)
    pol = "pi" if scheme == "with-repumps-pi-pol" else "iso"
    lasers = [laser_from_config(cfg, "455", polarization=pol, window=window)]
    if scheme != "bare-455":
        lasers.append(laser_from_config(cfg, "650c", window=window))
        lasers.append(laser_from_config(cfg, "585", window=window))
    return lasers


def pumping_lasers(cfg: Mapping, duration: float):
    sec = section(cfg, "pumping")
    return [laser_from_config(cfg, name, window=(0.0, duration)) for name in get(sec, "lasers", "pumping")]


def _run(spec, lasers, p0, t_end, mode, trials, seed, purpose, target_idx):
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "rate":
        p = evolve_schedule(spec, lasers, p0, t_end)
        return float(p[target_idx].sum()), 0, 0.0, p
    if trials < 1:
        raise ValueError("jump mode needs at least one trial")
    key = rngmod.derive_key(seed, purpose)
    idx = np.arange(trials)
    starts = draw_states(p0, key, idx, counter=0)
    batch = run_jumps(spec, lasers, starts, t_end, key, idx, counters=np.ones(trials, dtype=np.int64))
    hits = int(np.isin(batch.final, target_idx).sum())
    p = hits / trials
    pop = np.bincount(batch.final, minlength=len(p0)) / trials
    return p, trials, binomial_sigma(p, trials), pop


def simulate_prepare_zero(cfg: Mapping, mode: str = "rate", duration: float | None = None,
                          trials: int = 100_000, seed: int | None = None) -> ScenarioResult:
    """Probability that optical pumping leaves the ion in |0>."""
    spec = atom_from_config(cfg)
    sec = section(cfg, "pumping")
    t = float(get(sec, "duration", "pumping") if duration is None else duration)
    p0 = parse_start(get(sec, "start", "pumping"))
    seed = cfg["seed"] if seed is None else seed
    val, n, sig, pop = _run(spec, pumping_lasers(cfg, t), p0, t, mode, trials, seed, "init", [INDEX[QUBIT_0]])
    return ScenarioResult("prepare_zero", val, mode, n, sig, {"duration": t, "population": pop.tolist()})


def simulate_shelving(cfg: Mapping, scheme: str | None = None, start: str = "qubit1",
                      mode: str = "rate", duration: float | None = None,
                      trials: int = 100_000, seed: int | None = None) -> ScenarioResult:
    """Shelving fidelity: probability of ending in D5/2 from ``start``."""
    spec = atom_from_config(cfg)
    sec = section(cfg, "shelving")
    scheme = get(sec, "scheme", "shelving") if scheme is None else scheme
    t = float(get(sec, "duration", "shelving") if duration is None else duration)
    lasers = shelving_lasers(cfg, scheme, t)
    seed = cfg["seed"] if seed is None else seed
    val, n, sig, pop = _run(spec, lasers, parse_start(start), t, mode, trials, seed, "shelve", D52)
    return ScenarioResult(
        "shelving", val, mode, n, sig,
        {"scheme": scheme, "start": start, "duration": t, "stranded_D3/2": float(pop[term_mask("D3/2")].sum())},
    )


def simulate_offresonant_shelving_of_zero(cfg: Mapping, mode: str = "rate", duration: float | None = None,
                                          trials: int = 100_000, seed: int | None = None) -> ScenarioResult:
    """Probability that the shelving pulses wrongly shelve an ion in |0>."""
    res = simulate_shelving(cfg, start="qubit0", mode=mode, duration=duration, trials=trials, seed=seed)
    res.name = "offresonant_shelving_of_zero"
    return res


def analytic_bare_limit(spec: AtomSpec) -> float:
    """Long-time D5/2 fraction under the bare 455 drive, ignoring off-resonant loss."""
    b = spec.branching["P3/2"]
    return b["D5/2"] / (b["D5/2"] + b["D3/2"])


# -- legacy hyperfine-selective cycling readout ---------------------------------


def _quasi_stationary(gen_block: np.ndarray) -> np.ndarray:
    w = gen_block.copy()
    np.fill_diagonal(w, 0.0)
    g = w - np.diag(w.sum(axis=0))
    if g.shape[0] == 1:
        return np.ones(1)
    ns = null_space(g)
    if ns.shape[1] != 1:
        return np.full(g.shape[0], 1.0 / g.shape[0])
    pi = np.abs(ns[:, 0])
    return pi / pi.sum()


def coarse_grain(generator: np.ndarray, scatter: np.ndarray, classes):
    """Lump fast-mixing state sets into a small chain.

    Inside each class the population is taken at its quasi-stationary
    distribution; inter-class rates and photon rates are averages over it.
    """
    k = len(classes)
    gen = np.zeros((k, k))
    photon = np.zeros(k)
    for a, ca in enumerate(classes):
        pi = _quasi_stationary(generator[np.ix_(ca, ca)])
        photon[a] = pi @ scatter[ca]
        for b, cb in enumerate(classes):
            if a != b:
                gen[b, a] = generator[np.ix_(cb, ca)].sum(axis=0) @ pi
    gen -= np.diag(gen.sum(axis=0))
    return gen, photon


def cycling_chain(cfg: Mapping):
    spec = atom_from_config(cfg)
    sec = section(cfg, "cycling")
    from .dynamics import build_rate_matrix

    rm = build_rate_matrix(spec, [laser_from_config(cfg, n) for n in get(sec, "lasers", "cycling")])
    ids = lambda term, F: [INDEX[s] for s in manifold(term, F)]  # noqa: E731
    classes = [ids("S1/2", 1) + ids("D3/2", 1), ids("S1/2", 0), ids("D3/2", 2)]
    return coarse_grain(rm.generator, rm.scatter, classes)


def simulate_cycling_readout(cfg: Mapping, trials: int | None = None, seed: int | None = None,
                             threshold: int | None = None) -> ScenarioResult:
    """Misidentification rates of hyperfine-selective cycling detection.

    The bright set (S1/2 F=1 with its D3/2 F=1 repump loop) leaks to |0> and
    D3/2 F=2 through off-resonant P1/2 F=1 excitation; |0> is pumped bright
    the same way.  Detected counts are Poisson with mean proportional to the
    photons scattered while bright, plus background.
    """
    sec = section(cfg, "cycling")
    t_det = float(get(sec, "duration", "cycling"))
    n = int(get(sec, "trials", "cycling") if trials is None else trials)
    seed = cfg["seed"] if seed is None else seed
    gen, photon = cycling_chain(cfg)
    eta = float(get(sec, "bright_counts", "cycling")) / (photon[0] * t_det)
    bg = float(get(sec, "background_counts", "cycling"))

    key = rngmod.derive_key(seed, "cycling")
    counts = {}
    for label, start, offset in (("0", 1, 0), ("1", 0, n)):
        idx = np.arange(offset, offset + n)
        batch = run_chain([(0.0, t_det, gen, photon)], start, key, idx, counters=np.ones(n, dtype=np.int64))
        u = rngmod.uniform(key, idx, np.zeros(n, dtype=np.int64))
        counts[label] = poisson.ppf(u, eta * batch.photons + bg).astype(np.int64)

    if threshold is None:
        threshold = int(get(sec, "threshold", "cycling"))
    if threshold < 0:
        top = int(max(counts["0"].max(), counts["1"].max())) + 1
        errs = [0.5 * ((counts["0"] > k).mean() + (counts["1"] <= k).mean()) for k in range(top)]
        threshold = int(np.argmin(errs))
    eps0 = float((counts["0"] > threshold).mean())
    eps1 = float((counts["1"] <= threshold).mean())
    return ScenarioResult(
        "cycling_readout", 1 - 0.5 * (eps0 + eps1), "jump", 2 * n, 0.0,
        {
            "eps0": eps0, "eps1": eps1,
            "sigma0": binomial_sigma(eps0, n), "sigma1": binomial_sigma(eps1, n),
            "threshold": threshold,
            "leak_bright_to_dark": float(-gen[0, 0]),
            "pump_dark_to_bright": float(gen[0, 1]),
            "photons_per_bright_window": float(photon[0] * t_det),
            "mean_photons_before_leak": float(photon[0] / -gen[0, 0]),
        },
    )
