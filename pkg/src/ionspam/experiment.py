"""End-to-end SPAM runs, binomial statistics and the error budget.

Trials are scheduled in alternating blocks (|0>, |1>, |0>, ...).  Every
random draw is keyed by (seed, purpose, global trial index), so a run gives
the same numbers for any worker count or chunking.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np
from scipy.stats import norm, poisson

from . import rng as rngmod
from .atom import INDEX, QUBIT_0, QUBIT_1, AtomSpec, term_mask
from .config import atom_from_config, config_hash, get, section
from .dynamics import draw_states, evolve_schedule, run_jumps
from .pulse import cp_robust_180, sequence_transfer
from .readout import (
    CountModel,
    Histogram,
    ThresholdClassifier,
    dark_pmf_with_decay,
    sample_counts,
)
from .scenarios import (
    MODES,
    SCHEMES,
    parse_start,
    pumping_lasers,
    shelving_lasers,
    simulate_prepare_zero,
    simulate_shelving,
)

D52 = term_mask("D5/2")
I0, I1 = INDEX[QUBIT_0], INDEX[QUBIT_1]
CHUNK = 8192  # trials per work unit; fixed so results never depend on workers


# -- statistics ----------------------------------------------------------------


def wilson_interval(k: int, n: int, z: float = 1.0) -> tuple[float, float]:
    if n < 1:
        raise ValueError("need n >= 1")
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n")
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if k == 0 else max(0.0, mid - half)
    hi = 1.0 if k == n else min(1.0, mid + half)
    return lo, hi


def wald_sigma(k: int, n: int) -> float:
    if n < 1:
        raise ValueError("need n >= 1")
    p = k / n
    return math.sqrt(p * (1 - p) / n)


def paren(value: float, sigma: float) -> str:
    """Value with a one-digit uncertainty in parentheses, e.g. 1.9(4)e-04.

    The uncertainty digit is rounded up.
    """
    if sigma <= 0 or not math.isfinite(sigma):
        return f"{value:.6g}"
    e = math.floor(math.log10(sigma))
    digit = math.ceil(round(sigma / 10**e, 9))
    if digit == 10:
        digit, e = 1, e + 1
    if abs(value) >= 1e-2:
        decimals = max(0, -e)
        return f"{value:.{decimals}f}({digit})"
    ve = math.floor(math.log10(abs(value))) if value else e
    decimals = max(0, ve - e)
    return f"{value / 10**ve:.{decimals}f}({digit})e{ve:+03d}"


# -- configuration -------------------------------------------------------------


@dataclass(frozen=True)
class SpamConfig:
    trials_0: int = 156_581
    trials_1: int = 157_211
    block: int = 200
    rabi: float = 2 * math.pi * 57e3
    detuning: float = 0.0
    area_scale: float = 1.0
    eps_cp: float = 1e-4
    scheme: str = "with-repumps-pi-pol"
    counts: CountModel = field(default_factory=CountModel)
    classifier: ThresholdClassifier = field(default_factory=ThresholdClassifier)
    background_flip: float = 3e-5
    seed: int = 133
    mode: str = "jump"

    def __post_init__(self):
        if self.trials_0 < 1 or self.trials_1 < 1:
            raise ValueError("trials per state must be positive")
        if self.block < 1:
            raise ValueError("block size must be positive")
        if not 0 <= self.eps_cp <= 1 or not 0 <= self.background_flip <= 1:
            raise ValueError("error probabilities must lie in [0, 1]")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown shelving scheme {self.scheme!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    @classmethod
    def from_config(cls, cfg: Mapping, **overrides) -> "SpamConfig":
        sp = section(cfg, "spam")
        pu = section(cfg, "pulse")
        ro = section(cfg, "readout")
        kw = dict(
            trials_0=int(get(sp, "trials_0", "spam")),
            trials_1=int(get(sp, "trials_1", "spam")),
            block=int(get(sp, "block", "spam")),
            rabi=2 * math.pi * 1e3 * float(get(pu, "rabi_khz", "pulse")),
            detuning=2 * math.pi * 1e3 * float(get(pu, "detuning_khz", "pulse")),
            area_scale=float(get(pu, "area_scale", "pulse")),
            eps_cp=float(get(sp, "eps_cp", "spam")),
            scheme=get(section(cfg, "shelving"), "scheme", "shelving"),
            counts=CountModel(
                float(get(ro, "bright_mean", "readout")),
                float(get(ro, "dark_mean", "readout")),
                float(get(ro, "window", "readout")),
                float(get(ro, "lifetime", "readout")),
            ),
            classifier=ThresholdClassifier(int(get(ro, "threshold", "readout"))),
            background_flip=float(get(sp, "background_flip", "spam")),
            seed=int(cfg["seed"]),
            mode=get(sp, "mode", "spam"),
        )
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)


def schedule(trials_0: int, trials_1: int, block: int) -> list[tuple[int, int, int]]:
    """Alternating blocks as (state, first global trial, size); a finished state drops out."""
    left = [trials_0, trials_1]
    out = []
    g = 0
    s = 0
    while left[0] or left[1]:
        if left[s]:
            size = min(block, left[s])
            out.append((s, g, size))
            g += size
            left[s] -= size
        s ^= 1
    return out


# -- pipeline ------------------------------------------------------------------


@dataclass
class _Physics:
    spec: AtomSpec
    prep: np.ndarray  # population after optical pumping
    transfer: float  # probability the composite pulse swaps |0> and |1>
    shelve_lasers: list
    shelve_time: float


def _physics(cfg: Mapping, sc: SpamConfig) -> _Physics:
    spec = atom_from_config(cfg)
    pu = section(cfg, "pumping")
    t_pump = float(get(pu, "duration", "pumping"))
    prep = evolve_schedule(spec, pumping_lasers(cfg, t_pump), parse_start(get(pu, "start", "pumping")), t_pump)
    p_pulse = sequence_transfer(cp_robust_180(), sc.rabi, sc.detuning, sc.area_scale)
    # the composite-pulse error channel flips the outcome with probability eps_cp
    transfer = p_pulse * (1 - sc.eps_cp) + (1 - p_pulse) * sc.eps_cp
    t_shelve = float(get(section(cfg, "shelving"), "duration", "shelving"))
    return _Physics(spec, prep, transfer, shelving_lasers(cfg, sc.scheme, t_shelve), t_shelve)


def _apply_transfer(pop: np.ndarray, t: float) -> np.ndarray:
    out = pop.copy()
    a, b = pop[I0], pop[I1]
    out[I0] = a * (1 - t) + b * t
    out[I1] = b * (1 - t) + a * t
    return out


def _chunk(ph: _Physics, sc: SpamConfig, state: np.ndarray, g: np.ndarray):
    """Counts and misidentification flags for trials with global ids ``g``."""
    seed = sc.seed
    start = draw_states(ph.prep, rngmod.derive_key(seed, "init"), g)
    is1 = state == 1
    u = rngmod.uniform(rngmod.derive_key(seed, "pulse"), g, np.zeros(g.size, dtype=np.int64))
    swap = is1 & (u < ph.transfer)
    at0, at1 = start == I0, start == I1
    start = np.where(swap & at0, I1, np.where(swap & at1, I0, start))

    key = rngmod.derive_key(seed, "shelve")
    batch = run_jumps(ph.spec, ph.shelve_lasers, start, ph.shelve_time, key, g, counters=np.zeros(g.size, dtype=np.int64))
    shelved = np.isin(batch.final, D52)
    flip = rngmod.uniform(rngmod.derive_key(seed, "background"), g, np.zeros(g.size, dtype=np.int64)) < sc.background_flip
    dark = shelved | flip
    counts = sample_counts(dark, sc.counts, rngmod.derive_key(seed, "readout"), g)
    called_dark = counts <= sc.classifier.n_th
    wrong = np.where(is1, ~called_dark, called_dark)
    return counts, wrong


def _shelved_probability(ph: _Physics, s: int) -> float:
    pop = ph.prep if s == 0 else _apply_transfer(ph.prep, ph.transfer)
    final = evolve_schedule(ph.spec, ph.shelve_lasers, pop, ph.shelve_time)
    return float(final[D52].sum())


def _rate_errors(ph: _Physics, sc: SpamConfig) -> tuple[float, float]:
    """Exact misidentification probabilities from populations and count pmfs."""
    n_th = sc.classifier.n_th
    p_dark_given_shelved = float(dark_pmf_with_decay(sc.counts).pmf[: n_th + 1].sum())
    p_dark_given_bright = float(poisson.cdf(n_th, sc.counts.bright_mean))
    f = sc.background_flip
    # a background flip makes a bright ion read like a shelved one
    p_dark_bright = f * p_dark_given_shelved + (1 - f) * p_dark_given_bright
    out = []
    for s in (0, 1):
        pd = _shelved_probability(ph, s)
        p_called_dark = pd * p_dark_given_shelved + (1 - pd) * p_dark_bright
        out.append(p_called_dark if s == 0 else 1 - p_called_dark)
    return out[0], out[1]


@dataclass
class SpamReport:
    eps0: float
    eps1: float
    sigma0: float
    sigma1: float
    wald0: float
    wald1: float
    wilson0: tuple[float, float]
    wilson1: tuple[float, float]
    fidelity: float
    fidelity_sigma: float
    trials_0: int
    trials_1: int
    errors_0: int
    errors_1: int
    mode: str
    seed: int
    config_hash: str
    histogram_0: Histogram
    histogram_1: Histogram
    budget: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = {k: v for k, v in asdict(self).items() if not k.startswith("histogram") and k not in ("budget", "config")}
        rec["wilson0"] = list(self.wilson0)
        rec["wilson1"] = list(self.wilson1)
        rec["summary"] = {
            "eps0": paren(self.eps0, self.sigma0),
            "eps1": paren(self.eps1, self.sigma1),
            "fidelity": paren(self.fidelity, self.fidelity_sigma),
        }
        rec["budget"] = [asdict(b) for b in self.budget]
        rec["budget_total"] = sum(b.error for b in self.budget)
        rec["config"] = self.config
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record(), indent=2, sort_keys=True) + "\n"


def _z1_sigma(k: int, n: int) -> float:
    lo, hi = wilson_interval(k, n, 1.0)
    return 0.5 * (hi - lo)


def run_spam(cfg: Mapping, sc: SpamConfig | None = None, workers: int = 1, with_budget: bool = True) -> SpamReport:
    """Simulate the full prepare / transfer / shelve / detect sequence.

    In ``rate`` mode the reported error probabilities are exact; histograms
    and error tallies still come from a sampled readout of the exact shelved
    populations.
    """
    sc = SpamConfig.from_config(cfg) if sc is None else sc
    ph = _physics(cfg, sc)
    blocks = schedule(sc.trials_0, sc.trials_1, sc.block)
    n = sc.trials_0 + sc.trials_1
    state = np.empty(n, dtype=np.int64)
    for s, g0, size in blocks:
        state[g0:g0 + size] = s
    g_all = np.arange(n, dtype=np.int64)

    if sc.mode == "jump":
        def work(lo):
            sl = slice(lo, min(lo + CHUNK, n))
            return _chunk(ph, sc, state[sl], g_all[sl])
    else:
        e0, e1 = _rate_errors(ph, sc)
        p_shelved = np.where(state == 1, _shelved_probability(ph, 1), _shelved_probability(ph, 0))

        def work(lo):
            # same readout path as jump mode, with shelving drawn from exact populations
            sl = slice(lo, min(lo + CHUNK, n))
            g = g_all[sl]
            zero = np.zeros(g.size, dtype=np.int64)
            shelved = rngmod.uniform(rngmod.derive_key(sc.seed, "aux"), g, zero) < p_shelved[sl]
            flip = rngmod.uniform(rngmod.derive_key(sc.seed, "background"), g, zero) < sc.background_flip
            counts = sample_counts(shelved | flip, sc.counts, rngmod.derive_key(sc.seed, "readout"), g)
            called_dark = counts <= sc.classifier.n_th
            return counts, np.where(state[sl] == 1, ~called_dark, called_dark)

    starts = list(range(0, n, CHUNK))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(lo) for lo in starts]
    counts = np.concatenate([p[0] for p in parts])
    wrong = np.concatenate([p[1] for p in parts])

    k0 = int(wrong[state == 0].sum())
    k1 = int(wrong[state == 1].sum())
    n0, n1 = sc.trials_0, sc.trials_1
    if sc.mode == "jump":
        eps0, eps1 = k0 / n0, k1 / n1
        s0, s1 = _z1_sigma(k0, n0), _z1_sigma(k1, n1)
    else:
        eps0, eps1 = e0, e1
        s0, s1 = math.sqrt(e0 * (1 - e0) / n0), math.sqrt(e1 * (1 - e1) / n1)
    fid = 1 - (eps0 + eps1) / 2
    size = int(counts.max(initial=0)) + 1
    echo = {k: v for k, v in cfg.items() if k != "workers"}
    return SpamReport(
        eps0=eps0, eps1=eps1, sigma0=s0, sigma1=s1,
        wald0=wald_sigma(k0, n0), wald1=wald_sigma(k1, n1),
        wilson0=wilson_interval(k0, n0), wilson1=wilson_interval(k1, n1),
        fidelity=fid, fidelity_sigma=0.5 * math.hypot(s0, s1),
        trials_0=n0, trials_1=n1, errors_0=k0, errors_1=k1,
        mode=sc.mode, seed=sc.seed, config_hash=config_hash(echo),
        histogram_0=Histogram.from_counts(counts[state == 0], size),
        histogram_1=Histogram.from_counts(counts[state == 1], size),
        budget=error_budget(cfg, sc) if with_budget else [],
        config=echo,
    )


# -- error budget --------------------------------------------------------------


@dataclass
class BudgetEntry:
    process: str
    error: float  # average over the two prepared states
    source: str

    def __post_init__(self):
        if self.error < 0:
            raise ValueError("budget entries must be non-negative")
        if self.source not in ("simulated", "configured", "analytic"):
            raise ValueError(f"unknown source {self.source!r}")


def error_budget(cfg: Mapping, sc: SpamConfig | None = None) -> list[BudgetEntry]:
    """Six-process SPAM error budget, each entry averaged over |0> and |1>."""
    sc = SpamConfig.from_config(cfg) if sc is None else sc
    init = 1 - simulate_prepare_zero(cfg, mode="rate").value
    p_pulse = sequence_transfer(cp_robust_180(), sc.rabi, sc.detuning, sc.area_scale)
    cp = sc.eps_cp + (1 - p_pulse) * (1 - 2 * sc.eps_cp)
    shelve1 = 1 - simulate_shelving(cfg, scheme=sc.scheme, start="qubit1", mode="rate").value
    shelve0 = simulate_shelving(cfg, scheme=sc.scheme, start="qubit0", mode="rate").value
    return [
        BudgetEntry("Initialization", 0.5 * init, "simulated"),
        BudgetEntry("CP Robust 180", 0.5 * cp, "configured"),
        BudgetEntry("Spontaneous decay during readout", 0.5 * sc.counts.decay_probability, "analytic"),
        BudgetEntry("Shelving |1>", 0.5 * shelve1, "simulated"),
        BudgetEntry("Off-resonant shelving |0>", 0.5 * shelve0, "simulated"),
        BudgetEntry("S1/2 manifold readout", 0.5 * sc.background_flip, "configured"),
    ]


def budget_total(entries) -> float:
    return float(sum(e.error for e in entries))


def budget_text(entries, seed: int | None = None, chash: str | None = None) -> str:
    width = max(len(e.process) for e in entries)
    lines = []
    if seed is not None:
        lines.append(f"# seed={seed} config_hash={chash}")
    lines.append(f"{'Process':<{width}}  {'Error (1e-4)':>12}  source")
    for e in entries:
        lines.append(f"{e.process:<{width}}  {e.error * 1e4:>12.3f}  {e.source}")
    lines.append(f"{'Total':<{width}}  {budget_total(entries) * 1e4:>12.3f}")
    return "\n".join(lines) + "\n"


def budget_csv(entries, seed: int | None = None, chash: str | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if seed is not None:
        buf.write(f"# seed={seed} config_hash={chash}\n")
    w.writerow(["process", "error", "source"])
    for e in entries:
        w.writerow([e.process, f"{e.error:.6e}", e.source])
    w.writerow(["Total", f"{budget_total(entries):.6e}", ""])
    return buf.getvalue()


# -- scenario analyses -----------------------------------------------------------


def qubit_capacity(eps_s: float) -> int:
    """Largest register size N with N * eps_s < ln 2."""
    if not eps_s > 0:
        raise ValueError("error per qubit must be positive")
    if eps_s >= 1:
        raise ValueError("error per qubit must be below 1")
    return int(math.floor(math.log(2) / eps_s))


@dataclass
class Scenario1762:
    transfer: float
    shelving_error: float
    preparation_error: float
    readout_decay_error: float

    @property
    def total(self) -> float:
        return self.preparation_error + self.readout_decay_error


def scenario_1762(cfg: Mapping, transfer: float = 0.875) -> Scenario1762:
    """Preparation error when a saturated 1762 nm drive moves ``transfer`` of
    |1> straight to D5/2 and optically pumped shelving handles the rest."""
    if not 0 <= transfer <= 1:
        raise ValueError("transfer fraction must lie in [0, 1]")
    sc = SpamConfig.from_config(cfg)
    eps_shelve = 1 - simulate_shelving(cfg, scheme=sc.scheme, start="qubit1", mode="rate").value
    return Scenario1762(transfer, eps_shelve, (1 - transfer) * eps_shelve, sc.counts.decay_probability)


def wilson_coverage(p: float, n: int, draws: int = 10_000, z: float | None = None, seed: int = 0) -> float:
    """Fraction of synthetic binomial draws whose Wilson interval covers ``p``."""
    z = norm.ppf(0.975) if z is None else z
    k = np.random.default_rng(seed).binomial(n, p, size=draws)
    hits = 0
    for ki in k:
        lo, hi = wilson_interval(int(ki), n, z)
        hits += lo <= p <= hi
    return hits / draws
