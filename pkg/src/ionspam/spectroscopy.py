"""Line scans of the 455 nm and 614 nm transitions and Lorentzian fitting.

Frequencies are offsets in MHz from the corresponding 138Ba+ line.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import rng as rngmod
from .atom import AtomSpec, manifold, term_mask
from .dynamics import LaserField, evolve_schedule, uniform_population

KINDS = ("shelve-455", "deshelve-614")
D52 = term_mask("D5/2")


@dataclass(frozen=True)
class ScanConfig:
    grid: tuple[float, ...]
    trials: int = 200
    duration: float = 50e-6
    kind: str = "shelve-455"
    prepare_F: int = 3
    saturation: float = 0.002

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(x) for x in self.grid))
        if self.kind not in KINDS:
            raise ValueError(f"unknown scan kind {self.kind!r}")
        if self.trials < 1:
            raise ValueError("need at least one trial per point")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("scan grid must be strictly increasing")
        if self.kind == "deshelve-614" and self.prepare_F not in (2, 3):
            raise ValueError("D5/2 preparation must target F=2 or F=3")


@dataclass
class ScanData:
    frequency: np.ndarray
    fraction: np.ndarray
    trials: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frequency_MHz", "shelved_fraction", "trials"])
        for f, y, n in zip(self.frequency, self.fraction, self.trials):
            w.writerow([f"{f:.6f}", f"{y:.10f}", int(n)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ScanData":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(
            np.array([float(r["frequency_MHz"]) for r in rows]),
            np.array([float(r["shelved_fraction"]) for r in rows]),
            np.array([int(r["trials"]) for r in rows]),
        )

    def window(self, lo: float, hi: float) -> "ScanData":
        m = (self.frequency >= lo) & (self.frequency <= hi)
        return ScanData(self.frequency[m], self.fraction[m], self.trials[m])

    def shifted(self, offset: float) -> "ScanData":
        return ScanData(self.frequency + offset, self.fraction.copy(), self.trials.copy())


def _prepared_d52(spec: AtomSpec, F: int) -> np.ndarray:
    """Population after shelving through P3/2 F' = F - 1 (F=2) or F' = 2 (F=3)."""
    upper = 1 if F == 2 else 2
    lasers = [
        LaserField("455-prep", ("S1/2", 1), ("P3/2", upper), saturation=0.02),
        # return S1/2 F=0 and D3/2 to S1/2 F=1 so the whole population gets shelved
        LaserField("493-sb", ("S1/2", 0), ("P1/2", 1), saturation=1.0),
        LaserField("650c", ("D3/2", 1), ("P1/2", 0), saturation=1.0),
        LaserField("650sb", ("D3/2", 2), ("P1/2", 1), saturation=1.0),
    ]
    p0 = uniform_population(manifold("S1/2", 1))
    return evolve_schedule(spec, lasers, p0, 2e-3)


def resonance_frequencies(spec: AtomSpec, kind: str) -> dict[str, float]:
    """Absolute positions (MHz vs 138Ba+) of the components a scan can show."""
    if kind == "shelve-455":
        return {
            "S1/2 F=1 -> P3/2 F=2": spec.component_frequency("S1/2", 1, "P3/2", 2),
            "S1/2 F=1 -> P3/2 F=1": spec.component_frequency("S1/2", 1, "P3/2", 1),
        }
    return {
        "D5/2 F=3 -> P3/2 F=2": spec.component_frequency("D5/2", 3, "P3/2", 2),
        "D5/2 F=2 -> P3/2 F=2": spec.component_frequency("D5/2", 2, "P3/2", 2),
    }


def scan_probabilities(spec: AtomSpec, cfg: ScanConfig) -> np.ndarray:
    """Noise-free D5/2 population at every grid frequency."""
    if cfg.kind == "shelve-455":
        target = (("S1/2", 1), ("P3/2", 2))
        p0 = uniform_population(manifold("S1/2", 1))
    else:
        target = (("D5/2", 3), ("P3/2", 2))
        p0 = _prepared_d52(spec, cfg.prepare_F)
    nu_target = spec.component_frequency(target[0][0], target[0][1], target[1][0], target[1][1])
    out = []
    for nu in cfg.grid:
        probe = LaserField("probe", target[0], target[1], detuning=nu - nu_target, saturation=cfg.saturation)
        p = evolve_schedule(spec, [probe], p0, cfg.duration)
        out.append(p[D52].sum())
    return np.clip(np.array(out), 0.0, 1.0)


def synthesize_scan(spec: AtomSpec, cfg: ScanConfig, seed: int | None = None, noise: bool = True,
                    trial_offset: int = 0) -> ScanData:
    """Simulated scan; with ``noise`` each point is a binomial draw over ``cfg.trials``.

    Point i uses trial ids ``trial_offset + i*trials ...`` of the spectroscopy
    stream, so independent scans from one seed need disjoint offsets.
    """
    p = scan_probabilities(spec, cfg)
    trials = np.full(p.size, cfg.trials)
    if not noise:
        return ScanData(np.array(cfg.grid), p, trials)
    key = rngmod.derive_key(0 if seed is None else seed, "spectroscopy")
    k = np.empty(p.size)
    for i, pi in enumerate(p):
        ids = trial_offset + np.arange(i * cfg.trials, (i + 1) * cfg.trials)
        k[i] = (rngmod.uniform(key, ids, np.zeros(cfg.trials, dtype=np.int64)) < pi).sum()
    return ScanData(np.array(cfg.grid), k / cfg.trials, trials)


# -- fitting -------------------------------------------------------------------


@dataclass
class LorentzianModel:
    center: float
    fwhm: float
    amplitude: float
    offset: float = 0.0

    def __call__(self, x, dip: bool = False):
        shape = self.amplitude / (1.0 + (2.0 * (np.asarray(x) - self.center) / self.fwhm) ** 2)
        return self.offset - shape if dip else self.offset + shape

    def as_array(self) -> np.ndarray:
        return np.array([self.center, self.fwhm, self.amplitude, self.offset])

    @property
    def valid(self) -> bool:
        return self.fwhm > 0 and 0 <= self.amplitude <= 1 and 0 <= self.offset <= 1


@dataclass
class FitResult:
    params: LorentzianModel
    rss: float
    stderr: LorentzianModel
    converged: bool
    iterations: int
    rss_history: list[float] = field(default_factory=list)
    message: str = ""

    def to_record(self) -> dict:
        return {
            "params": asdict(self.params),
            "stderr": asdict(self.stderr),
            "rss": self.rss,
            "converged": self.converged,
            "iterations": self.iterations,
            "message": self.message,
        }


def seed_model(x: np.ndarray, y: np.ndarray, dip: bool = False) -> LorentzianModel:
    """Initial guess: extremum for the center, half-maximum crossings for the width."""
    s = -y if dip else y
    base = np.min(s)
    i = int(np.argmax(s))
    height = s[i] - base
    half = base + 0.5 * height
    lo = i
    while lo > 0 and s[lo] > half:
        lo -= 1
    hi = i
    while hi < len(s) - 1 and s[hi] > half:
        hi += 1
    fwhm = x[hi] - x[lo] if hi > lo else 3 * (x[1] - x[0])
    fwhm = max(fwhm, 0.5 * float(np.min(np.diff(x))))
    offset = -base if dip else base
    return LorentzianModel(float(x[i]), float(fwhm), float(np.clip(height, 0, 1)), float(np.clip(offset, 0, 1)))


def _jacobian(x, p, dip):
    c, w, a, _ = p
    u = 2.0 * (x - c) / w
    den = 1.0 + u**2
    sign = -1.0 if dip else 1.0
    j = np.empty((x.size, 4))
    j[:, 0] = sign * a * 8.0 * (x - c) / (w**2 * den**2)
    j[:, 1] = sign * a * 2.0 * u**2 / (w * den**2)
    j[:, 2] = sign / den
    j[:, 3] = 1.0
    return j


def fit_lorentzian(x, y, init: LorentzianModel | None = None, dip: bool = False,
                   max_iter: int = 500, tol: float = 1e-8) -> FitResult:
    """Least-squares Lorentzian fit by damped Gauss-Newton (Levenberg-Marquardt).

    Only steps that lower the residual are accepted, so the recorded residual
    history is non-increasing.  Convergence: relative parameter change < tol.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 4:
        raise ValueError("need at least 4 points to fit a Lorentzian")
    init = seed_model(x, y, dip) if init is None else init
    p = init.as_array()

    def resid(q):
        return y - LorentzianModel(*q)(x, dip)

    r = resid(p)
    rss = float(r @ r)
    history = [rss]
    lam = 1e-3
    converged = False
    it = 0
    message = "max iterations reached"
    for it in range(1, max_iter + 1):
        j = _jacobian(x, p, dip)
        g = j.T @ r
        # amplitude/offset sitting on a bound and pushed outward are held fixed
        free = np.ones(4, dtype=bool)
        for k in (2, 3):
            if (p[k] <= 0.0 and g[k] < 0) or (p[k] >= 1.0 and g[k] > 0):
                free[k] = False
        jf = j[:, free]
        jtj = jf.T @ jf
        accepted = False
        while lam < 1e16:
            a = jtj + lam * np.diag(np.maximum(np.diag(jtj), 1e-300))
            try:
                step = np.zeros(4)
                step[free] = np.linalg.solve(a, g[free])
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = p + step
            trial[2:] = np.clip(trial[2:], 0.0, 1.0)
            if trial[1] <= 0:
                lam *= 10
                continue
            r_new = resid(trial)
            rss_new = float(r_new @ r_new)
            if rss_new <= rss:
                accepted = True
                break
            lam *= 10
        if not accepted:
            converged = True
            message = "no further decrease possible"
            break
        scale = np.array([p[1], p[1], max(p[2], 1e-12), max(p[2], 1e-12)])
        rel = np.max(np.abs(trial - p) / np.maximum(np.abs(trial), scale))
        p, r, rss = trial, r_new, rss_new
        history.append(rss)
        lam = max(lam / 10, 1e-12)
        if rel < tol:
            converged = True
            message = "relative parameter change below tolerance"
            break

    j = _jacobian(x, p, dip)
    dof = max(x.size - 4, 1)
    try:
        cov = np.linalg.inv(j.T @ j) * (rss / dof)
        err = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        err = np.full(4, np.inf)
        converged = False
        message = "singular normal matrix"
    if not np.all(np.isfinite(err)):
        converged = False
    return FitResult(LorentzianModel(*p), rss, LorentzianModel(*err), converged, it, history, message)


@dataclass
class Splitting:
    value: float
    sigma: float


def extract_splitting(fit_a: FitResult, fit_b: FitResult) -> Splitting:
    """Center of ``fit_b`` minus center of ``fit_a`` with quadrature uncertainty."""
    if not (fit_a.converged and fit_b.converged):
        raise ValueError("both fits must have converged")
    return Splitting(
        fit_b.params.center - fit_a.params.center,
        math.hypot(fit_a.stderr.center, fit_b.stderr.center),
    )


def fit_peaks(data: ScanData, n_peaks: int, half_window: float, dip: bool = False) -> list[FitResult]:
    """Fit the ``n_peaks`` strongest features, each within +-half_window of its extremum."""
    remaining = np.ones(data.frequency.size, dtype=bool)
    fits = []
    signal = -data.fraction if dip else data.fraction
    for _ in range(n_peaks):
        idx = np.nonzero(remaining)[0]
        if idx.size < 4:
            raise ValueError("not enough points left to locate another feature")
        peak = idx[int(np.argmax(signal[idx]))]
        c = data.frequency[peak]
        sub = data.window(c - half_window, c + half_window)
        fits.append(fit_lorentzian(sub.frequency, sub.fraction, dip=dip))
        remaining &= np.abs(data.frequency - c) > half_window
    return sorted(fits, key=lambda f: f.params.center)


def isotope_shift_455(spec: AtomSpec, center_F2: float, center_F1: float) -> float:
    """P3/2 centroid shift from the two components out of S1/2 F=1."""
    spl = spec.splittings
    upper = (5 * center_F2 + 3 * center_F1) / 8.0
    return upper + spl.offset("S1/2", 1)


def isotope_shift_614(spec: AtomSpec, center_F3: float, center_F2: float) -> float:
    """614 line centroid from the D5/2 F=3 and F=2 components into P3/2 F=2."""
    spl = spec.splittings
    lower_centroid = (7 * (center_F3 + spl.offset("D5/2", 3)) + 5 * (center_F2 + spl.offset("D5/2", 2))) / 12.0
    return lower_centroid - spl.offset("P3/2", 2)


def covering_grid(kind: str, spec: AtomSpec, step: float = 5.0, margin: float = 250.0) -> np.ndarray:
    """Evenly spaced grid covering every component a scan of ``kind`` can show."""
    freqs = list(resonance_frequencies(spec, kind).values())
    lo = math.floor((min(freqs) - margin) / step) * step
    hi = math.ceil((max(freqs) + margin) / step) * step
    return np.arange(lo, hi + 0.5 * step, step)


@dataclass
class SpectroscopyRun:
    """Scans and fits for one transition; ``scans`` maps a label to its data."""

    kind: str
    scans: dict[str, ScanData]
    fits: dict[str, FitResult]
    splitting: Splitting
    isotope_shift: float
    truth: dict[str, float]

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "fits": {k: v.to_record() for k, v in self.fits.items()},
            "splitting_MHz": self.splitting.value,
            "splitting_sigma_MHz": self.splitting.sigma,
            "isotope_shift_MHz": self.isotope_shift,
            "injected": self.truth,
        }


def run_spectroscopy(spec: AtomSpec, kind: str, grid, trials: int = 200, duration: float = 50e-6,
                     saturation: float = 0.002, half_window: float = 150.0,
                     seed: int | None = None, noise: bool = True) -> SpectroscopyRun:
    """Synthesize and fit the scans that give one hyperfine splitting.

    shelve-455: one scan out of S1/2 F=1 showing P3/2 F'=2 and F'=1.
    deshelve-614: two scans after preparing D5/2 F=3 and D5/2 F=2.
    """
    spl = spec.splittings
    if kind == "shelve-455":
        data = synthesize_scan(spec, ScanConfig(tuple(grid), trials, duration, kind, saturation=saturation), seed, noise)
        f2, f1 = fit_peaks(data, 2, half_window)
        fits = {"P3/2 F=2": f2, "P3/2 F=1": f1}
        split = extract_splitting(f2, f1)
        shift = isotope_shift_455(spec, f2.params.center, f1.params.center)
        scans = {"S1/2 F=1": data}
        truth = {"splitting": spl.P3_2, "isotope_shift": spl.isotope_455}
    elif kind == "deshelve-614":
        scans, fits = {}, {}
        n = len(grid) * trials
        for i, F in enumerate((3, 2)):
            cfg = ScanConfig(tuple(grid), trials, duration, kind, prepare_F=F, saturation=saturation)
            data = synthesize_scan(spec, cfg, seed, noise, trial_offset=i * n)
            label = f"D5/2 F={F}"
            scans[label] = data
            fits[label] = fit_peaks(data, 1, half_window, dip=True)[0]
        split = extract_splitting(fits["D5/2 F=2"], fits["D5/2 F=3"])
        shift = isotope_shift_614(spec, fits["D5/2 F=3"].params.center, fits["D5/2 F=2"].params.center)
        truth = {"splitting": spl.D5_2, "isotope_shift": spl.isotope_614}
    else:
        raise ValueError(f"unknown scan kind {kind!r}")
    return SpectroscopyRun(kind, scans, fits, split, shift, truth)
