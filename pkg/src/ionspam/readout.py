"""Photon-count statistics for bright/shelved discrimination."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import poisson

from . import rng as rngmod

BRIGHT, SHELVED = "bright", "shelved"


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class CountModel:
    """Detected-photon model for one detection window.

    bright_mean and dark_mean are mean counts per window; ``window`` and
    ``lifetime`` (the D5/2 shelf lifetime) are in seconds.  The bright mean is
    the calibrated observable, set in practice by the 0.28 NA collection.
    """

    bright_mean: float = 39.0
    dark_mean: float = 1.0
    window: float = 4.5e-3
    lifetime: float = 30.0

    def __post_init__(self):
        if not self.bright_mean > self.dark_mean >= 0:
            raise ValueError("need bright_mean > dark_mean >= 0")
        if self.window <= 0 or self.lifetime <= 0:
            raise ValueError("window and lifetime must be positive")

    @property
    def survival(self) -> float:
        """Probability that the shelf survives the whole window."""
        return math.exp(-self.window / self.lifetime)

    @property
    def decay_probability(self) -> float:
        return -math.expm1(-self.window / self.lifetime)


@dataclass(frozen=True)
class DarkPMF:
    pmf: np.ndarray
    no_decay_weight: float
    decay_weight: float

    @property
    def mean(self) -> float:
        return float(np.arange(self.pmf.size) @ self.pmf)


def count_support(m: CountModel) -> int:
    """Largest count worth tabulating; the Poisson tail beyond it is < 1e-15."""
    top = m.bright_mean + m.dark_mean
    return int(top + 12 * math.sqrt(top) + 30)


def _gauss_panels(t_end: float, nodes: int, panels: int):
    x, w = np.polynomial.legendre.leggauss(nodes // panels)
    edges = np.linspace(0.0, t_end, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    t = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    return t, wt


def _decay_part(m: CountModel, n: np.ndarray, nodes: int) -> np.ndarray:
    t, w = _gauss_panels(m.window, nodes, panels=max(1, nodes // 16))
    density = np.exp(-t / m.lifetime) / m.lifetime
    lam = m.dark_mean + m.bright_mean * (m.window - t) / m.window
    return (poisson.pmf(n[:, None], lam[None, :]) * (density * w)[None, :]).sum(axis=1)


def dark_pmf_with_decay(m: CountModel, nodes: int = 256, tol: float = 1e-12) -> DarkPMF:
    """Count distribution of a shelved ion that may decay during detection.

    With probability exp(-T/tau) the ion stays dark and counts are
    Poisson(dark_mean).  A decay at time t adds bright counts for the rest of
    the window, Poisson(dark_mean + bright_mean*(T-t)/T); that branch is
    integrated over t with composite Gauss-Legendre quadrature, checked
    against a rule with twice the nodes.
    """
    n = np.arange(count_support(m) + 1)
    stay = m.survival * poisson.pmf(n, m.dark_mean)
    if m.decay_probability == 0.0:
        decay = np.zeros_like(stay)
    else:
        decay = _decay_part(m, n, nodes)
        check = _decay_part(m, n, 2 * nodes)
        err = np.max(np.abs(decay - check))
        if err > tol:
            raise QuadratureError(f"decay quadrature not converged (diff {err:.2e})")
        decay = check
    pmf = stay + decay
    if abs(pmf.sum() - 1.0) > 1e-10:
        raise QuadratureError(f"pmf normalization off by {pmf.sum() - 1.0:.2e}")
    return DarkPMF(pmf, float(stay.sum()), float(decay.sum()))


def bright_pmf(m: CountModel) -> np.ndarray:
    return poisson.pmf(np.arange(count_support(m) + 1), m.bright_mean)


def dark_mean_closed_form(m: CountModel) -> float:
    a = m.window / m.lifetime
    frac = -math.expm1(-a) - (1.0 - math.exp(-a) * (1.0 + a)) / a
    return m.dark_mean + m.bright_mean * frac


def sample_counts(state, m: CountModel, key, trials, counter: int = 0, dark: DarkPMF | None = None) -> np.ndarray:
    """Draw detected counts per trial.

    ``state`` is "bright", "shelved", or a boolean array (True = shelved).
    Each trial consumes counter slots ``counter`` .. ``counter + 2`` of its
    stream.
    """
    trials = np.asarray(trials, dtype=np.int64)
    n = trials.size
    if isinstance(state, str):
        shelved = np.full(n, state == SHELVED)
    else:
        shelved = np.asarray(state, dtype=bool)
    u0 = rngmod.uniform(key, trials, np.full(n, counter))
    out = np.empty(n, dtype=np.int64)

    b = ~shelved
    if b.any():
        out[b] = _inverse_cdf(bright_pmf(m), u0[b])
    if shelved.any():
        idx = np.nonzero(shelved)[0]
        u1 = rngmod.uniform(key, trials[idx], np.full(idx.size, counter + 1))
        decays = u1 < m.decay_probability
        stay = idx[~decays]
        out[stay] = _inverse_cdf(poisson.pmf(np.arange(count_support(m) + 1), m.dark_mean), u0[stay])
        dec = idx[decays]
        if dec.size:
            u2 = rngmod.uniform(key, trials[dec], np.full(dec.size, counter + 2))
            t = -m.lifetime * np.log1p(-u2 * m.decay_probability)
            lam = m.dark_mean + m.bright_mean * (m.window - t) / m.window
            out[dec] = poisson.ppf(u0[dec], lam).astype(np.int64)
    return out


def _inverse_cdf(pmf: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(pmf)
    cdf[-1] = np.inf
    return np.searchsorted(cdf, u, side="right")


@dataclass(frozen=True)
class ThresholdClassifier:
    """Counts at or below ``n_th`` are called shelved (dark)."""

    n_th: int = 12

    def __post_init__(self):
        if self.n_th < 0:
            raise ValueError("threshold must be non-negative")

    def classify(self, n):
        return classify(n, self)


def classify(n, c: ThresholdClassifier):
    if np.ndim(n) == 0:
        return SHELVED if n <= c.n_th else BRIGHT
    return np.asarray(n) <= c.n_th  # True where shelved


def threshold_error(m: CountModel, n_th: int, dark: DarkPMF | None = None) -> tuple[float, float]:
    """(bright read as dark, dark read as bright) for threshold ``n_th``."""
    dark = dark_pmf_with_decay(m) if dark is None else dark
    bright_as_dark = float(poisson.cdf(n_th, m.bright_mean))
    k = min(n_th, dark.pmf.size - 1)
    dark_as_bright = float(max(0.0, 1.0 - dark.pmf[: k + 1].sum()))
    return bright_as_dark, dark_as_bright


def threshold_sweep(m: CountModel, n_max: int | None = None) -> np.ndarray:
    """Rows of (n_th, bright-as-dark, dark-as-bright, average) for n_th = 0..n_max."""
    dark = dark_pmf_with_decay(m)
    n_max = count_support(m) if n_max is None else n_max
    rows = []
    for n in range(n_max + 1):
        a, b = threshold_error(m, n, dark)
        rows.append((n, a, b, 0.5 * (a + b)))
    return np.array(rows)


def optimal_threshold(m: CountModel, n_max: int | None = None) -> int:
    """Threshold minimizing the average error; ties go to the smaller n_th."""
    sweep = threshold_sweep(m, n_max)
    return int(sweep[int(np.argmin(sweep[:, 3])), 0])


@dataclass
class Histogram:
    """Occurrences per detected-count bin."""

    occurrences: np.ndarray

    def __post_init__(self):
        self.occurrences = np.asarray(self.occurrences, dtype=np.int64)
        if (self.occurrences < 0).any():
            raise ValueError("negative occurrences")

    @classmethod
    def from_counts(cls, counts, n_bins: int | None = None) -> "Histogram":
        counts = np.asarray(counts, dtype=np.int64)
        size = max(int(counts.max(initial=0)) + 1, n_bins or 0)
        return cls(np.bincount(counts, minlength=size))

    @property
    def total(self) -> int:
        return int(self.occurrences.sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["count", "occurrences"])
        for k, v in enumerate(self.occurrences):
            w.writerow([k, int(v)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Histogram":
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != ["count", "occurrences"]:
            raise ValueError("not a histogram CSV")
        data = {int(a): int(b) for a, b in rows[1:]}
        occ = np.zeros(max(data) + 1 if data else 0, dtype=np.int64)
        for k, v in data.items():
            occ[k] = v
        return cls(occ)


def pmf_csv(m: CountModel) -> str:
    dark = dark_pmf_with_decay(m)
    bright = bright_pmf(m)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["count", "bright_pmf", "shelved_pmf"])
    for k in range(dark.pmf.size):
        w.writerow([k, f"{bright[k]:.12e}", f"{dark.pmf[k]:.12e}"])
    return buf.getvalue()
