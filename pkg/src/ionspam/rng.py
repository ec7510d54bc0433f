"""Counter-based uniform random numbers.

Every draw is a pure function of ``(key, trial, counter)``: a SplitMix64
finalizer applied to the packed words.  Trials can therefore be split across
any number of workers, in any order, and still see identical numbers.
"""
from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)

# stream purposes, so that one master seed feeds independent sub-streams
PURPOSES = {
    "init": 1,
    "pulse": 2,
    "shelve": 3,
    "readout": 4,
    "background": 5,
    "spectroscopy": 6,
    "cycling": 7,
    "trajectory": 8,
    "aux": 9,
}


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def derive_key(seed: int, purpose: str | int) -> np.uint64:
    tag = PURPOSES[purpose] if isinstance(purpose, str) else int(purpose)
    with np.errstate(over="ignore"):
        z = np.uint64(seed % 2**64) * _GOLDEN + np.uint64(tag)
        return _mix(np.asarray(z, dtype=np.uint64))[()]


def uniform(key, trial, counter) -> np.ndarray:
    """Uniform doubles in the open interval (0, 1)."""
    trial = np.asarray(trial, dtype=np.uint64)
    counter = np.asarray(counter, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix(np.uint64(key) ^ (trial * _GOLDEN))
        z = _mix(z + counter * _M2 + _GOLDEN)
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 2**53)


class Stream:
    """One trial's random stream: successive calls advance its counter."""

    def __init__(self, seed: int, trial: int = 0, purpose: str = "trajectory"):
        self.key = derive_key(seed, purpose)
        self.trial = trial
        self.counter = 0

    def random(self, size: int | None = None):
        n = 1 if size is None else size
        out = uniform(self.key, np.full(n, self.trial), np.arange(self.counter, self.counter + n))
        self.counter += n
        return float(out[0]) if size is None else out
