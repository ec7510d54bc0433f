"""Microwave qubit rotations and composite pulse sequences.

Basis order is (|0>, |1>).  A hard-edged pulse with Rabi rate Omega, detuning
delta and phase phi rotates the Bloch vector by Omega' t about
(Omega cos phi, Omega sin phi, delta) / Omega', Omega' = sqrt(Omega^2 + delta^2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

TWO_PI = 2.0 * math.pi
_I2 = np.eye(2, dtype=complex)
_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class Rotation:
    theta: float
    phi: float

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError("rotation angle must be non-negative")
        object.__setattr__(self, "phi", self.phi % TWO_PI)


@dataclass(frozen=True)
class DriveParams:
    """Rabi rate and detuning in rad/s, duration in s, phase in rad."""

    rabi: float
    detuning: float = 0.0
    duration: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.rabi < 0 or self.duration < 0:
            raise ValueError("rabi rate and duration must be non-negative")


def rotation_unitary(d: DriveParams) -> np.ndarray:
    gen_rate = math.hypot(d.rabi, d.detuning)
    if gen_rate == 0.0 or d.duration == 0.0:
        return _I2.copy()
    n = np.array([d.rabi * math.cos(d.phase), d.rabi * math.sin(d.phase), d.detuning]) / gen_rate
    angle = gen_rate * d.duration
    ndotsigma = n[0] * _SX + n[1] * _SY + n[2] * _SZ
    return math.cos(angle / 2) * _I2 - 1j * math.sin(angle / 2) * ndotsigma


def compose(seq: Iterable[DriveParams]) -> np.ndarray:
    """Propagator of ``seq`` applied first-to-last."""
    u = _I2.copy()
    for d in seq:
        u = rotation_unitary(d) @ u
    return u


def transfer_probability(u: np.ndarray) -> float:
    return float(abs(u[1, 0]) ** 2)


def cp_robust_180() -> list[Rotation]:
    """Five pi pulses with phases (pi/6, 0, pi/2, 0, pi/6), in application order."""
    return [Rotation(math.pi, p) for p in (math.pi / 6, 0.0, math.pi / 2, 0.0, math.pi / 6)]


def single_pi() -> list[Rotation]:
    return [Rotation(math.pi, 0.0)]


def drives(seq: Sequence[Rotation], rabi: float, detuning: float = 0.0, area_scale: float = 1.0) -> list[DriveParams]:
    """Hard-edged pulses for ``seq`` sharing one Rabi rate and one detuning."""
    if rabi <= 0:
        raise ValueError("rabi rate must be positive")
    return [DriveParams(rabi, detuning, area_scale * r.theta / rabi, r.phi) for r in seq]


def sequence_transfer(seq: Sequence[Rotation], rabi: float, detuning: float = 0.0, area_scale: float = 1.0) -> float:
    return transfer_probability(compose(drives(seq, rabi, detuning, area_scale)))


@dataclass
class ScanCurve:
    x: np.ndarray
    composite: np.ndarray
    single: np.ndarray

    def rows(self):
        return zip(self.x.tolist(), self.composite.tolist(), self.single.tolist())


def detuning_scan(seq: Sequence[Rotation], rabi: float, deltas) -> ScanCurve:
    """Transfer probability vs detuning (rad/s) for ``seq`` and for a single pi pulse."""
    deltas = np.asarray(deltas, dtype=float)
    comp = np.array([sequence_transfer(seq, rabi, d) for d in deltas])
    single = np.array([sequence_transfer(single_pi(), rabi, d) for d in deltas])
    return ScanCurve(deltas, comp, single)


def area_scan(seq: Sequence[Rotation], rabi: float, scales) -> ScanCurve:
    """Transfer probability vs pulse-area scale factor at zero detuning."""
    scales = np.asarray(scales, dtype=float)
    comp = np.array([sequence_transfer(seq, rabi, 0.0, s) for s in scales])
    single = np.array([sequence_transfer(single_pi(), rabi, 0.0, s) for s in scales])
    return ScanCurve(scales, comp, single)


def asymmetry(curve: ScanCurve) -> float:
    """Largest |P(x) - P(-x)| over grid points whose mirror is also on the grid."""
    lookup = {round(x, 9): p for x, p in zip(curve.x, curve.composite)}
    diffs = [abs(p - lookup[round(-x, 9)]) for x, p in zip(curve.x, curve.composite) if round(-x, 9) in lookup]
    return max(diffs) if diffs else 0.0


def plateau_width(f, center: float, level: float = 0.99, step: float = 1e-3, limit: float = 10.0) -> float:
    """Width of the connected region around ``center`` where f >= level.

    Walks outward in steps of ``step`` until f drops below ``level``, then
    refines each edge with Brent's method.
    """
    if f(center) < level:
        return 0.0
    edges = []
    for sign in (1.0, -1.0):
        x = center
        while True:
            nxt = x + sign * step
            if abs(nxt - center) > limit:
                raise RuntimeError("plateau extends beyond search limit")
            if f(nxt) < level:
                edges.append(brentq(lambda y: f(y) - level, x, nxt, xtol=1e-12))
                break
            x = nxt
    return abs(edges[0] - edges[1])


def detuning_plateau(seq: Sequence[Rotation], level: float = 0.99) -> float:
    """P >= level plateau width in units of delta/Omega."""
    return plateau_width(lambda x: sequence_transfer(seq, 1.0, x), 0.0, level)


def area_plateau(seq: Sequence[Rotation], level: float = 0.99) -> float:
    """P >= level plateau width in units of pulse-area scale."""
    return plateau_width(lambda s: sequence_transfer(seq, 1.0, 0.0, s), 1.0, level)


def flatness(seq: Sequence[Rotation], h: float = 1e-4) -> tuple[float, float]:
    """One-sided finite-difference slopes dP/d(delta/Omega) at 0 and dP/d(scale) at 1."""
    p0 = sequence_transfer(seq, 1.0)
    d_delta = (sequence_transfer(seq, 1.0, h) - p0) / h
    d_area = (sequence_transfer(seq, 1.0, 0.0, 1.0 + h) - p0) / h
    return d_delta, d_area


def integrate_schrodinger(d: DriveParams, psi0, steps: int = 4000) -> np.ndarray:
    """Fixed-step RK4 solution of i dpsi/dt = H psi for one hard-edged pulse."""
    h_mat = 0.5 * (d.rabi * (math.cos(d.phase) * _SX + math.sin(d.phase) * _SY) + d.detuning * _SZ)
    psi = np.asarray(psi0, dtype=complex).copy()
    if d.duration == 0:
        return psi
    dt = d.duration / steps
    f = lambda y: -1j * (h_mat @ y)  # noqa: E731
    for _ in range(steps):
        k1 = f(psi)
        k2 = f(psi + 0.5 * dt * k1)
        k3 = f(psi + 0.5 * dt * k2)
        k4 = f(psi + dt * k3)
        psi = psi + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return psi


def with_phase_error(seq: Sequence[Rotation], dphi: float) -> list[Rotation]:
    return [replace(r, phi=r.phi + dphi) for r in seq]
