"""Acceptance checks 1-10, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python tests/test_acceptance.py``.  The printed lines show the measured
value next to the bar it is held to.
"""
import contextlib
import copy
import math
import time

import numpy as np
import pytest

from ionspam.cli import main as cli_main
from ionspam.config import DEFAULTS
from ionspam.experiment import (
    error_budget,
    paren,
    run_spam,
    wald_sigma,
    wilson_coverage,
)
from ionspam.atom import AtomSpec
from ionspam.pulse import area_plateau, cp_robust_180, detuning_plateau, flatness, sequence_transfer, single_pi
from ionspam.readout import CountModel, dark_pmf_with_decay
from ionspam.scenarios import analytic_bare_limit, simulate_cycling_readout, simulate_shelving
from ionspam.spectroscopy import run_spectroscopy

RESULTS = {}


def report(n: int, ok: bool, detail: str, capsys):
    line = f"CRITERION {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = ok
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


class _Plain:
    """Stand-in for the capsys fixture when run as a script."""

    def disabled(self):
        return contextlib.nullcontext()


def within_factor(x, target, f=2.0):
    return target / f <= x <= target * f


@pytest.fixture
def cfg():
    return copy.deepcopy(DEFAULTS)


def test_criterion_01_bare_shelving(cfg, capsys):
    t = time.perf_counter()
    r = simulate_shelving(cfg, scheme="bare-455", mode="jump", trials=100_000)
    dt = time.perf_counter() - t
    quotient = analytic_bare_limit(AtomSpec())
    ok = abs(r.value - 0.8846) <= 0.003 and abs(quotient - 0.23 / 0.26) < 1e-12 and dt < 5
    report(1, ok, f"F={r.value:.4f} (0.8846 +- 0.003), analytic {quotient:.4f}, {dt:.2f}s (<5s)", capsys)


def test_criterion_02_repumped_shelving(cfg, capsys):
    out = []
    ok = True
    for scheme, target in (("with-repumps", 1e-3), ("with-repumps-pi-pol", 2e-4)):
        t = time.perf_counter()
        r = simulate_shelving(cfg, scheme=scheme, mode="jump", trials=1_000_000)
        dt = time.perf_counter() - t
        eps = 1 - r.value
        ok &= within_factor(eps, target) and dt < 60
        out.append(f"{scheme}: 1-F={eps:.2e} (target {target:.0e} x/2), {dt:.1f}s")
    report(2, ok, "; ".join(out), capsys)


def test_criterion_03_decay_during_detection(capsys):
    d = dark_pmf_with_decay(CountModel())
    exact = 1 - math.exp(-4.5e-3 / 30)
    ok = abs(d.decay_weight - exact) <= 1e-10
    report(3, ok, f"decay weight {d.decay_weight:.10e} vs {exact:.10e} (|diff|<=1e-10)", capsys)


def test_criterion_04_composite_pulse(capsys):
    seq = cp_robust_180()
    p = sequence_transfer(seq, 1.0)
    dd, da = flatness(seq)
    wc, ws = detuning_plateau(seq), detuning_plateau(single_pi())
    ok = abs(p - 1) <= 1e-10 and abs(dd) < 1e-6 and abs(da) < 1e-6 and wc > ws
    report(4, ok, f"|1-P|={abs(1 - p):.1e}, dP/dd={dd:.1e}, dP/ds={da:.1e}, plateau {wc:.3f} > {ws:.3f} "
                  f"(area plateau {area_plateau(seq):.3f} vs {area_plateau(single_pi()):.3f})", capsys)


def test_criterion_05_full_spam(cfg, capsys):
    t = time.perf_counter()
    rep = run_spam(cfg)
    dt = time.perf_counter() - t
    n = rep.trials_0 + rep.trials_1

    def band(eps, sigma, target):
        return target / 2 - 3 * sigma <= eps <= 2 * target + 3 * sigma

    ok = (n == 313_792 and 0.9994 <= rep.fidelity <= 0.9999
          and band(rep.eps0, rep.sigma0, 1.9e-4) and band(rep.eps1, rep.sigma1, 3.8e-4) and dt < 60)
    report(5, ok, f"n={n}, F={paren(rep.fidelity, rep.fidelity_sigma)}, eps0={paren(rep.eps0, rep.sigma0)}, "
                  f"eps1={paren(rep.eps1, rep.sigma1)}, {dt:.1f}s", capsys)


def test_criterion_06_error_budget(cfg, capsys):
    entries = error_budget(cfg)
    table = (0.1e-4, 0.5e-4, 0.7e-4, 1.0e-4, 1.0e-4, 0.1e-4)
    total = sum(e.error for e in entries)
    ok = len(entries) == 6 and all(within_factor(e.error, t) for e, t in zip(entries, table)) and 2e-4 <= total <= 5e-4
    vals = ", ".join(f"{e.error * 1e4:.2f}" for e in entries)
    report(6, ok, f"entries ({vals})e-4 vs (0.1,0.5,0.7,1.0,1.0,0.1)e-4 x/2, total {total * 1e4:.2f}e-4 in [2,5]",
           capsys)


def test_criterion_07_spectroscopy(cfg, capsys):
    spec = AtomSpec()
    sp = cfg["spectroscopy"]
    lines = []
    ok = True
    for kind, truth in (("shelve-455", 623.0), ("deshelve-614", 83.0)):
        g = sp[kind]
        grid = np.arange(g["start_mhz"], g["stop_mhz"] + 0.5 * g["step_mhz"], g["step_mhz"])
        kw = dict(trials=sp["trials"], duration=sp["duration"], saturation=g["saturation"],
                  half_window=g["half_window_mhz"])
        clean = run_spectroscopy(spec, kind, grid, noise=False, **kw)
        noisy = run_spectroscopy(spec, kind, grid, seed=cfg["seed"], **kw)
        e_clean = abs(clean.splitting.value - truth)
        e_noisy = abs(noisy.splitting.value - truth)
        ok &= e_clean < 1 and e_noisy <= 30 and noisy.splitting.sigma <= 30
        lines.append(f"{kind}: noiseless {clean.splitting.value:.2f}, 200/pt {noisy.splitting.value:.1f}"
                     f"({noisy.splitting.sigma:.1f}) vs {truth:.0f}")
    report(7, ok, "; ".join(lines), capsys)


def test_criterion_08_statistics(capsys):
    n = 156_581
    k = round(1.9e-4 * n)
    s = paren(k / n, wald_sigma(k, n))
    cov = wilson_coverage(1.9e-4, n, draws=10_000, seed=1)
    ok = s.startswith("1.9(4)") and cov >= 0.93
    report(8, ok, f"Wald: {s} (want 1.9(4)e-04); Wilson 95% coverage {cov:.4f} (>=0.93)", capsys)


def test_criterion_09_cycling_baseline(cfg, capsys):
    r = simulate_cycling_readout(cfg)
    e0, e1 = r.details["eps0"], r.details["eps1"]
    ok = within_factor(e0, 3.03e-2) and within_factor(e1, 8.65e-2)
    report(9, ok, f"(eps0, eps1)=({e0:.4f}, {e1:.4f}) vs (0.0303, 0.0865) x/2, threshold {r.details['threshold']}",
           capsys)


def test_criterion_10_determinism(tmp_path, capsys):
    commands = [
        ["pulse-scan", "--points", "51"],
        ["shelve", "--trials", "20000"],
        ["spam", "--trials", "20000"],
        ["spectroscopy", "--kind", "deshelve-614"],
        ["cycling", "--trials", "20000"],
        ["budget"],
        ["capacity", "2.9e-4"],
    ]
    bad = []
    for cmd in commands:
        outs = []
        for i, w in enumerate(("1", "3", "1")):
            d = tmp_path / f"{cmd[0]}_{i}"
            assert cli_main(cmd + ["--out", str(d), "--workers", w, "--seed", "2024"]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"})
        if not (outs[0] == outs[1] == outs[2]):
            bad.append(cmd[0])
    report(10, not bad, f"{len(commands)} commands x 3 runs (workers 1/3/1) byte-identical"
                        + (f"; differing: {bad}" if bad else ""), capsys)


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    cap = _Plain()
    fresh = lambda: copy.deepcopy(DEFAULTS)  # noqa: E731
    tests = [
        lambda: test_criterion_01_bare_shelving(fresh(), cap),
        lambda: test_criterion_02_repumped_shelving(fresh(), cap),
        lambda: test_criterion_03_decay_during_detection(cap),
        lambda: test_criterion_04_composite_pulse(cap),
        lambda: test_criterion_05_full_spam(fresh(), cap),
        lambda: test_criterion_06_error_budget(fresh(), cap),
        lambda: test_criterion_07_spectroscopy(fresh(), cap),
        lambda: test_criterion_08_statistics(cap),
        lambda: test_criterion_09_cycling_baseline(fresh(), cap),
        lambda: test_criterion_10_determinism(Path(tempfile.mkdtemp()), cap),
    ]
    for t in tests:
        try:
            t()
        except AssertionError:
            pass
    print(f"{sum(RESULTS.values())}/{len(RESULTS)} criteria passed")
