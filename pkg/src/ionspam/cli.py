"""Command-line front end.

Every subcommand reads the shared TOML config (``--config`` or
``$IONSPAM_CONFIG``), applies flag overrides, and writes its outputs to
``--out``.  Each output embeds the seed and the hash of the effective config;
manifest.json additionally records a timestamp and is the only output that
changes between identical runs.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, atom_from_config, config_hash, get, load_config, section, to_toml
from .experiment import (
    SpamConfig,
    budget_csv,
    budget_text,
    budget_total,
    error_budget,
    qubit_capacity,
    run_spam,
)
from .pulse import (
    area_plateau,
    area_scan,
    asymmetry,
    cp_robust_180,
    detuning_plateau,
    detuning_scan,
    flatness,
    sequence_transfer,
    single_pi,
)
from .scenarios import MODES, SCHEMES, simulate_cycling_readout, simulate_shelving
from .spectroscopy import KINDS, run_spectroscopy

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_EXISTS = 0, 2, 3, 4


class OutputExists(RuntimeError):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


class Outputs:
    """Collects files for one run and writes them together, refusing to clobber."""

    def __init__(self, out: Path, force: bool, seed: int, chash: str):
        self.out, self.force, self.seed, self.chash = out, force, seed, chash
        self.files: dict[str, str] = {}

    @property
    def stamp(self) -> str:
        return f"# seed={self.seed} config_hash={self.chash}\n"

    def csv(self, name: str, body: str):
        self.files[name] = self.stamp + body

    def json(self, name: str, record: dict):
        rec = dict(record)
        rec["seed"] = self.seed
        rec["config_hash"] = self.chash
        self.files[name] = _dump(rec)

    def text(self, name: str, body: str):
        self.files[name] = body

    def write(self, command: str, config_path) -> list[Path]:
        names = list(self.files) + ["manifest.json"]
        if not self.force:
            clash = [n for n in names if (self.out / n).exists()]
            if clash:
                raise OutputExists(f"refusing to overwrite {', '.join(clash)} in {self.out} (use --force)")
        self.out.mkdir(parents=True, exist_ok=True)
        self.files["manifest.json"] = _dump({
            "subcommand": command,
            "config_path": None if config_path is None else str(config_path),
            "seed": self.seed,
            "config_hash": self.chash,
            "output_dir": str(self.out),
            "version": __version__,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "files": sorted(self.files),
        })
        paths = []
        for name, body in self.files.items():
            p = self.out / name
            p.write_text(body)
            paths.append(p)
        return paths


# flag -> config path; "{kind}" is the resolved spectroscopy scan kind
OVERRIDES = {
    "pulse-scan": [("rabi_khz", "pulse.scan_rabi_khz"), ("scan", "pulse.scan"), ("points", "pulse.points"),
                   ("span_khz", "pulse.span_khz")],
    "shelve": [("scheme", "shelving.scheme"), ("start", "shelving.start"), ("mode", "shelving.mode"),
               ("trials", "shelving.trials"), ("duration", "shelving.duration")],
    "spam": [("mode", "spam.mode"), ("trials", "spam.trials_0"), ("trials", "spam.trials_1")],
    "spectroscopy": [("kind", "spectroscopy.kind"), ("trials", "spectroscopy.trials"),
                     ("start_mhz", "spectroscopy.{kind}.start_mhz"), ("stop_mhz", "spectroscopy.{kind}.stop_mhz"),
                     ("step_mhz", "spectroscopy.{kind}.step_mhz"), ("saturation", "spectroscopy.{kind}.saturation")],
    "cycling": [("trials", "cycling.trials")],
}


def _effective(args) -> dict:
    """Config file (or defaults) with command-line flags written over it."""
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    for attr, path in OVERRIDES.get(args.command, []):
        value = getattr(args, attr, None)
        if value is None:
            continue
        if "{kind}" in path:
            path = path.format(kind=cfg["spectroscopy"]["kind"])
        *head, last = path.split(".")
        node = cfg
        for k in head:
            node = node.setdefault(k, {})
        node[last] = value
    if getattr(args, "no_noise", False):
        cfg["spectroscopy"]["noise"] = False
    return cfg


def _echo(cfg) -> dict:
    return {k: v for k, v in cfg.items() if k != "workers"}


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


# -- subcommands -----------------------------------------------------------------


def cmd_pulse_scan(args, cfg, out: Outputs):
    sec = section(cfg, "pulse")
    rabi_khz = float(get(sec, "scan_rabi_khz", "pulse"))
    if rabi_khz <= 0:
        raise ConfigError("rabi frequency must be positive")
    points = int(get(sec, "points", "pulse"))
    if points < 1:
        raise ConfigError("pulse.points must be positive")
    kind = get(sec, "scan", "pulse")
    rabi = 2 * math.pi * 1e3 * rabi_khz
    seq = cp_robust_180()
    if kind == "detuning":
        span = float(get(sec, "span_khz", "pulse"))
        x_khz = np.linspace(-span, span, points) if points > 1 else np.zeros(1)
        curve = detuning_scan(seq, rabi, 2 * math.pi * 1e3 * x_khz)
        header, xs = "detuning_kHz", x_khz
    elif kind == "area":
        xs = np.linspace(0.0, 2.0, points) if points > 1 else np.ones(1)
        curve = area_scan(seq, rabi, xs)
        header = "area_scale"
    else:
        raise ConfigError(f"unknown scan {kind!r}")
    lines = [f"{header},p_composite,p_single"]
    lines += [f"{x:.6f},{c:.12f},{s:.12f}" for x, c, s in zip(xs, curve.composite, curve.single)]
    out.csv("pulse_scan.csv", "\n".join(lines) + "\n")
    d_delta, d_area = flatness(seq)
    out.json("pulse_scan.json", {
        "scan": kind,
        "rabi_khz": rabi_khz,
        "points": points,
        "p_operating_point": sequence_transfer(seq, rabi),
        "asymmetry": asymmetry(curve) if kind == "detuning" else None,
        "plateau_99": {
            "detuning_over_rabi": {"composite": detuning_plateau(seq), "single": detuning_plateau(single_pi())},
            "area_scale": {"composite": area_plateau(seq), "single": area_plateau(single_pi())},
        },
        "flatness": {"dP_d(delta/rabi)": d_delta, "dP_d(scale)": d_area},
    })


def cmd_shelve(args, cfg, out: Outputs):
    sec = section(cfg, "shelving")
    res = simulate_shelving(cfg, start=get(sec, "start", "shelving"), mode=get(sec, "mode", "shelving"),
                            trials=int(get(sec, "trials", "shelving")))
    rec = res.to_record()
    rec["infidelity"] = 1 - res.value
    out.json("shelve.json", rec)


def cmd_spam(args, cfg, out: Outputs):
    sc = SpamConfig.from_config(cfg)
    rep = run_spam(cfg, sc, workers=args.workers)
    rec = rep.to_record()
    rec.pop("config_hash")
    out.json("spam_report.json", rec)
    out.csv("histogram_0.csv", rep.histogram_0.to_csv())
    out.csv("histogram_1.csv", rep.histogram_1.to_csv())
    out.text("budget.txt", budget_text(rep.budget, out.seed, out.chash))
    out.text("budget.csv", budget_csv(rep.budget, out.seed, out.chash))


def cmd_spectroscopy(args, cfg, out: Outputs):
    sec = section(cfg, "spectroscopy")
    kind = get(sec, "kind", "spectroscopy")
    if kind not in KINDS:
        raise ConfigError(f"unknown scan kind {kind!r}")
    grid_sec = get(sec, kind, "spectroscopy")
    pick = lambda key: float(get(grid_sec, key, f"spectroscopy.{kind}"))  # noqa: E731
    start, stop, step = pick("start_mhz"), pick("stop_mhz"), pick("step_mhz")
    if step <= 0 or stop <= start:
        raise ConfigError("scan grid needs step > 0 and stop > start")
    grid = np.arange(start, stop + 0.5 * step, step)
    if grid.size < 4:
        raise ConfigError("scan grid needs at least 4 points to fit")
    trials = int(get(sec, "trials", "spectroscopy"))
    if trials < 1:
        raise ConfigError("spectroscopy.trials must be positive")
    noise = bool(get(sec, "noise", "spectroscopy"))
    run = run_spectroscopy(
        atom_from_config(cfg), kind, grid, trials=trials,
        duration=float(get(sec, "duration", "spectroscopy")),
        saturation=pick("saturation"),
        half_window=float(get(grid_sec, "half_window_mhz", f"spectroscopy.{kind}")),
        seed=out.seed, noise=noise,
    )
    for label, data in run.scans.items():
        tag = label.replace("/", "").replace(" ", "_").replace("=", "")
        out.csv(f"scan_{tag}.csv", data.to_csv())
    rec = run.to_record()
    rec.update(noise=noise, trials=trials, grid={"start_mhz": start, "stop_mhz": stop, "step_mhz": step})
    out.json("spectroscopy_fit.json", rec)


def cmd_cycling(args, cfg, out: Outputs):
    out.json("cycling.json", simulate_cycling_readout(cfg).to_record())


def cmd_budget(args, cfg, out: Outputs):
    entries = error_budget(cfg)
    out.text("budget.txt", budget_text(entries, out.seed, out.chash))
    out.text("budget.csv", budget_csv(entries, out.seed, out.chash))
    out.json("budget.json", {"entries": [e.__dict__ for e in entries], "total": budget_total(entries)})


def cmd_capacity(args, cfg, out: Outputs):
    if args.eps is None:
        eps = budget_total(error_budget(cfg))
        source = "budget total"
    else:
        eps = args.eps
        source = "argument"
    try:
        n = qubit_capacity(eps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out.json("capacity.json", {"eps": eps, "source": source, "max_qubits": n})
    print(n)


def cmd_write_config(args, cfg, out: Outputs):
    out.text("config.toml", to_toml(cfg))


COMMANDS = {
    "pulse-scan": cmd_pulse_scan,
    "shelve": cmd_shelve,
    "spam": cmd_spam,
    "spectroscopy": cmd_spectroscopy,
    "cycling": cmd_cycling,
    "budget": cmd_budget,
    "capacity": cmd_capacity,
    "write-config": cmd_write_config,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ionspam", description="133Ba+ hyperfine qubit SPAM simulator")
    p.add_argument("--version", action="version", version=f"ionspam {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config (default: $IONSPAM_CONFIG, then built-in defaults)")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--workers", type=_positive_int, default=1, help="parallel workers (results do not depend on it)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("pulse-scan", parents=[common], help="CP Robust 180 vs single pi transfer scans")
    s.add_argument("--rabi-khz", type=float)
    s.add_argument("--scan", choices=("detuning", "area"))
    s.add_argument("--points", type=_positive_int)
    s.add_argument("--span-khz", type=float)

    s = sub.add_parser("shelve", parents=[common], help="shelving fidelity into D5/2")
    s.add_argument("--scheme", choices=SCHEMES)
    s.add_argument("--start", help='"qubit0", "qubit1" or e.g. "S1/2:F=1"')
    s.add_argument("--mode", choices=MODES)
    s.add_argument("--trials", type=_positive_int)
    s.add_argument("--duration", type=float)

    s = sub.add_parser("spam", parents=[common], help="full SPAM pipeline")
    s.add_argument("--mode", choices=MODES)
    s.add_argument("--trials", type=_positive_int, help="trials per state")

    s = sub.add_parser("spectroscopy", parents=[common], help="455/614 line scans and fits")
    s.add_argument("--kind", choices=KINDS)
    s.add_argument("--trials", type=_positive_int)
    s.add_argument("--start-mhz", type=float)
    s.add_argument("--stop-mhz", type=float)
    s.add_argument("--step-mhz", type=float)
    s.add_argument("--saturation", type=float)
    s.add_argument("--no-noise", action="store_true", help="use exact shelved fractions")

    s = sub.add_parser("cycling", parents=[common], help="hyperfine-selective cycling readout baseline")
    s.add_argument("--trials", type=_positive_int, help="trials per state")

    sub.add_parser("budget", parents=[common], help="SPAM error budget")

    s = sub.add_parser("capacity", parents=[common], help="register size allowed by a per-qubit error")
    s.add_argument("eps", nargs="?", type=float, help="per-qubit error (default: budget total)")

    sub.add_parser("write-config", parents=[common], help="write the effective config as TOML")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _effective(args)
        chash = config_hash(_echo(cfg))
        out = Outputs(Path(args.out), args.force, int(cfg["seed"]), chash)
        COMMANDS[args.command](args, cfg, out)
        paths = out.write(args.command, args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OutputExists as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXISTS
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for p in paths:
        print(p, file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
