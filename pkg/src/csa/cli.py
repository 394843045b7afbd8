"""``csa`` command line: analysis, simulation and design subcommands.

Primary outputs go to stdout, or into ``--out DIR`` together with a
``<name>.meta.json`` sidecar holding the timestamp. Exit status 0 on
success, 2 on configuration errors, 3 on numeric failures.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import math
import sys
from fractions import Fraction
from pathlib import Path
from typing import Any

from . import __version__
from .capacity import CapacityPoint, bound_csv, capacity_bound
from .de_analysis import exit_chart, stability_bound, threshold
from .ensemble import (
    distribution_from_json,
    enumerate_random_ensemble,
    sample_random_ensemble,
)
from .frame_sim import CampaignConfig, run_campaign
from .optimizer import DesignProblem, optimize

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(Exception):
    pass


def sig6(obj: Any) -> Any:
    """Round every float in a JSON-able structure to 6 significant digits."""
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
        return float(f"{obj:.6g}")
    if isinstance(obj, dict):
        return {k: sig6(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sig6(v) for v in obj]
    return obj


def config_hash(doc: Any) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _read_json(path: str | None) -> Any:
    if not path:
        raise ConfigError("--config PATH is required")
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc.msg}, line {exc.lineno})") from None


class Output:
    def __init__(self, out_dir: str | None, command: str, chash: str):
        self.dir = Path(out_dir) if out_dir else None
        self.command = command
        self.chash = chash
        self.files: list[str] = []
        if self.dir is not None:
            try:
                self.dir.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise ConfigError(f"output directory {out_dir}: {exc.strerror}") from None

    def emit(self, name: str, text: str) -> None:
        if self.dir is None:
            sys.stdout.write(text if text.endswith("\n") else text + "\n")
            return
        (self.dir / name).write_text(text)
        self.files.append(name)

    def emit_json(self, name: str, obj: Any) -> None:
        self.emit(name, json.dumps(sig6(obj), indent=2, sort_keys=True) + "\n")

    def finish(self) -> None:
        if self.dir is None:
            return
        meta = {
            "command": self.command,
            "config_hash": self.chash,
            "files": self.files,
            "version": __version__,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }
        (self.dir / f"{self.command}.meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def _distribution(args):
    doc = _read_json(args.config)
    return doc, distribution_from_json(doc)


def cmd_threshold(args, out_dir) -> int:
    doc, dist = _distribution(args)
    tol = args.tolerance or 1e-4
    res = threshold(dist, tol)
    out = Output(out_dir, "threshold", config_hash({"dist": doc, "tolerance": tol}))
    out.emit_json("threshold.json", {**res.to_dict(), "rate": dist.rate})
    out.finish()
    return EXIT_OK


def cmd_stability(args, out_dir) -> int:
    doc, dist = _distribution(args)
    out = Output(out_dir, "stability", config_hash(doc))
    out.emit_json("stability.json", {
        "stability_bound": stability_bound(dist),
        "b2_mean": dist.b2_mean,
        "k": dist.k,
        "rate": dist.rate,
    })
    out.finish()
    return EXIT_OK


def _parse_rate(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"bad rate {text!r}") from None


def cmd_bound(args, out_dir) -> int:
    if args.rates:
        rates = [_parse_rate(r) for r in args.rates.split(",") if r.strip()]
    elif args.config:
        doc = _read_json(args.config)
        raw = doc.get("rates") if isinstance(doc, dict) else doc
        if not isinstance(raw, list):
            raise ConfigError("bound config needs a list of rates")
        rates = [_parse_rate(str(r)) for r in raw]
    else:
        raise ConfigError("give --rates or --config")
    points, status = [], EXIT_OK
    for R in rates:
        try:
            points.append(CapacityPoint(R, capacity_bound(R)))
        except ValueError as exc:
            print(f"error: R={R:g}: {exc}", file=sys.stderr)
            status = EXIT_CONFIG
    chash = config_hash(rates)
    out = Output(out_dir, "bound", chash)
    out.emit("bound.csv", bound_csv(points, comment=f"config_hash={chash}"))
    out.finish()
    return status


def cmd_exit_chart(args, out_dir) -> int:
    doc, dist = _distribution(args)
    if args.load is None:
        raise ConfigError("--load G is required")
    chart = exit_chart(dist, args.load, args.samples)
    chash = config_hash({"dist": doc, "G": args.load, "samples": args.samples})
    out = Output(out_dir, "exit-chart", chash)
    out.emit("exit_chart.csv", chart.to_csv(comment=f"config_hash={chash}"))
    if out.dir is not None:
        out.emit_json("exit_chart.json", {
            "G": chart.G, "rate": chart.R, "area_b": chart.area_b, "area_s": chart.area_s,
        })
    out.finish()
    return EXIT_OK


def cmd_simulate(args, out_dir) -> int:
    doc = _read_json(args.config)
    if not isinstance(doc, dict):
        raise ConfigError("campaign config must be a JSON object")
    if args.seed is not None:
        doc = {**doc, "seed": args.seed}
    cfg = CampaignConfig.from_dict(doc, base=Path(args.config).parent)
    report = run_campaign(cfg, workers=args.workers)
    chash = config_hash(doc)
    out = Output(out_dir, "simulate", chash)
    out.emit("campaign.csv", report.to_csv(comment=f"config_hash={chash}"))
    if out.dir is not None:
        out.emit_json("campaign.json", report.to_dict())
    out.finish()
    return EXIT_OK


def cmd_optimize(args, out_dir) -> int:
    doc = _read_json(args.config)
    if not isinstance(doc, dict):
        raise ConfigError("design problem must be a JSON object")
    if args.seed is not None:
        doc = {**doc, "seed": args.seed}
    problem = DesignProblem.from_dict(doc)
    res = optimize(problem, args.tolerance or 1e-4)
    chash = config_hash(doc)
    out = Output(out_dir, "optimize", chash)
    out.emit_json("design.json", res.to_dict())
    if out.dir is not None:
        out.emit("trajectory.csv", res.trajectory_csv(comment=f"config_hash={chash}"))
    out.finish()
    return EXIT_OK


def cmd_ensemble(args, out_dir) -> int:
    if args.n is None or args.k is None:
        raise ConfigError("--n and --k are required")
    if args.samples:
        exp = sample_random_ensemble(args.n, args.k, args.samples, seed=args.seed or 0)
    else:
        exp = enumerate_random_ensemble(args.n, args.k)
    out = Output(out_dir, "ensemble", config_hash([args.n, args.k, args.samples, args.seed]))
    out.emit_json("ensemble.json", exp.to_dict())
    out.finish()
    return EXIT_OK


COMMANDS = {
    "threshold": cmd_threshold,
    "stability": cmd_stability,
    "bound": cmd_bound,
    "exit-chart": cmd_exit_chart,
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "ensemble": cmd_ensemble,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="input JSON file")
    common.add_argument("--out", help="output directory (default: stdout)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--tolerance", type=float, default=None)

    ap = argparse.ArgumentParser(prog="csa", description="Coded slotted ALOHA toolkit")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("threshold", parents=[common], help="density-evolution threshold")
    sub.add_parser("stability", parents=[common], help="stability upper bound")
    p = sub.add_parser("bound", parents=[common], help="capacity bound over rates")
    p.add_argument("--rates", help="comma separated rates, fractions allowed")
    p = sub.add_parser("exit-chart", parents=[common], help="EXIT chart table")
    p.add_argument("--load", type=float)
    p.add_argument("--samples", type=int, default=101)
    sub.add_parser("simulate", parents=[common], help="Monte Carlo campaign")
    sub.add_parser("optimize", parents=[common], help="distribution design")
    p = sub.add_parser("ensemble", parents=[common], help="random-code ensemble expectations")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--samples", type=int, default=0)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args, args.out)
    except (ConfigError, ValueError) as exc:
        # DistributionError, CodeError and FrameError are ValueErrors too
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, AssertionError, RuntimeError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
